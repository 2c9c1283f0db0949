/// Schlick's approximation of Fresnel reflectance at an air/medium interface.
pub fn schlick_fresnel(cos_theta: f64, ior: f64) -> f64 {
    let r0 = normal_reflectance(ior);
    let m = (1.0 - cos_theta.clamp(0.0, 1.0)).powi(5);
    r0 + (1.0 - r0) * m
}

/// Reflectance at normal incidence, ((1 − n) / (1 + n))².
pub fn normal_reflectance(ior: f64) -> f64 {
    ((1.0 - ior) / (1.0 + ior)).powi(2)
}
