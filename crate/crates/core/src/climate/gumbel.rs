//! Robust surface depth along a ray: depth samples are grouped front to back
//! into weighted Gumbel clusters, and the heaviest cluster's location wins.
//!
//! A sample joins the open cluster while the cluster's Gumbel density at the
//! sample is at least [`DENSITY_THRESHOLD`]; otherwise the cluster is closed
//! and a new one is seeded at the sample. Cluster weights accumulate α·T with
//! T the transmittance in front of the sample.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::raster::PixelSample;

pub const INITIAL_BETA: f64 = 0.2;
pub const BETA_MIN: f64 = 1e-3;
pub const DENSITY_THRESHOLD: f64 = 0.5;

/// Running weighted statistics of one open cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelCluster {
    pub mu: f64,
    pub beta: f64,
    /// Accumulated α·T of member samples.
    pub weight: f64,
    samples: usize,
    mean_sq_dev: f64,
    first: usize,
}

impl GumbelCluster {
    fn seed(x: f64, index: usize) -> Self {
        GumbelCluster { mu: x, beta: INITIAL_BETA, weight: 0.0, samples: 0, mean_sq_dev: 0.0, first: index }
    }

    /// Gumbel density at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        gumbel_pdf(x, self.mu, self.beta)
    }

    /// Weighted incremental (West) update of the mean and variance.
    fn add(&mut self, x: f64, w: f64) {
        self.samples += 1;
        let total = self.weight + w;
        if total > 0.0 {
            let delta = x - self.mu;
            self.mu += delta * w / total;
            self.mean_sq_dev += w * delta * (x - self.mu);
        }
        self.weight = total;
        // a single sample carries no spread information yet
        if self.samples >= 2 && self.weight > 0.0 {
            let std = (self.mean_sq_dev.max(0.0) / self.weight).sqrt();
            self.beta = (6f64.sqrt() / PI * std).max(BETA_MIN);
        }
    }
}

pub fn gumbel_pdf(x: f64, mu: f64, beta: f64) -> f64 {
    let z = (x - mu) / beta;
    let e = (-z).exp();
    (1.0 / beta) * e * (-e).exp()
}

/// The selected cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelFit {
    pub depth: f64,
    pub weight: f64,
    pub beta: f64,
    /// Sample index range `first..=last` of the cluster.
    pub first: usize,
    pub last: usize,
}

/// Clusters `samples` (ascending depth) and returns the heaviest cluster, or
/// `None` for an empty list.
pub fn gumbel_fit(samples: &[PixelSample]) -> Option<GumbelFit> {
    let mut best: Option<GumbelFit> = None;
    let mut transmittance = 1.0;
    let mut current: Option<GumbelCluster> = None;

    let close = |c: &GumbelCluster, last: usize, best: &mut Option<GumbelFit>| {
        if best.is_none_or(|b| b.weight <= c.weight) {
            *best = Some(GumbelFit { depth: c.mu, weight: c.weight, beta: c.beta, first: c.first, last });
        }
    };

    for (t, s) in samples.iter().enumerate() {
        let x = s.depth;
        let cluster = match current.as_mut() {
            Some(c) if c.pdf(x) >= DENSITY_THRESHOLD => c,
            _ => {
                if let Some(c) = current.take() {
                    close(&c, t - 1, &mut best);
                }
                current.insert(GumbelCluster::seed(x, t))
            }
        };
        cluster.add(x, s.alpha * transmittance);
        transmittance *= 1.0 - s.alpha;
    }
    if let Some(c) = current {
        close(&c, samples.len() - 1, &mut best);
    }
    best
}

/// Surface depth and its cluster weight; `(0, 0)` for an empty list.
pub fn gumbel_depth(samples: &[PixelSample]) -> (f64, f64) {
    gumbel_fit(samples).map_or((0.0, 0.0), |f| (f.depth, f.weight))
}

/// Alpha-blended expected depth Σ T_i α_i d_i over the same samples.
pub fn blended_depth(samples: &[PixelSample]) -> f64 {
    let mut t = 1.0;
    let mut d = 0.0;
    for s in samples {
        d += t * s.alpha * s.depth;
        t *= 1.0 - s.alpha;
    }
    d
}
