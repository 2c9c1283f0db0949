//! Binary little-endian PLY in the layout written by the reference Gaussian
//! splatting trainer: `x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3`.
//!
//! Opacity is stored as a logit and scale as a log; both are activated on load.
//! `f_rest_*` is channel-major: all red coefficients of bands 1..=3, then green,
//! then blue.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::sh::{coeffs_for_degree, degree_from_coeffs, ShCoeffs};
use super::{Gaussian, GaussianScene, SceneError, SplatKind};

const MIN_SCALE: f64 = 1e-8;
const OPACITY_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Pos(usize),
    Normal,
    Dc(usize),
    Rest(usize),
    Opacity,
    Scale(usize),
    Rot(usize),
}

fn parse_field(name: &str) -> Option<Field> {
    let indexed = |prefix: &str, limit: usize| -> Option<usize> {
        name.strip_prefix(prefix)?.parse::<usize>().ok().filter(|&i| i < limit)
    };
    Some(match name {
        "x" => Field::Pos(0),
        "y" => Field::Pos(1),
        "z" => Field::Pos(2),
        "nx" | "ny" | "nz" => Field::Normal,
        "opacity" => Field::Opacity,
        _ => {
            if let Some(i) = indexed("f_dc_", 3) {
                Field::Dc(i)
            } else if let Some(i) = indexed("f_rest_", 45) {
                Field::Rest(i)
            } else if let Some(i) = indexed("scale_", 3) {
                Field::Scale(i)
            } else if let Some(i) = indexed("rot_", 4) {
                Field::Rot(i)
            } else {
                return None;
            }
        }
    })
}

fn load_err(msg: impl Into<String>) -> SceneError {
    SceneError::Load(msg.into())
}

struct Header {
    count: usize,
    fields: Vec<Field>,
    rest_count: usize,
}

fn read_header<R: BufRead>(reader: &mut R) -> Result<Header, SceneError> {
    let mut line = String::new();
    let mut next_line = |reader: &mut R| -> Result<String, SceneError> {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            return Err(load_err("header: unexpected end of file before end_header"));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };

    if next_line(reader)? != "ply" {
        return Err(load_err("header: missing 'ply' magic"));
    }
    let mut count = None;
    let mut fields = Vec::new();
    let mut names = Vec::new();
    let mut in_vertex = false;
    loop {
        let l = next_line(reader)?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            ["comment", ..] | ["obj_info", ..] => continue,
            ["format", fmt, version] => {
                if *fmt != "binary_little_endian" || *version != "1.0" {
                    return Err(load_err(format!("header: unsupported format '{fmt} {version}'")));
                }
            }
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err(load_err("header: duplicate element 'vertex'"));
                }
                let n = n.parse::<usize>().map_err(|_| load_err(format!("header: bad vertex count '{n}'")))?;
                count = Some(n);
                in_vertex = true;
            }
            ["element", name, ..] => {
                return Err(load_err(format!("header: unknown element '{name}'")));
            }
            ["property", ty, name] => {
                if !in_vertex {
                    return Err(load_err(format!("header: property '{name}' outside element 'vertex'")));
                }
                if *ty != "float" && *ty != "float32" {
                    return Err(load_err(format!("header: property '{name}' has type '{ty}', expected float")));
                }
                let field = parse_field(name).ok_or_else(|| load_err(format!("header: unknown property '{name}'")))?;
                if names.iter().any(|n| n == name) {
                    return Err(load_err(format!("header: duplicate property '{name}'")));
                }
                names.push(name.to_string());
                fields.push(field);
            }
            ["property", ..] => return Err(load_err(format!("header: malformed property line '{l}'"))),
            ["end_header"] => break,
            _ => return Err(load_err(format!("header: unrecognized line '{l}'"))),
        }
    }
    let count = count.ok_or_else(|| load_err("header: missing element 'vertex'"))?;

    for (name, field) in [
        ("x", Field::Pos(0)),
        ("y", Field::Pos(1)),
        ("z", Field::Pos(2)),
        ("f_dc_0", Field::Dc(0)),
        ("f_dc_1", Field::Dc(1)),
        ("f_dc_2", Field::Dc(2)),
        ("opacity", Field::Opacity),
        ("scale_0", Field::Scale(0)),
        ("scale_1", Field::Scale(1)),
        ("scale_2", Field::Scale(2)),
        ("rot_0", Field::Rot(0)),
        ("rot_1", Field::Rot(1)),
        ("rot_2", Field::Rot(2)),
        ("rot_3", Field::Rot(3)),
    ] {
        if !fields.contains(&field) {
            return Err(load_err(format!("header: missing property '{name}'")));
        }
    }
    let rest_count = fields.iter().filter(|f| matches!(f, Field::Rest(_))).count();
    if degree_from_coeffs(rest_count / 3 + 1).is_none() || rest_count % 3 != 0 {
        return Err(load_err(format!("header: {rest_count} f_rest properties, expected 0, 9, 24 or 45")));
    }
    for i in 0..rest_count {
        if !fields.contains(&Field::Rest(i)) {
            return Err(load_err(format!("header: missing property 'f_rest_{i}'")));
        }
    }
    Ok(Header { count, fields, rest_count })
}

/// Reads a scene from any byte source in the binary point-cloud layout.
pub fn read_scene<R: Read>(reader: R) -> Result<GaussianScene, SceneError> {
    let mut reader = BufReader::new(reader);
    let header = read_header(&mut reader)?;
    let stride = header.fields.len() * 4;
    let rest_per_channel = header.rest_count / 3;
    let degree = degree_from_coeffs(rest_per_channel + 1).unwrap_or(0);

    let mut record = vec![0u8; stride];
    let mut values = vec![0f32; header.fields.len()];
    let mut gaussians = Vec::with_capacity(header.count);
    let mut clamped = 0usize;
    for index in 0..header.count {
        reader.read_exact(&mut record).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                load_err(format!(
                    "payload truncated at vertex {index} of {} ({stride} bytes per vertex)",
                    header.count
                ))
            } else {
                SceneError::Io(e)
            }
        })?;
        for (v, chunk) in values.iter_mut().zip(record.chunks_exact(4)) {
            *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }

        let mut pos = Vector3::zeros();
        let mut dc = Vector3::zeros();
        let mut rest = [0.0f64; 45];
        let mut logit = 0.0;
        let mut log_scale = Vector3::zeros();
        let mut rot = [0.0f64; 4];
        for (field, &v) in header.fields.iter().zip(values.iter()) {
            let v = v as f64;
            match *field {
                Field::Pos(i) => pos[i] = v,
                Field::Normal => {}
                Field::Dc(i) => dc[i] = v,
                Field::Rest(i) => rest[i] = v,
                Field::Opacity => logit = v,
                Field::Scale(i) => log_scale[i] = v,
                Field::Rot(i) => rot[i] = v,
            }
        }

        let q = Quaternion::new(rot[0], rot[1], rot[2], rot[3]);
        if !(q.norm() > 1e-12) || !q.coords.iter().all(|c| c.is_finite()) {
            return Err(load_err(format!("vertex {index}: degenerate rotation quaternion")));
        }
        let mut scale = log_scale.map(f64::exp);
        for s in scale.iter_mut() {
            if *s < MIN_SCALE {
                *s = MIN_SCALE;
                clamped += 1;
            }
        }
        let mut sh = ShCoeffs::zeros();
        sh.0[0] = dc;
        for coeff in 1..=rest_per_channel {
            for c in 0..3 {
                sh.0[coeff][c] = rest[c * rest_per_channel + coeff - 1];
            }
        }
        let g = Gaussian {
            center: pos,
            rotation: UnitQuaternion::from_quaternion(q),
            scale,
            opacity: 1.0 / (1.0 + (-logit).exp()),
            sh,
            kind: SplatKind::Radiance,
        };
        g.validate().map_err(|e| load_err(format!("vertex {index}: {e}")))?;
        gaussians.push(g);
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} degenerate scale components to {MIN_SCALE}");
    }
    GaussianScene::new(gaussians, degree)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<GaussianScene, SceneError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| load_err(format!("{}: {e}", path.display())))?;
    read_scene(file)
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(OPACITY_EPS, 1.0 - OPACITY_EPS);
    (p / (1.0 - p)).ln()
}

/// Writes `scene` with as many `f_rest_*` properties as its SH degree needs.
pub fn write_scene<W: Write>(scene: &GaussianScene, writer: W) -> Result<(), SceneError> {
    let mut w = BufWriter::new(writer);
    let rest_per_channel = coeffs_for_degree(scene.sh_degree()) - 1;
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", scene.len())?;
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..rest_per_channel * 3).map(|i| format!("f_rest_{i}")));
    names.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
            .iter()
            .map(|s| s.to_string()),
    );
    for n in &names {
        writeln!(w, "property float {n}")?;
    }
    writeln!(w, "end_header")?;

    let mut rec: Vec<f32> = Vec::with_capacity(names.len());
    for g in scene.gaussians() {
        rec.clear();
        rec.extend(g.center.iter().map(|&v| v as f32));
        rec.extend([0.0f32; 3]);
        rec.extend(g.sh.0[0].iter().map(|&v| v as f32));
        for c in 0..3 {
            for coeff in 1..=rest_per_channel {
                rec.push(g.sh.0[coeff][c] as f32);
            }
        }
        rec.push(logit(g.opacity) as f32);
        rec.extend(g.scale.iter().map(|&s| s.ln() as f32));
        let q = g.rotation.quaternion();
        rec.extend([q.w, q.i, q.j, q.k].iter().map(|&v| v as f32));
        for v in &rec {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_scene(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    write_scene(scene, File::create(path)?)
}
