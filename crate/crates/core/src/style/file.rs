//! Transform files: JSON with either a row-major `matrix` (9 numbers) or the
//! factors `P` (3×16), `T` (16×16) and `Q` (16×3), all row-major, plus an
//! optional `bias` (3 numbers).

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ColorTransform, FactorP, FactorQ, FactorT, Factored, StyleError, FACTOR_RANK};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<f64>>,
    #[serde(default, rename = "P", skip_serializing_if = "Option::is_none")]
    p: Option<Vec<f64>>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    t: Option<Vec<f64>>,
    #[serde(default, rename = "Q", skip_serializing_if = "Option::is_none")]
    q: Option<Vec<f64>>,
    #[serde(default)]
    bias: Option<Vec<f64>>,
}

fn expect_len(name: &str, v: &[f64], n: usize) -> Result<(), StyleError> {
    if v.len() != n {
        return Err(StyleError::Invalid(format!("{name} needs {n} numbers, got {}", v.len())));
    }
    Ok(())
}

pub fn parse_transform(text: &str) -> Result<ColorTransform, StyleError> {
    let doc: TransformDoc = serde_json::from_str(text).map_err(|e| StyleError::Invalid(e.to_string()))?;
    let bias = match &doc.bias {
        Some(b) => {
            expect_len("bias", b, 3)?;
            Vector3::from_row_slice(b)
        }
        None => Vector3::zeros(),
    };
    match (doc.matrix, doc.p, doc.t, doc.q) {
        (Some(m), None, None, None) => {
            expect_len("matrix", &m, 9)?;
            ColorTransform::new(Matrix3::from_row_slice(&m), bias)
        }
        (None, Some(p), Some(t), Some(q)) => {
            expect_len("P", &p, 3 * FACTOR_RANK)?;
            expect_len("T", &t, FACTOR_RANK * FACTOR_RANK)?;
            expect_len("Q", &q, FACTOR_RANK * 3)?;
            let f = Factored { p: FactorP::from_row_slice(&p), t: FactorT::from_row_slice(&t), q: FactorQ::from_row_slice(&q) };
            ColorTransform::from_factors(f, bias)
        }
        _ => Err(StyleError::Invalid("expected either `matrix` or all of `P`, `T`, `Q`".into())),
    }
}

pub fn load_transform(path: impl AsRef<Path>) -> Result<ColorTransform, StyleError> {
    parse_transform(&std::fs::read_to_string(path)?)
}

fn row_major<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> Vec<f64> {
    (0..R).flat_map(|r| (0..C).map(move |c| m[(r, c)])).collect()
}

/// Serializes in the factored layout when factors are present.
pub fn transform_to_json(t: &ColorTransform) -> String {
    let doc = match &t.factored {
        Some(f) => TransformDoc {
            matrix: None,
            p: Some(row_major(&f.p)),
            t: Some(row_major(&f.t)),
            q: Some(row_major(&f.q)),
            bias: Some(t.bias.iter().copied().collect()),
        },
        None => TransformDoc { matrix: Some(row_major(&t.matrix)), p: None, t: None, q: None, bias: Some(t.bias.iter().copied().collect()) },
    };
    serde_json::to_string_pretty(&doc).expect("plain numeric document")
}
