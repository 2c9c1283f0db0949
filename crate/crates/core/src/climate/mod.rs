//! Deferred climate passes over a rendered [`FrameBuffer`](crate::raster::FrameBuffer):
//! smog, flood and snow.

pub mod flood;
pub mod fresnel;
pub mod gerstner;
pub mod gumbel;
pub mod smog;
pub mod snow;
pub mod ssr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RasterError;

pub use flood::{apply_flood, WaterParams};
pub use gerstner::GerstnerWave;
pub use gumbel::{gumbel_depth, GumbelCluster};
pub use smog::{apply_smog, SmogParams};
pub use snow::{apply_snow, place_snow, shade_snow, SnowParams};

#[derive(Debug, Error)]
pub enum ClimateError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("invalid {field}: {msg}")]
    InvalidField { field: String, msg: String },
    #[error("{0}")]
    Mismatch(String),
    #[error("malformed climate document: {0}")]
    Parse(String),
}

impl ClimateError {
    pub fn field(field: &str, msg: &str) -> Self {
        ClimateError::InvalidField { field: field.to_string(), msg: msg.to_string() }
    }

    /// Offending field name, when the error concerns a single field.
    pub fn field_name(&self) -> Option<&str> {
        match self {
            ClimateError::InvalidField { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// All climate parameters. Every section and field is optional in documents.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClimateParams {
    pub smog: SmogParams,
    pub water: WaterParams,
    pub snow: SnowParams,
}

impl ClimateParams {
    pub fn validate(&self) -> Result<(), ClimateError> {
        self.smog.validate()?;
        self.water.validate()?;
        self.snow.validate()
    }

    /// Parses and validates a JSON climate document.
    pub fn from_json(text: &str) -> Result<Self, ClimateError> {
        let p: ClimateParams = serde_json::from_str(text).map_err(|e| ClimateError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}
