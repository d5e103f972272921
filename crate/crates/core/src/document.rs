//! JSON system description:
//! `{"A": [[..]], "B": [[..]], "C": [[..]], "T": 12, "support": {...}}`.
//!
//! `C` and `support` are optional. `support` holds explicit masks
//! `{"phi_x": [T matrices nx x nx], "phi_u": [T matrices nu x nx]}` with
//! nonzero entries marking allowed positions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constraints::{Mask, SupportPattern};
use crate::error::{Error, Result};
use crate::linalg::{mat_from_rows, mat_to_rows};
use crate::model::LinearSystem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDocument {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<SupportDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportDocument {
    pub phi_x: Vec<Vec<Vec<u8>>>,
    pub phi_u: Vec<Vec<Vec<u8>>>,
}

impl SystemDocument {
    pub fn from_system(sys: &LinearSystem) -> Self {
        Self {
            a: mat_to_rows(sys.a()),
            b: mat_to_rows(sys.b()),
            c: Some(mat_to_rows(sys.c())),
            horizon: sys.horizon(),
            support: None,
        }
    }

    pub fn system(&self) -> Result<LinearSystem> {
        let a = mat_from_rows(&self.a)?;
        // an empty "B" still needs nx rows
        let b = if self.b.iter().all(Vec::is_empty) && !self.b.is_empty() {
            crate::linalg::Mat::zeros(self.b.len(), 0)
        } else {
            mat_from_rows(&self.b)?
        };
        let c = self.c.as_deref().map(mat_from_rows).transpose()?;
        LinearSystem::new(a, b, c, self.horizon)
    }

    /// The custom support pattern, if the document carries one.
    pub fn pattern(&self, sys: &LinearSystem) -> Result<Option<SupportPattern>> {
        let Some(support) = &self.support else {
            return Ok(None);
        };
        let to_masks = |ms: &[Vec<Vec<u8>>]| -> Result<Vec<Mask>> {
            ms.iter()
                .map(|m| {
                    let rows = m.len();
                    let cols = m.first().map_or(0, Vec::len);
                    if m.iter().any(|r| r.len() != cols) {
                        return Err(Error::Dimension("ragged support mask".into()));
                    }
                    Ok(Mask::from_fn(rows, cols, |r, c| m[r][c] != 0))
                })
                .collect()
        };
        SupportPattern::from_masks(sys, to_masks(&support.phi_x)?, to_masks(&support.phi_u)?).map(Some)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
