//! Local and global shear from centroid motion.
//!
//! Each marker's displacement since the calibration frame is a local shear;
//! the global shear is their arithmetic mean. Angles are degrees,
//! counter-clockwise from +x, in `[0, 360)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CentroidFrame, MarkerId};
use crate::point::Vec2;

/// Magnitude below which the global direction is reported as undefined.
pub const DEFAULT_DIRECTION_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearField {
    pub locals: Vec<Vec2>,
    pub global: Vec2,
    /// `None` when `magnitude` is below the direction epsilon.
    pub direction_deg: Option<f64>,
    pub magnitude: f64,
}

impl ShearField {
    pub fn direction_undefined(&self) -> bool {
        self.direction_deg.is_none()
    }
}

/// `atan2` of `v` in degrees, mapped to `[0, 360)`.
pub fn angle_deg(v: Vec2) -> f64 {
    let deg = v.y.atan2(v.x).to_degrees();
    let wrapped = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative angles.
    if wrapped >= 360.0 {
        0.0
    } else {
        wrapped
    }
}

/// Per-marker displacement `current - reference`, in reference order.
pub fn local_shears(reference: &CentroidFrame, current: &CentroidFrame) -> Result<Vec<Vec2>> {
    let aligned = current.aligned_to(reference)?;
    Ok(reference
        .points()
        .iter()
        .zip(aligned)
        .map(|(&r, c)| c - r)
        .collect())
}

pub fn global_shear(locals: &[Vec2]) -> Result<ShearField> {
    global_shear_with_epsilon(locals, DEFAULT_DIRECTION_EPSILON)
}

pub fn global_shear_with_epsilon(locals: &[Vec2], epsilon: f64) -> Result<ShearField> {
    if locals.is_empty() {
        return Err(Error::EmptyField);
    }
    let sum = locals.iter().fold(Vec2::ZERO, |acc, &v| acc + v);
    let global = sum / locals.len() as f64;
    let magnitude = global.norm();
    Ok(ShearField {
        locals: locals.to_vec(),
        global,
        direction_deg: (magnitude >= epsilon).then(|| angle_deg(global)),
        magnitude,
    })
}

/// Mean shear over a subset of markers, for grouping local shears by region.
/// `ids` are aligned with `locals`; unknown subset ids are an alignment error.
pub fn regional_shear(
    locals: &[Vec2],
    ids: &[MarkerId],
    subset: &[MarkerId],
    epsilon: f64,
) -> Result<ShearField> {
    if locals.len() != ids.len() {
        return Err(Error::FrameAlignment(
            "locals and ids differ in length".into(),
        ));
    }
    let picked = subset
        .iter()
        .map(|id| {
            ids.iter()
                .position(|x| x == id)
                .map(|i| locals[i])
                .ok_or_else(|| Error::FrameAlignment(format!("marker {id} not in field")))
        })
        .collect::<Result<Vec<_>>>()?;
    global_shear_with_epsilon(&picked, epsilon)
}
