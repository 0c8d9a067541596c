//! Piecewise-linear calibration from raw inferred values to millimetres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationKind {
    /// Deformation volume to tip displacement.
    Depth,
    /// Global shear magnitude to lateral displacement.
    ShearMagnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub raw: f64,
    pub mechanical_mm: f64,
}

/// Knots ordered by strictly increasing mechanical value and non-decreasing raw value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    kind: CalibrationKind,
    samples: Vec<Knot>,
}

/// Fits the interpolant through `(raw, mechanical)` pairs.
///
/// Mechanical values come from telemetry and must strictly increase.
/// Raw values must not decrease; a dip is reported with its index rather
/// than sorted away, since it usually points at a problem in the recording.
pub fn fit_calibration(pairs: &[(f64, f64)], kind: CalibrationKind) -> Result<CalibrationTable> {
    if pairs.len() < 2 {
        return Err(Error::Protocol {
            index: pairs.len(),
            reason: "at least two samples are required".into(),
        });
    }
    if let Some(i) = pairs
        .iter()
        .position(|(r, m)| !r.is_finite() || !m.is_finite())
    {
        return Err(Error::Protocol {
            index: i,
            reason: "non-finite sample".into(),
        });
    }
    for i in 1..pairs.len() {
        if pairs[i].1 <= pairs[i - 1].1 {
            return Err(Error::Protocol {
                index: i,
                reason: format!(
                    "mechanical value {} does not exceed previous {}",
                    pairs[i].1,
                    pairs[i - 1].1
                ),
            });
        }
    }
    for i in 1..pairs.len() {
        if pairs[i].0 < pairs[i - 1].0 {
            return Err(Error::CalibrationQuality {
                index: i,
                value: pairs[i].0,
                previous: pairs[i - 1].0,
            });
        }
    }
    Ok(CalibrationTable {
        kind,
        samples: pairs
            .iter()
            .map(|&(raw, mechanical_mm)| Knot { raw, mechanical_mm })
            .collect(),
    })
}

impl CalibrationTable {
    pub fn kind(&self) -> CalibrationKind {
        self.kind
    }

    pub fn samples(&self) -> &[Knot] {
        &self.samples
    }

    pub fn raw_range(&self) -> (f64, f64) {
        (
            self.samples[0].raw,
            self.samples[self.samples.len() - 1].raw,
        )
    }

    /// Evaluates the interpolant. Exact at knots; where raw values tie, the
    /// lowest mechanical value of the tie is returned. No extrapolation.
    pub fn apply(&self, raw: f64) -> Result<f64> {
        let (min, max) = self.raw_range();
        if !(raw >= min && raw <= max) {
            return Err(Error::OutOfRange {
                value: raw,
                min,
                max,
            });
        }
        // First knot with knot.raw >= raw.
        let hi = self.samples.partition_point(|k| k.raw < raw);
        let upper = self.samples[hi];
        if upper.raw == raw || hi == 0 {
            return Ok(upper.mechanical_mm);
        }
        let lower = self.samples[hi - 1];
        let t = (raw - lower.raw) / (upper.raw - lower.raw);
        Ok(lower.mechanical_mm + t * (upper.mechanical_mm - lower.mechanical_mm))
    }

    /// Rebuilds a table from stored knots, re-checking every invariant.
    pub fn from_knots(kind: CalibrationKind, knots: &[Knot]) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = knots.iter().map(|k| (k.raw, k.mechanical_mm)).collect();
        fit_calibration(&pairs, kind)
    }
}

/// Averages the raw readings recorded at each step (several frames per
/// telemetry position) into one pair per step, preserving step order.
pub fn average_steps(steps: &[(f64, Vec<f64>)]) -> Vec<(f64, f64)> {
    steps
        .iter()
        .filter(|(_, raws)| !raws.is_empty())
        .map(|(mech, raws)| (raws.iter().sum::<f64>() / raws.len() as f64, *mech))
        .collect()
}
