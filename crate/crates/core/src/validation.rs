//! Comparison of inferred features against simulator ground truth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::formats::Recording;
use crate::pipeline::{FeatureRecord, Tolerances};

/// Smallest absolute difference between two angles, in degrees.
pub fn angular_difference_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionStats {
    pub count: usize,
    pub mean_abs_deg: f64,
    pub max_abs_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactStats {
    pub count: usize,
    pub count_mismatches: usize,
    pub mean_error_spacings: f64,
    pub max_error_spacings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub direction: Option<DirectionStats>,
    pub contacts: Option<ContactStats>,
    pub volume_depth_correlation: Option<f64>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Matches records to truth by frame index. Frames without truth are skipped;
/// truth without a record is an error.
pub fn validate_features(
    recording: &Recording,
    records: &[FeatureRecord],
    tolerances: &Tolerances,
) -> Result<ValidationReport> {
    if recording.truth.is_empty() {
        return Err(Error::InvalidInput(
            "recording carries no ground truth".into(),
        ));
    }
    let by_frame: std::collections::HashMap<usize, &FeatureRecord> =
        records.iter().map(|r| (r.frame, r)).collect();

    let mut angle_errors = Vec::new();
    let mut contact_errors = Vec::new();
    let mut mismatches = 0;
    let mut contact_records = 0;
    let (mut volumes, mut depths) = (Vec::new(), Vec::new());

    for (&frame, t) in &recording.truth {
        let r = by_frame
            .get(&frame)
            .ok_or_else(|| Error::InvalidInput(format!("no feature record for frame {frame}")))?;
        if let Some(want) = t.truth.shear_angle_deg {
            angle_errors.push(match r.shear.direction_deg {
                Some(got) => angular_difference_deg(got, want),
                None => 180.0,
            });
        }
        let deep_enough = t
            .truth
            .presses
            .iter()
            .all(|p| p.depth >= tolerances.min_contact_depth);
        if !t.truth.contacts.is_empty() && deep_enough {
            contact_records += 1;
            if r.contacts.len() != t.truth.contacts.len() {
                mismatches += 1;
            }
            for c in &t.truth.contacts {
                let nearest = r
                    .contacts
                    .iter()
                    .map(|d| d.position().distance(*c))
                    .fold(f64::INFINITY, f64::min);
                contact_errors.push(nearest / r.grid_spacing);
            }
        }
        volumes.push(r.volume_raw);
        depths.push(t.truth.max_depth());
    }

    let mut checks = Vec::new();
    let direction = (!angle_errors.is_empty()).then(|| {
        let mean = angle_errors.iter().sum::<f64>() / angle_errors.len() as f64;
        checks.push(Check {
            name: "mean_direction_error_deg",
            value: mean,
            bound: tolerances.max_mean_direction_error_deg,
            passed: mean <= tolerances.max_mean_direction_error_deg,
        });
        DirectionStats {
            count: angle_errors.len(),
            mean_abs_deg: mean,
            max_abs_deg: angle_errors.iter().copied().fold(0.0, f64::max),
        }
    });
    let contacts = (contact_records > 0).then(|| {
        let max = contact_errors.iter().copied().fold(0.0, f64::max);
        if tolerances.max_contact_error_spacings >= 0.0 {
            checks.push(Check {
                name: "max_contact_error_spacings",
                value: max,
                bound: tolerances.max_contact_error_spacings,
                passed: max <= tolerances.max_contact_error_spacings,
            });
            checks.push(Check {
                name: "contact_count_mismatches",
                value: mismatches as f64,
                bound: 0.0,
                passed: mismatches == 0,
            });
        }
        ContactStats {
            count: contact_records,
            count_mismatches: mismatches,
            mean_error_spacings: contact_errors.iter().sum::<f64>() / contact_errors.len() as f64,
            max_error_spacings: max,
        }
    });
    let volume_depth_correlation = pearson(&volumes, &depths);
    if let Some(r) = volume_depth_correlation {
        checks.push(Check {
            name: "volume_depth_correlation",
            value: r,
            bound: tolerances.min_volume_depth_correlation,
            passed: r >= tolerances.min_volume_depth_correlation,
        });
    }
    Ok(ValidationReport {
        direction,
        contacts,
        volume_depth_correlation,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angular_difference_wraps() {
        assert_eq!(angular_difference_deg(359.0, 1.0), 2.0);
        assert_eq!(angular_difference_deg(10.0, 190.0), 180.0);
        assert_eq!(angular_difference_deg(45.0, 45.0), 0.0);
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 2.0], &[3.0, 3.0]), None);
    }
}
