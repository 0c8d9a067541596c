//! Per-frame feature extraction against a fixed reference frame.

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationKind, CalibrationTable};
use crate::error::{Error, Result};
use crate::geometry::{
    area_deltas, tessellate, BoundaryParams, BoundaryRing, CellSet, CentroidFrame,
};
use crate::point::Vec2;
use crate::render::RenderSpec;
use crate::shear::{
    global_shear_with_epsilon, local_shears, ShearField, DEFAULT_DIRECTION_EPSILON,
};
use crate::simulator::{simulate, ContactScenario, MembraneModel, Press, DEFAULT_PROTOCOL_RADIUS};
use crate::surface::{
    detect_contacts, fit_surface, surface_volume, Contact, ContactSet, DeformationSurface,
    GridResolution,
};

pub const CONFIG_VERSION: u32 = 1;

/// A quarter of the peak area delta (percent) produced by a depth-1
/// calibration press on the default synthetic layout. See
/// [`calibration_press_threshold`].
pub const DEFAULT_CONTACT_THRESHOLD: f64 = 16.86;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub contact_threshold: f64,
    pub direction_epsilon: f64,
    pub grid: GridResolution,
    pub boundary: BoundaryParams,
    pub tolerances: Tolerances,
    pub render: RenderSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            contact_threshold: DEFAULT_CONTACT_THRESHOLD,
            direction_epsilon: DEFAULT_DIRECTION_EPSILON,
            grid: GridResolution::default(),
            boundary: BoundaryParams::default(),
            tolerances: Tolerances::default(),
            render: RenderSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !(self.contact_threshold >= 0.0 && self.contact_threshold.is_finite()) {
            return Err(Error::InvalidInput(
                "contact_threshold must be non-negative".into(),
            ));
        }
        if !(self.direction_epsilon >= 0.0 && self.direction_epsilon.is_finite()) {
            return Err(Error::InvalidInput(
                "direction_epsilon must be non-negative".into(),
            ));
        }
        self.grid.validate()?;
        self.render.validate()?;
        self.tolerances.validate()
    }
}

/// Pass/fail bounds used when comparing features against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub max_mean_direction_error_deg: f64,
    /// In grid spacings. Negative disables the contact check.
    pub max_contact_error_spacings: f64,
    pub min_volume_depth_correlation: f64,
    /// Contacts are only checked on frames whose presses are all at least
    /// this deep; shallower presses can fall below the contact threshold.
    pub min_contact_depth: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            max_mean_direction_error_deg: 2.3,
            max_contact_error_spacings: 1.0,
            min_volume_depth_correlation: 0.9,
            min_contact_depth: 1.0,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        if self.max_mean_direction_error_deg.is_nan()
            || self.max_mean_direction_error_deg < 0.0
            || self.min_volume_depth_correlation.is_nan()
            || self.min_contact_depth.is_nan()
        {
            return Err(Error::InvalidInput(
                "tolerances must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Peak area delta of a depth-1 press at the frame centroid, times 0.25.
pub fn calibration_press_threshold(
    reference: &CentroidFrame,
    params: &BoundaryParams,
) -> Result<f64> {
    let scenario = ContactScenario {
        presses: vec![Press {
            center: reference.centroid(),
            depth: 1.0,
            radius: DEFAULT_PROTOCOL_RADIUS,
        }],
        shear: Vec2::ZERO,
        noise_sigma: 0.0,
    };
    let (pressed, _) = simulate(reference, &scenario, &MembraneModel::default(), 0)?;
    let ring = params.build(reference)?;
    let deltas = area_deltas(
        &tessellate(reference, &ring)?,
        &tessellate(&pressed, &ring)?,
    )?;
    Ok(0.25 * deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub direction_undefined: bool,
    pub calibration_out_of_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearSummary {
    pub x: f64,
    pub y: f64,
    pub direction_deg: Option<f64>,
    pub magnitude_raw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub frame: usize,
    pub timestamp: u64,
    pub area_deltas: Vec<f64>,
    pub volume_raw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_mm: Option<f64>,
    pub grid_spacing: f64,
    pub contacts: Vec<Contact>,
    pub shear: ShearSummary,
    pub flags: FeatureFlags,
}

/// Everything computed for one frame, before it is summarised.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub cells: CellSet,
    pub deltas: Vec<f64>,
    pub surface: DeformationSurface,
    pub volume: f64,
    pub contacts: ContactSet,
    pub shear: ShearField,
}

/// Holds the reference frame's boundary and cells, built once and shared
/// by every frame processed against it.
#[derive(Debug, Clone)]
pub struct Processor {
    reference: CentroidFrame,
    boundary: BoundaryRing,
    reference_cells: CellSet,
    config: PipelineConfig,
    depth_calibration: Option<CalibrationTable>,
    shear_calibration: Option<CalibrationTable>,
}

impl Processor {
    pub fn new(reference: CentroidFrame, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let boundary = config.boundary.build(&reference)?;
        let reference_cells = tessellate(&reference, &boundary)?;
        Ok(Self {
            reference,
            boundary,
            reference_cells,
            config,
            depth_calibration: None,
            shear_calibration: None,
        })
    }

    /// Installs a calibration in the slot for its kind.
    pub fn with_calibration(mut self, table: CalibrationTable) -> Self {
        match table.kind() {
            CalibrationKind::Depth => self.depth_calibration = Some(table),
            CalibrationKind::ShearMagnitude => self.shear_calibration = Some(table),
        }
        self
    }

    pub fn reference(&self) -> &CentroidFrame {
        &self.reference
    }

    pub fn boundary(&self) -> &BoundaryRing {
        &self.boundary
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn analyze(&self, current: &CentroidFrame) -> Result<FrameAnalysis> {
        let locals = local_shears(&self.reference, current)?;
        // Tessellate in reference order so deltas, cells and shears line up.
        let aligned = CentroidFrame::new(
            current.aligned_to(&self.reference)?,
            self.reference.ids().to_vec(),
            current.timestamp(),
        )?;
        let cells = tessellate(&aligned, &self.boundary)?;
        let deltas = area_deltas(&self.reference_cells, &cells)?;
        let surface = fit_surface(&aligned, &deltas, self.config.grid)?;
        let volume = surface_volume(&surface);
        let contacts = detect_contacts(&surface, self.config.contact_threshold)?;
        let shear = global_shear_with_epsilon(&locals, self.config.direction_epsilon)?;
        Ok(FrameAnalysis {
            cells,
            deltas,
            surface,
            volume,
            contacts,
            shear,
        })
    }

    /// Runs the full chain on one frame; errors carry `index`.
    pub fn process_frame(&self, index: usize, current: &CentroidFrame) -> Result<FeatureRecord> {
        self.analyze(current)
            .map(|a| self.summarize(index, current.timestamp(), a))
            .map_err(|e| e.at_frame(index))
    }

    pub fn summarize(&self, index: usize, timestamp: u64, a: FrameAnalysis) -> FeatureRecord {
        let mut flags = FeatureFlags {
            direction_undefined: a.shear.direction_undefined(),
            ..Default::default()
        };
        let mut calibrate = |table: &Option<CalibrationTable>, raw: f64| {
            table.as_ref().and_then(|t| match t.apply(raw) {
                Ok(v) => Some(v),
                Err(_) => {
                    flags.calibration_out_of_range = true;
                    None
                }
            })
        };
        let volume_mm = calibrate(&self.depth_calibration, a.volume);
        let magnitude_mm = calibrate(&self.shear_calibration, a.shear.magnitude);
        FeatureRecord {
            frame: index,
            timestamp,
            grid_spacing: a.surface.spacing(),
            volume_raw: a.volume,
            volume_mm,
            contacts: a.contacts.contacts,
            shear: ShearSummary {
                x: a.shear.global.x,
                y: a.shear.global.y,
                direction_deg: a.shear.direction_deg,
                magnitude_raw: a.shear.magnitude,
                magnitude_mm,
            },
            flags,
            area_deltas: a.deltas,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::fit_calibration;
    use crate::simulator::{generate_layout, LayoutSpec};

    fn layout() -> CentroidFrame {
        generate_layout(&LayoutSpec {
            rings: 4,
            ..LayoutSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn reference_against_itself() {
        let f = layout();
        let p = Processor::new(f.clone(), PipelineConfig::default()).unwrap();
        let r = p.process_frame(0, &f).unwrap();
        assert_eq!(r.volume_raw, 0.0);
        assert!(r.contacts.is_empty());
        assert_eq!(r.shear.magnitude_raw, 0.0);
        assert!(r.flags.direction_undefined);
        assert!(r.area_deltas.iter().all(|&d| d == 0.0));
        assert_eq!(r.volume_mm, None);
    }

    #[test]
    fn calibrated_fields_follow_tables() {
        let f = layout();
        let depth = fit_calibration(&[(0.0, 0.0), (1.0, 1.0)], CalibrationKind::Depth).unwrap();
        let shear =
            fit_calibration(&[(1.0, 0.0), (2.0, 1.0)], CalibrationKind::ShearMagnitude).unwrap();
        let p = Processor::new(f.clone(), PipelineConfig::default())
            .unwrap()
            .with_calibration(depth)
            .with_calibration(shear);
        let r = p.process_frame(0, &f).unwrap();
        assert_eq!(r.volume_mm, Some(0.0));
        assert_eq!(r.shear.magnitude_mm, None);
        assert!(r.flags.calibration_out_of_range);
    }

    #[test]
    fn errors_carry_frame_index() {
        let f = layout();
        let p = Processor::new(f.clone(), PipelineConfig::default()).unwrap();
        let far = f
            .with_points(f.points().iter().map(|&q| q * 3.0).collect(), 1)
            .unwrap();
        let err = p.process_frame(7, &far).unwrap_err();
        assert!(matches!(err, Error::AtFrame { index: 7, .. }));
    }

    #[test]
    fn config_version_is_checked() {
        let config = PipelineConfig {
            version: 2,
            ..PipelineConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn default_threshold_matches_calibration_press() {
        let reference = generate_layout(&LayoutSpec::default()).unwrap();
        let derived = calibration_press_threshold(&reference, &BoundaryParams::default()).unwrap();
        assert!(
            (derived - DEFAULT_CONTACT_THRESHOLD).abs() < 0.005,
            "derived {derived}"
        );
    }
}
