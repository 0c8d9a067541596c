//! Synthetic marker layouts and contact scenarios with ground truth.
//!
//! The membrane model is a test oracle, not physics: each press pushes
//! markers radially away from its centre with magnitude
//! `radial_gain * depth * exp(-d^2 / (2 radius^2))`, a shear translates
//! markers by the shear vector weighted by the same Gaussian envelope, and
//! isotropic Gaussian noise is added last. Displacements of separate
//! components add.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{median_nearest_neighbor, CentroidFrame};
use crate::point::Vec2;

/// Pin spacing of the default layout, in synthetic units (~mm).
pub const DEFAULT_PITCH: f64 = 1.0;
/// 817 markers spanning 32 units, so two presses 4 units apart cover
/// separate groups of pins.
pub const DEFAULT_RINGS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub rings: u32,
    pub pitch: f64,
    /// Half-width of the uniform per-coordinate perturbation.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        Self {
            rings: DEFAULT_RINGS,
            pitch: DEFAULT_PITCH,
            jitter: 0.0,
            seed: 0,
        }
    }
}

impl LayoutSpec {
    pub fn marker_count(&self) -> usize {
        let r = self.rings as usize;
        1 + 3 * r * (r + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.rings < 1 {
            return Err(Error::InvalidInput("layout needs at least one ring".into()));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "pitch must be positive, got {}",
                self.pitch
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter < self.pitch / 4.0) {
            return Err(Error::InvalidInput(format!(
                "jitter must lie in [0, pitch/4), got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// Hexagonal lattice: a centre marker followed by `rings` concentric hexagonal
/// rings, each walked counter-clockwise. Ids are `0..n` in that order.
pub fn generate_layout(spec: &LayoutSpec) -> Result<CentroidFrame> {
    spec.validate()?;
    let dirs: Vec<Vec2> = (0..6)
        .map(|k| Vec2::from_polar(1.0, std::f64::consts::FRAC_PI_3 * k as f64))
        .collect();
    let mut points = Vec::with_capacity(spec.marker_count());
    points.push(Vec2::ZERO);
    for ring in 1..=spec.rings as i32 {
        let mut p = dirs[4] * (ring as f64 * spec.pitch);
        for dir in &dirs {
            for _ in 0..ring {
                points.push(p);
                p += *dir * spec.pitch;
            }
        }
    }
    if spec.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let dist = Uniform::new_inclusive(-spec.jitter, spec.jitter)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        for p in &mut points {
            p.x += dist.sample(&mut rng);
            p.y += dist.sample(&mut rng);
        }
    }
    CentroidFrame::from_points(points, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Press {
    pub center: Vec2,
    pub depth: f64,
    pub radius: f64,
}

impl Press {
    pub fn envelope(&self, p: Vec2) -> f64 {
        let d2 = (p - self.center).norm_sq();
        (-d2 / (2.0 * self.radius * self.radius)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactScenario {
    pub presses: Vec<Press>,
    pub shear: Vec2,
    pub noise_sigma: f64,
}

impl ContactScenario {
    pub fn rest() -> Self {
        Self {
            presses: Vec::new(),
            shear: Vec2::ZERO,
            noise_sigma: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (i, press) in self.presses.iter().enumerate() {
            if !(press.depth >= 0.0 && press.depth.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "press {i}: depth must be >= 0"
                )));
            }
            if !(press.radius > 0.0 && press.radius.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "press {i}: radius must be > 0"
                )));
            }
            if !press.center.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "press {i}: centre is not finite"
                )));
            }
        }
        if !self.shear.is_finite() {
            return Err(Error::InvalidInput("shear vector is not finite".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidInput("noise sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Weight of the shear at `p`: the strongest press envelope there, or 1
    /// (rigid translation) when there is no press.
    pub fn shear_envelope(&self, p: Vec2) -> f64 {
        if self.presses.is_empty() {
            1.0
        } else {
            self.presses
                .iter()
                .map(|pr| pr.envelope(p))
                .fold(0.0, f64::max)
        }
    }
}

/// Ground truth echoed alongside a simulated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub presses: Vec<Press>,
    pub shear: Vec2,
    /// Degrees counter-clockwise from +x in [0, 360); absent for zero shear.
    pub shear_angle_deg: Option<f64>,
    pub shear_magnitude: f64,
    /// Where each press of non-zero depth sits in the deformed frame (the
    /// centre carried along by the shear field).
    pub contacts: Vec<Vec2>,
}

impl GroundTruth {
    pub fn of(scenario: &ContactScenario) -> Self {
        let magnitude = scenario.shear.norm();
        let angle = (magnitude > 0.0).then(|| crate::shear::angle_deg(scenario.shear));
        Self {
            presses: scenario.presses.clone(),
            shear: scenario.shear,
            shear_angle_deg: angle,
            shear_magnitude: magnitude,
            contacts: scenario
                .presses
                .iter()
                .filter(|p| p.depth > 0.0)
                .map(|p| p.center + scenario.shear * scenario.shear_envelope(p.center))
                .collect(),
        }
    }

    pub fn max_depth(&self) -> f64 {
        self.presses.iter().map(|p| p.depth).fold(0.0, f64::max)
    }
}

/// Constants of the membrane model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembraneModel {
    pub radial_gain: f64,
}

/// Gives a contact-centre cell area increase of roughly 70% for a depth-1
/// press on the default layout.
pub const DEFAULT_RADIAL_GAIN: f64 = 0.3;

impl Default for MembraneModel {
    fn default() -> Self {
        Self {
            radial_gain: DEFAULT_RADIAL_GAIN,
        }
    }
}

impl MembraneModel {
    /// Noise-free displacement of a marker at rest position `p`.
    pub fn displacement(&self, scenario: &ContactScenario, p: Vec2) -> Vec2 {
        let mut u = Vec2::ZERO;
        for press in &scenario.presses {
            let d = p - press.center;
            let r = d.norm();
            if r > 1e-12 * press.radius {
                u += d * (self.radial_gain * press.depth * press.envelope(p) / r);
            }
        }
        u + scenario.shear * scenario.shear_envelope(p)
    }
}

/// Applies `scenario` to a rest frame. Deterministic in `seed`.
pub fn simulate(
    frame: &CentroidFrame,
    scenario: &ContactScenario,
    model: &MembraneModel,
    seed: u64,
) -> Result<(CentroidFrame, GroundTruth)> {
    scenario.validate()?;
    let mut points: Vec<Vec2> = frame
        .points()
        .iter()
        .map(|&p| p + model.displacement(scenario, p))
        .collect();
    if scenario.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, scenario.noise_sigma)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        for p in &mut points {
            p.x += noise.sample(&mut rng);
            p.y += noise.sample(&mut rng);
        }
    }

    let min_gap = 1e-6 * median_nearest_neighbor(frame.points());
    if let Some((i, j)) = first_collision(&points, min_gap) {
        return Err(Error::ScenarioInfeasible(format!(
            "markers {} and {} collide",
            frame.ids()[i],
            frame.ids()[j]
        )));
    }
    let out = frame
        .with_points(points, frame.timestamp())
        .map_err(|e| Error::ScenarioInfeasible(e.to_string()))?;
    Ok((out, GroundTruth::of(scenario)))
}

/// Sweep over x-sorted points for any pair closer than `gap`.
fn first_collision(points: &[Vec2], gap: f64) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j].x - points[i].x >= gap {
                break;
            }
            if points[i].distance(points[j]) < gap {
                return Some((i.min(j), i.max(j)));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Depths 0 to 5 in steps of 0.1, no shear.
    DepthSweep,
    /// Depth 3, shear magnitude 0 to 2 in steps of 0.1 along +x.
    ShearSweep,
    /// Depth 3, shear 2 at 0, 10, ..., 350 degrees.
    DirectionValidation,
}

pub const PROTOCOL_PRESS_DEPTH: f64 = 3.0;
pub const PROTOCOL_SHEAR_MAGNITUDE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    /// Press radius; a broad envelope stands in for the flat calibration surface.
    pub radius: f64,
    /// Frames recorded per step. Identical unless `noise_sigma > 0`.
    pub samples_per_step: usize,
    pub seed: u64,
    pub model: MembraneModel,
}

/// Press radius used by the protocols. Small against the layout, so markers
/// at the clamped rim barely move under shear.
pub const DEFAULT_PROTOCOL_RADIUS: f64 = 5.0;

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            radius: DEFAULT_PROTOCOL_RADIUS,
            samples_per_step: 10,
            seed: 0,
            model: MembraneModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolStep {
    pub scenario: ContactScenario,
    /// Telemetry for the step: depth, shear magnitude, or shear angle in degrees.
    pub telemetry: f64,
    pub frames: Vec<CentroidFrame>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolDataset {
    pub kind: ProtocolKind,
    /// Rest frame recorded before the first step; the calibration frame.
    pub reference: CentroidFrame,
    pub steps: Vec<ProtocolStep>,
}

impl ProtocolDataset {
    pub fn frame_count(&self) -> usize {
        1 + self.steps.iter().map(|s| s.frames.len()).sum::<usize>()
    }
}

fn step_values(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step).round() as usize;
    // Snap to 1e-9 so that e.g. 23 * 0.1 is the literal 2.3.
    (0..=n)
        .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

pub fn protocol_scenarios(
    kind: ProtocolKind,
    center: Vec2,
    radius: f64,
    noise_sigma: f64,
) -> Vec<(ContactScenario, f64)> {
    let press = |depth: f64| Press {
        center,
        depth,
        radius,
    };
    match kind {
        ProtocolKind::DepthSweep => step_values(0.0, 5.0, 0.1)
            .into_iter()
            .map(|d| {
                (
                    ContactScenario {
                        presses: vec![press(d)],
                        shear: Vec2::ZERO,
                        noise_sigma,
                    },
                    d,
                )
            })
            .collect(),
        ProtocolKind::ShearSweep => step_values(0.0, 2.0, 0.1)
            .into_iter()
            .map(|m| {
                let scenario = ContactScenario {
                    presses: vec![press(PROTOCOL_PRESS_DEPTH)],
                    shear: Vec2::new(m, 0.0),
                    noise_sigma,
                };
                (scenario, m)
            })
            .collect(),
        ProtocolKind::DirectionValidation => (0..36)
            .map(|k| {
                let deg = 10.0 * k as f64;
                let scenario = ContactScenario {
                    presses: vec![press(PROTOCOL_PRESS_DEPTH)],
                    shear: Vec2::from_polar(PROTOCOL_SHEAR_MAGNITUDE, deg.to_radians()),
                    noise_sigma,
                };
                (scenario, deg)
            })
            .collect(),
    }
}

fn frame_seed(base: u64, index: u64) -> u64 {
    base ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs one of the calibration or validation protocols against a rest layout.
/// Presses are centred on the layout centroid. Frame timestamps run from 0
/// (the rest frame) upward.
pub fn run_protocol(
    kind: ProtocolKind,
    frame: &CentroidFrame,
    noise_sigma: f64,
    options: &ProtocolOptions,
) -> Result<ProtocolDataset> {
    if options.samples_per_step == 0 {
        return Err(Error::InvalidInput(
            "samples_per_step must be at least 1".into(),
        ));
    }
    let center = frame.centroid();
    let rest = ContactScenario {
        noise_sigma,
        ..ContactScenario::rest()
    };
    let (reference, _) = simulate(frame, &rest, &options.model, frame_seed(options.seed, 0))?;
    let reference = reference.with_points(reference.points().to_vec(), 0)?;

    let mut timestamp = 1u64;
    let mut steps = Vec::new();
    for (scenario, telemetry) in protocol_scenarios(kind, center, options.radius, noise_sigma) {
        let mut frames = Vec::with_capacity(options.samples_per_step);
        let mut truth = None;
        for _ in 0..options.samples_per_step {
            let (out, t) = simulate(
                frame,
                &scenario,
                &options.model,
                frame_seed(options.seed, timestamp),
            )?;
            frames.push(out.with_points(out.points().to_vec(), timestamp)?);
            truth = Some(t);
            timestamp += 1;
        }
        steps.push(ProtocolStep {
            scenario,
            telemetry,
            frames,
            truth: truth.expect("non-empty"),
        });
    }
    Ok(ProtocolDataset {
        kind,
        reference,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_ring_layout() {
        let f = generate_layout(&LayoutSpec {
            rings: 1,
            pitch: 3.0,
            jitter: 0.0,
            seed: 0,
        })
        .unwrap();
        assert_eq!(f.len(), 7);
        for p in &f.points()[1..] {
            assert!((p.norm() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn three_ring_layout_count() {
        let f = generate_layout(&LayoutSpec {
            rings: 3,
            pitch: 3.0,
            jitter: 0.0,
            seed: 0,
        })
        .unwrap();
        assert_eq!(f.len(), 37);
        let nn = median_nearest_neighbor(f.points());
        assert!((nn - 3.0).abs() < 1e-9);
    }

    #[test]
    fn layout_is_deterministic_per_seed() {
        let spec = LayoutSpec {
            rings: 3,
            pitch: 3.0,
            jitter: 0.5,
            seed: 42,
        };
        assert_eq!(
            generate_layout(&spec).unwrap(),
            generate_layout(&spec).unwrap()
        );
        let other = LayoutSpec { seed: 43, ..spec };
        assert_ne!(
            generate_layout(&spec).unwrap(),
            generate_layout(&other).unwrap()
        );
    }

    #[test]
    fn layout_rejects_large_jitter() {
        assert!(generate_layout(&LayoutSpec {
            rings: 2,
            pitch: 3.0,
            jitter: 0.75,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn identity_scenario() {
        let f = generate_layout(&LayoutSpec::default()).unwrap();
        let scenario = ContactScenario {
            presses: vec![Press {
                center: Vec2::ZERO,
                depth: 0.0,
                radius: 5.0,
            }],
            shear: Vec2::ZERO,
            noise_sigma: 0.0,
        };
        let (out, truth) = simulate(&f, &scenario, &MembraneModel::default(), 1).unwrap();
        assert_eq!(out, f);
        assert_eq!(truth.shear_angle_deg, None);
    }

    #[test]
    fn collision_is_infeasible() {
        let f = generate_layout(&LayoutSpec {
            rings: 2,
            pitch: 3.0,
            jitter: 0.0,
            seed: 0,
        })
        .unwrap();
        // A narrow envelope on marker 1 carries it exactly onto marker 2.
        let (p1, p2) = (f.points()[1], f.points()[2]);
        let scenario = ContactScenario {
            presses: vec![Press {
                center: p1,
                depth: 0.0,
                radius: 0.01,
            }],
            shear: p2 - p1,
            noise_sigma: 0.0,
        };
        assert!(matches!(
            simulate(&f, &scenario, &MembraneModel::default(), 0),
            Err(Error::ScenarioInfeasible(_))
        ));
    }

    #[test]
    fn protocol_shapes() {
        let f = generate_layout(&LayoutSpec::default()).unwrap();
        let opts = ProtocolOptions {
            samples_per_step: 1,
            ..Default::default()
        };
        let depth = run_protocol(ProtocolKind::DepthSweep, &f, 0.0, &opts).unwrap();
        assert_eq!(depth.steps.len(), 51);
        let depths: Vec<f64> = depth.steps.iter().map(|s| s.telemetry).collect();
        assert!(depths.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(depths[0], 0.0);
        assert_eq!(depths[50], 5.0);
        assert_eq!(depths[23], 2.3);

        let shear = run_protocol(ProtocolKind::ShearSweep, &f, 0.0, &opts).unwrap();
        assert_eq!(shear.steps.len(), 21);
        assert_eq!(shear.steps[20].telemetry, 2.0);

        let dir = run_protocol(ProtocolKind::DirectionValidation, &f, 0.0, &opts).unwrap();
        let angles: Vec<f64> = dir.steps.iter().map(|s| s.telemetry).collect();
        assert_eq!(angles, (0..36).map(|k| 10.0 * k as f64).collect::<Vec<_>>());
        for s in &dir.steps {
            assert_eq!(s.scenario.presses[0].depth, 3.0);
            assert!((s.truth.shear_magnitude - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn protocol_samples_differ_only_with_noise() {
        let f = generate_layout(&LayoutSpec {
            rings: 3,
            ..Default::default()
        })
        .unwrap();
        let opts = ProtocolOptions {
            samples_per_step: 3,
            ..Default::default()
        };
        let quiet = run_protocol(ProtocolKind::DepthSweep, &f, 0.0, &opts).unwrap();
        let s = &quiet.steps[10];
        assert_eq!(s.frames[0].points(), s.frames[1].points());
        let noisy = run_protocol(ProtocolKind::DepthSweep, &f, 0.06, &opts).unwrap();
        let s = &noisy.steps[10];
        assert_ne!(s.frames[0].points(), s.frames[1].points());
        assert_eq!(noisy.frame_count(), 1 + 51 * 3);
        assert_eq!(
            noisy,
            run_protocol(ProtocolKind::DepthSweep, &f, 0.06, &opts).unwrap()
        );
    }
}
