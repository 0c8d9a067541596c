//! Line-delimited JSON files: recordings, feature records, calibration
//! tables and surface dumps. Each file starts with a header line naming the
//! format and version; every later line is one record.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationKind, CalibrationTable, Knot};
use crate::error::{Error, Result};
use crate::geometry::{CentroidFrame, MarkerId};
use crate::pipeline::FeatureRecord;
use crate::point::Vec2;
use crate::simulator::{GroundTruth, LayoutSpec, ProtocolDataset, ProtocolKind};
use crate::surface::DeformationSurface;

pub const FORMAT_VERSION: u32 = 1;
pub const RECORDING_FORMAT: &str = "tactile-recording";
pub const FEATURES_FORMAT: &str = "tactile-features";
pub const CALIBRATION_FORMAT: &str = "tactile-calibration";
pub const SURFACE_FORMAT: &str = "tactile-surface";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    Pixel,
    Mm,
    SyntheticUnit,
}

impl std::fmt::Display for Units {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Units::Pixel => "pixel",
            Units::Mm => "mm",
            Units::SyntheticUnit => "synthetic-unit",
        })
    }
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn json_line<T: DeserializeOwned>(line_no: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| parse_error(line_no, e.column().max(1), e.to_string()))
}

fn to_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("records contain only finite numbers");
    s.push('\n');
    s
}

/// Non-blank lines with their 1-based numbers; the first must be a header
/// of `format` at the supported version.
fn split_records<'a, H: DeserializeOwned>(
    text: &'a str,
    format: &str,
) -> Result<(H, Vec<(usize, &'a str)>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, htext)) = lines.next() else {
        return Err(parse_error(
            1,
            1,
            format!("empty file: expected a {format} header"),
        ));
    };
    #[derive(Deserialize)]
    struct Tag {
        format: String,
        version: u32,
    }
    let tag: Tag = json_line(hline, htext)?;
    if tag.format != format {
        return Err(parse_error(
            hline,
            1,
            format!("expected format {format:?}, found {:?}", tag.format),
        ));
    }
    if tag.version != FORMAT_VERSION {
        return Err(parse_error(
            hline,
            1,
            format!(
                "unsupported {format} version {} (expected {FORMAT_VERSION})",
                tag.version
            ),
        ));
    }
    let header = json_line(hline, htext)?;
    Ok((header, lines.collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingHeader {
    pub format: String,
    pub version: u32,
    pub units: Units,
    pub reference_frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

impl RecordingHeader {
    pub fn new(units: Units) -> Self {
        Self {
            format: RECORDING_FORMAT.into(),
            version: FORMAT_VERSION,
            units,
            reference_frame: 0,
            layout: None,
            protocol: None,
            noise_sigma: None,
        }
    }
}

/// Ground truth for one frame. `step` groups repeated samples of one pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRecord {
    pub frame: usize,
    pub step: usize,
    pub telemetry: f64,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameLine {
    index: usize,
    timestamp: u64,
    ids: Vec<MarkerId>,
    points: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum RecordingLine {
    Frame(FrameLine),
    Truth(TruthRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub header: RecordingHeader,
    pub frames: Vec<CentroidFrame>,
    /// Keyed by frame index.
    pub truth: BTreeMap<usize, TruthRecord>,
}

impl Recording {
    pub fn new(
        header: RecordingHeader,
        frames: Vec<CentroidFrame>,
        truth: Vec<TruthRecord>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in truth {
            let frame = t.frame;
            if map.insert(frame, t).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate truth for frame {frame}"
                )));
            }
        }
        let rec = Self {
            header,
            frames,
            truth: map,
        };
        rec.validate()?;
        Ok(rec)
    }

    fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidInput("recording has no frames".into()));
        }
        let reference = self
            .frames
            .get(self.header.reference_frame)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "reference frame {} out of range ({} frames)",
                    self.header.reference_frame,
                    self.frames.len()
                ))
            })?;
        for (i, f) in self.frames.iter().enumerate() {
            f.aligned_to(reference).map_err(|e| e.at_frame(i))?;
        }
        if let Some((&k, _)) = self.truth.range(self.frames.len()..).next() {
            return Err(Error::InvalidInput(format!("truth for missing frame {k}")));
        }
        Ok(())
    }

    pub fn reference(&self) -> &CentroidFrame {
        &self.frames[self.header.reference_frame]
    }

    /// Frame 0 is the rest frame, followed by every step's samples.
    pub fn from_protocol(
        dataset: &ProtocolDataset,
        units: Units,
        layout: Option<LayoutSpec>,
        noise_sigma: f64,
    ) -> Result<Self> {
        let mut frames = vec![dataset.reference.clone()];
        let mut truth = Vec::new();
        for (step, s) in dataset.steps.iter().enumerate() {
            for f in &s.frames {
                truth.push(TruthRecord {
                    frame: frames.len(),
                    step,
                    telemetry: s.telemetry,
                    truth: s.truth.clone(),
                });
                frames.push(f.clone());
            }
        }
        let header = RecordingHeader {
            layout,
            protocol: Some(dataset.kind),
            noise_sigma: Some(noise_sigma),
            ..RecordingHeader::new(units)
        };
        Self::new(header, frames, truth)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = to_line(&self.header);
        for (index, f) in self.frames.iter().enumerate() {
            out += &to_line(&RecordingLine::Frame(FrameLine {
                index,
                timestamp: f.timestamp(),
                ids: f.ids().to_vec(),
                points: f.points().to_vec(),
            }));
        }
        for t in self.truth.values() {
            out += &to_line(&RecordingLine::Truth(t.clone()));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (header, lines): (RecordingHeader, _) = split_records(text, RECORDING_FORMAT)?;
        let mut frames = Vec::new();
        let mut truth = BTreeMap::new();
        let mut last_line = 1;
        for (n, l) in lines {
            last_line = n;
            match json_line::<RecordingLine>(n, l)? {
                RecordingLine::Frame(f) => {
                    if f.index != frames.len() {
                        return Err(parse_error(
                            n,
                            1,
                            format!(
                                "frame index {} out of sequence (expected {})",
                                f.index,
                                frames.len()
                            ),
                        ));
                    }
                    let frame = CentroidFrame::new(f.points, f.ids, f.timestamp)
                        .map_err(|e| parse_error(n, 1, e.to_string()))?;
                    frames.push(frame);
                }
                RecordingLine::Truth(t) => {
                    let frame = t.frame;
                    if truth.insert(frame, t).is_some() {
                        return Err(parse_error(
                            n,
                            1,
                            format!("duplicate truth for frame {frame}"),
                        ));
                    }
                }
            }
        }
        let rec = Self {
            header,
            frames,
            truth,
        };
        rec.validate()
            .map_err(|e| parse_error(last_line, 1, e.to_string()))?;
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesHeader {
    pub format: String,
    pub version: u32,
    pub units: Units,
    pub frames: usize,
    pub depth_calibrated: bool,
    pub shear_calibrated: bool,
}

impl FeaturesHeader {
    pub fn new(
        units: Units,
        frames: usize,
        depth_calibrated: bool,
        shear_calibrated: bool,
    ) -> Self {
        Self {
            format: FEATURES_FORMAT.into(),
            version: FORMAT_VERSION,
            units,
            frames,
            depth_calibrated,
            shear_calibrated,
        }
    }
}

pub fn write_features(header: &FeaturesHeader, records: &[FeatureRecord]) -> String {
    let mut out = to_line(header);
    for r in records {
        out += &to_line(r);
    }
    out
}

pub fn parse_features(text: &str) -> Result<(FeaturesHeader, Vec<FeatureRecord>)> {
    let (header, lines): (FeaturesHeader, _) = split_records(text, FEATURES_FORMAT)?;
    let records = lines
        .into_iter()
        .map(|(n, l)| json_line(n, l))
        .collect::<Result<Vec<FeatureRecord>>>()?;
    if records.len() != header.frames {
        return Err(parse_error(
            text.lines().count().max(1),
            1,
            format!(
                "header announces {} records, found {}",
                header.frames,
                records.len()
            ),
        ));
    }
    Ok((header, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationHeader {
    pub format: String,
    pub version: u32,
    pub kind: CalibrationKind,
    pub units: Units,
    pub knots: usize,
}

pub fn write_calibration(table: &CalibrationTable, units: Units) -> String {
    let header = CalibrationHeader {
        format: CALIBRATION_FORMAT.into(),
        version: FORMAT_VERSION,
        kind: table.kind(),
        units,
        knots: table.samples().len(),
    };
    let mut out = to_line(&header);
    for k in table.samples() {
        out += &to_line(k);
    }
    out
}

pub fn parse_calibration(text: &str) -> Result<(CalibrationTable, Units)> {
    let (header, lines): (CalibrationHeader, _) = split_records(text, CALIBRATION_FORMAT)?;
    let last = lines.last().map_or(1, |(n, _)| *n);
    let knots = lines
        .into_iter()
        .map(|(n, l)| json_line(n, l))
        .collect::<Result<Vec<Knot>>>()?;
    if knots.len() != header.knots {
        return Err(parse_error(
            last,
            1,
            format!(
                "header announces {} knots, found {}",
                header.knots,
                knots.len()
            ),
        ));
    }
    let table = CalibrationTable::from_knots(header.kind, &knots)
        .map_err(|e| parse_error(last, 1, e.to_string()))?;
    Ok((table, header.units))
}

/// Calibrations only apply to recordings in the units they were fitted in.
pub fn check_units(recording: Units, calibration: Units, kind: CalibrationKind) -> Result<()> {
    if recording != calibration {
        return Err(Error::Unit(format!(
            "{kind:?} calibration is in {calibration} but the recording is in {recording}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceHeader {
    pub format: String,
    pub version: u32,
    pub frame: usize,
    pub nx: usize,
    pub ny: usize,
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceRow {
    pub row: usize,
    /// `null` marks nodes outside the hull.
    pub z: Vec<Option<f64>>,
}

/// One header line, then one line per grid row in increasing y.
pub fn write_surface(frame: usize, surface: &DeformationSurface) -> String {
    let (ny, nx) = surface.grid.dim();
    let header = SurfaceHeader {
        format: SURFACE_FORMAT.into(),
        version: FORMAT_VERSION,
        frame,
        nx,
        ny,
        x_axis: surface.x_axis.clone(),
        y_axis: surface.y_axis.clone(),
    };
    let mut out = to_line(&header);
    for r in 0..ny {
        let z = (0..nx).map(|c| surface.value(r, c)).collect();
        out += &to_line(&SurfaceRow { row: r, z });
    }
    out
}

pub fn parse_surface(text: &str) -> Result<(SurfaceHeader, Vec<SurfaceRow>)> {
    let (header, lines): (SurfaceHeader, _) = split_records(text, SURFACE_FORMAT)?;
    let mut rows = Vec::new();
    for (n, l) in lines {
        let row: SurfaceRow = json_line(n, l)?;
        if row.row != rows.len() || row.z.len() != header.nx {
            return Err(parse_error(
                n,
                1,
                "row out of sequence or of the wrong width",
            ));
        }
        rows.push(row);
    }
    if rows.len() != header.ny {
        return Err(parse_error(
            text.lines().count().max(1),
            1,
            format!("expected {} rows, found {}", header.ny, rows.len()),
        ));
    }
    Ok((header, rows))
}
