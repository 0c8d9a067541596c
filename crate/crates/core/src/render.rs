//! SVG rendering of a processed frame: cells shaded by area delta, local
//! shear segments, the global shear arrow and contact stars.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CellSet;
use crate::point::Vec2;
use crate::shear::ShearField;
use crate::surface::ContactSet;

pub const DEFAULT_COLOR_SCALE_MAX: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSpec {
    /// Area delta (percent) drawn at full saturation.
    pub color_scale_max: f64,
    pub show_local_shears: bool,
    pub show_global_shear: bool,
    pub show_contacts: bool,
    pub width: f64,
    pub height: f64,
    /// Multiplier from sensor displacement to drawn vector length.
    pub vector_scale: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            color_scale_max: DEFAULT_COLOR_SCALE_MAX,
            show_local_shears: true,
            show_global_shear: true,
            show_contacts: true,
            width: 800.0,
            height: 800.0,
            vector_scale: 1.0,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.color_scale_max > 0.0 && self.color_scale_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "color_scale_max must be positive, got {}",
                self.color_scale_max
            )));
        }
        if !(self.width > 0.0
            && self.height > 0.0
            && self.width.is_finite()
            && self.height.is_finite())
        {
            return Err(Error::InvalidInput("canvas must be positive".into()));
        }
        if !(self.vector_scale > 0.0 && self.vector_scale.is_finite()) {
            return Err(Error::InvalidInput("vector_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const WHITE: Rgb = Rgb {
        r: 255,
        g: 255,
        b: 255,
    };

    pub fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }
}

/// White at zero, red for growth (compression), blue for shrinkage, with
/// saturation `min(|delta| / scale, 1)`.
pub fn color_map(delta_percent: f64, color_scale_max: f64) -> Rgb {
    let t = (delta_percent.abs() / color_scale_max).min(1.0);
    let faded = (255.0 * (1.0 - t)).round() as u8;
    if delta_percent > 0.0 {
        Rgb {
            r: 255,
            g: faded,
            b: faded,
        }
    } else if delta_percent < 0.0 {
        Rgb {
            r: faded,
            g: faded,
            b: 255,
        }
    } else {
        Rgb::WHITE
    }
}

/// Uniform scale plus y flip from sensor coordinates to the canvas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanvasTransform {
    pub scale: f64,
    pub origin: Vec2,
    pub margin: f64,
    pub height: f64,
}

impl CanvasTransform {
    /// Fits the bounding box of `points` into the canvas with a 5% margin.
    pub fn fit(points: impl IntoIterator<Item = Vec2>, width: f64, height: f64) -> Self {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.is_finite() {
            lo = Vec2::ZERO;
            hi = Vec2::new(1.0, 1.0);
        }
        let margin = 0.05 * width.min(height);
        let span_x = (hi.x - lo.x).max(f64::MIN_POSITIVE);
        let span_y = (hi.y - lo.y).max(f64::MIN_POSITIVE);
        let scale = ((width - 2.0 * margin) / span_x).min((height - 2.0 * margin) / span_y);
        Self {
            scale,
            origin: lo,
            margin,
            height,
        }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            self.margin + (p.x - self.origin.x) * self.scale,
            self.height - self.margin - (p.y - self.origin.y) * self.scale,
        )
    }
}

fn fmt_point(out: &mut String, p: Vec2) {
    let _ = write!(out, "{:.6},{:.6}", p.x, p.y);
}

fn points_attr(pts: impl IntoIterator<Item = Vec2>) -> String {
    let mut out = String::new();
    for (i, p) in pts.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        fmt_point(&mut out, p);
    }
    out
}

fn star(center: Vec2, outer: f64) -> Vec<Vec2> {
    let inner = outer * 0.4;
    (0..10)
        .map(|k| {
            let r = if k % 2 == 0 { outer } else { inner };
            // Point up on the canvas, which has y pointing down.
            let a = std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * k as f64 / 5.0;
            center + Vec2::new(r * a.cos(), -r * a.sin())
        })
        .collect()
}

/// Renders one frame. Output depends only on the inputs, byte for byte.
pub fn render_frame(
    cells: &CellSet,
    deltas: &[f64],
    shear: &ShearField,
    contacts: &ContactSet,
    spec: &RenderSpec,
) -> Result<String> {
    spec.validate()?;
    if deltas.len() != cells.len() {
        return Err(Error::FrameAlignment(format!(
            "{} deltas for {} cells",
            deltas.len(),
            cells.len()
        )));
    }
    if spec.show_local_shears && shear.locals.len() != cells.len() {
        return Err(Error::FrameAlignment(format!(
            "{} local shears for {} cells",
            shear.locals.len(),
            cells.len()
        )));
    }
    if cells.sites.len() != cells.len() {
        return Err(Error::FrameAlignment(
            "cell set has mismatched sites".into(),
        ));
    }
    let tf = CanvasTransform::fit(
        cells.cells.iter().flatten().copied(),
        spec.width,
        spec.height,
    );

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = spec.width,
        h = spec.height
    );
    let _ = writeln!(
        svg,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<g id="cells" stroke="#808080" stroke-width="0.5">"##
    );
    for (i, (cell, &d)) in cells.cells.iter().zip(deltas).enumerate() {
        let _ = writeln!(
            svg,
            r#"<polygon data-id="{}" fill="{}" points="{}"/>"#,
            cells.owner_ids[i],
            color_map(d, spec.color_scale_max).hex(),
            points_attr(cell.iter().map(|&p| tf.apply(p)))
        );
    }
    svg.push_str("</g>\n");

    if spec.show_local_shears {
        let _ = writeln!(
            svg,
            r##"<g id="local-shear" stroke="#d00000" stroke-width="1">"##
        );
        for (&site, &v) in cells.sites.iter().zip(&shear.locals) {
            let a = tf.apply(site);
            let b = tf.apply(site + v * spec.vector_scale);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.6}" y1="{:.6}" x2="{:.6}" y2="{:.6}"/>"#,
                a.x, a.y, b.x, b.y
            );
        }
        svg.push_str("</g>\n");
    }

    if spec.show_global_shear && !shear.direction_undefined() {
        let n = cells.sites.len() as f64;
        let center = cells.sites.iter().fold(Vec2::ZERO, |acc, &p| acc + p) / n;
        let a = tf.apply(center);
        let b = tf.apply(center + shear.global * spec.vector_scale);
        let dir = b - a;
        let len = dir.norm();
        let _ = writeln!(
            svg,
            r##"<g id="global-shear" stroke="#000000" fill="#000000">"##
        );
        let _ = writeln!(
            svg,
            r#"<line stroke-width="3" x1="{:.6}" y1="{:.6}" x2="{:.6}" y2="{:.6}"/>"#,
            a.x, a.y, b.x, b.y
        );
        if len > 0.0 {
            let u = dir / len;
            let head = (0.02 * spec.width.min(spec.height)).min(0.5 * len);
            let base = b - u * head;
            let side = u.perp() * (0.5 * head);
            let _ = writeln!(
                svg,
                r#"<polygon points="{}"/>"#,
                points_attr([b, base + side, base - side])
            );
        }
        svg.push_str("</g>\n");
    }

    if spec.show_contacts && !contacts.is_empty() {
        let size = 0.02 * spec.width.min(spec.height);
        let _ = writeln!(
            svg,
            r##"<g id="contacts" fill="#0050ff" stroke="#000000" stroke-width="0.5">"##
        );
        for c in &contacts.contacts {
            let _ = writeln!(
                svg,
                r#"<polygon data-z="{:.6}" points="{}"/>"#,
                c.z,
                points_attr(star(tf.apply(c.position()), size))
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{tessellate, BoundaryParams, CentroidFrame};
    use crate::shear::global_shear;
    use crate::surface::Contact;

    #[test]
    fn color_endpoints() {
        assert_eq!(color_map(0.0, 30.0), Rgb::WHITE);
        assert_eq!(color_map(30.0, 30.0), Rgb { r: 255, g: 0, b: 0 });
        assert_eq!(color_map(-30.0, 30.0), Rgb { r: 0, g: 0, b: 255 });
        assert_eq!(color_map(900.0, 30.0), Rgb { r: 255, g: 0, b: 0 });
    }

    #[test]
    fn color_is_antisymmetric() {
        for k in 0..200 {
            let d = k as f64 * 0.37;
            let (p, n) = (color_map(d, 30.0), color_map(-d, 30.0));
            assert_eq!((p.r, p.g, p.b), (n.b, n.g, n.r));
        }
    }

    fn square_frame() -> (CellSet, CentroidFrame) {
        let pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.5, 0.4),
        ];
        let f = CentroidFrame::from_points(pts, 0).unwrap();
        let ring = BoundaryParams::default().build(&f).unwrap();
        (tessellate(&f, &ring).unwrap(), f)
    }

    #[test]
    fn zero_frame_is_white_without_arrow_or_stars() {
        let (cells, _) = square_frame();
        let shear = global_shear(&vec![Vec2::ZERO; cells.len()]).unwrap();
        let svg = render_frame(
            &cells,
            &vec![0.0; cells.len()],
            &shear,
            &ContactSet::empty(1.0),
            &RenderSpec::default(),
        )
        .unwrap();
        assert_eq!(
            svg.matches(r##"fill="#ffffff" points"##).count(),
            cells.len()
        );
        assert!(!svg.contains("global-shear"));
        assert!(!svg.contains("contacts"));
    }

    #[test]
    fn misaligned_deltas_are_rejected() {
        let (cells, _) = square_frame();
        let shear = global_shear(&vec![Vec2::ZERO; cells.len()]).unwrap();
        let r = render_frame(
            &cells,
            &[0.0],
            &shear,
            &ContactSet::empty(1.0),
            &RenderSpec::default(),
        );
        assert!(matches!(r, Err(Error::FrameAlignment(_))));
    }

    #[test]
    fn arrow_and_star_present() {
        let (cells, _) = square_frame();
        let shear = global_shear(&vec![Vec2::new(0.1, 0.0); cells.len()]).unwrap();
        let contacts = ContactSet {
            contacts: vec![Contact {
                x: 0.5,
                y: 0.5,
                z: 3.0,
            }],
            threshold_used: 1.0,
        };
        let svg = render_frame(
            &cells,
            &vec![5.0; cells.len()],
            &shear,
            &contacts,
            &RenderSpec::default(),
        )
        .unwrap();
        assert!(svg.contains("global-shear"));
        assert_eq!(svg.matches("data-z=").count(), 1);
        let again = render_frame(
            &cells,
            &vec![5.0; cells.len()],
            &shear,
            &contacts,
            &RenderSpec::default(),
        )
        .unwrap();
        assert_eq!(svg, again);
    }

    #[test]
    fn transform_preserves_aspect_and_flips_y() {
        let tf = CanvasTransform::fit([Vec2::new(0.0, 0.0), Vec2::new(2.0, 1.0)], 100.0, 100.0);
        let a = tf.apply(Vec2::new(0.0, 0.0));
        let b = tf.apply(Vec2::new(2.0, 1.0));
        assert!((b.x - a.x - 2.0 * (a.y - b.y)).abs() < 1e-12);
        assert!(b.y < a.y);
    }
}
