//! Deformation surface: C¹ cubic interpolation of per-marker area deltas onto
//! a regular grid, its volume integral, and contact detection by regional
//! maxima.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::delaunay::Triangulation;
use crate::error::{Error, Result};
use crate::geometry::CentroidFrame;
use crate::point::Vec2;

pub const DEFAULT_GRID_NODES: usize = 64;
pub const MIN_GRID_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridResolution {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridResolution {
    fn default() -> Self {
        Self {
            nx: DEFAULT_GRID_NODES,
            ny: DEFAULT_GRID_NODES,
        }
    }
}

impl GridResolution {
    pub fn validate(&self) -> Result<()> {
        if self.nx < MIN_GRID_NODES || self.ny < MIN_GRID_NODES {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_GRID_NODES}x{MIN_GRID_NODES} nodes, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }
}

/// Cubic Bézier control net of one Clough–Tocher macro triangle.
#[derive(Debug, Clone)]
struct MacroPatch {
    vertices: [Vec2; 3],
    /// Per sub-triangle opposite vertex k, coefficients b[i][j][l] flattened
    /// as (300, 030, 003, 210, 120, 201, 021, 102, 012, 111) over (Vi, Vj, P).
    sub: [[f64; 10]; 3],
}

/// Piecewise-cubic C¹ interpolant over the Delaunay triangulation of the sites.
///
/// Each triangle is split at its centroid into three cubic patches. The cross-boundary
/// derivative along each triangle edge is linear, which makes adjacent
/// macro triangles agree to first order without sharing any other data.
#[derive(Debug, Clone)]
pub struct CloughTocher {
    points: Vec<Vec2>,
    values: Vec<f64>,
    gradients: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    patches: Vec<MacroPatch>,
}

impl CloughTocher {
    pub fn new(points: &[Vec2], values: &[f64]) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::FrameAlignment(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("value {i} is not finite")));
        }
        let tri = Triangulation::new(points)?;
        if tri.triangles.is_empty() {
            return Err(Error::DegenerateGeometry("sites are collinear".into()));
        }
        let gradients = estimate_gradients(&tri, values);
        Ok(Self::with_gradients(tri, values, gradients))
    }

    /// Builds the interpolant from caller-supplied vertex gradients.
    pub fn from_gradients(points: &[Vec2], values: &[f64], gradients: &[Vec2]) -> Result<Self> {
        if points.len() != values.len() || points.len() != gradients.len() {
            return Err(Error::FrameAlignment(
                "points, values and gradients differ in length".into(),
            ));
        }
        let tri = Triangulation::new(points)?;
        if tri.triangles.is_empty() {
            return Err(Error::DegenerateGeometry("sites are collinear".into()));
        }
        Ok(Self::with_gradients(tri, values, gradients.to_vec()))
    }

    fn with_gradients(tri: Triangulation, values: &[f64], gradients: Vec<Vec2>) -> Self {
        let patches = tri
            .triangles
            .iter()
            .map(|t| {
                let v = [tri.points[t[0]], tri.points[t[1]], tri.points[t[2]]];
                let f = [values[t[0]], values[t[1]], values[t[2]]];
                let g = [gradients[t[0]], gradients[t[1]], gradients[t[2]]];
                build_patch(v, f, g)
            })
            .collect();
        Self {
            points: tri.points,
            values: values.to_vec(),
            gradients,
            triangles: tri.triangles,
            patches,
        }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradients(&self) -> &[Vec2] {
        &self.gradients
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Value at `p`, or `None` outside the convex hull of the sites.
    pub fn eval(&self, p: Vec2) -> Option<f64> {
        let tol = self.barycentric_tolerance();
        self.patches.iter().find_map(|patch| {
            let l = barycentric(&patch.vertices, p);
            (l.iter().all(|&x| x >= -tol)).then(|| eval_patch(patch, l))
        })
    }

    fn barycentric_tolerance(&self) -> f64 {
        1e-10
    }
}

fn barycentric(v: &[Vec2; 3], p: Vec2) -> [f64; 3] {
    let det = (v[1] - v[0]).cross(v[2] - v[0]);
    let l1 = (p - v[0]).cross(v[2] - v[0]) / det;
    let l2 = (v[1] - v[0]).cross(p - v[0]) / det;
    [1.0 - l1 - l2, l1, l2]
}

fn build_patch(v: [Vec2; 3], f: [f64; 3], g: [Vec2; 3]) -> MacroPatch {
    let p = (v[0] + v[1] + v[2]) / 3.0;
    // e[i][j]: edge control point next to Vi on edge Vi-Vj.
    let mut e = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                e[i][j] = f[i] + g[i].dot(v[j] - v[i]) / 3.0;
            }
        }
    }
    let c: [f64; 3] = std::array::from_fn(|i| f[i] + g[i].dot(p - v[i]) / 3.0);

    // m[k]: the control point adjacent to the outer edge of sub-triangle k,
    // chosen so the derivative across that edge is linear along it.
    let m: [f64; 3] = std::array::from_fn(|k| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        let (a, b) = (v[i], v[j]);
        let n = (b - a).perp();
        // n = beta (B - A) + gamma (P - A); alpha = -beta - gamma.
        let (u, w) = (b - a, p - a);
        let det = u.cross(w);
        let beta = n.cross(w) / det;
        let gamma = u.cross(n) / det;
        let alpha = -beta - gamma;
        let q = (g[i].dot(n) + g[j].dot(n)) / 6.0;
        (q - alpha * e[i][j] - beta * e[j][i]) / gamma
    });
    let d: [f64; 3] = std::array::from_fn(|i| (c[i] + m[(i + 1) % 3] + m[(i + 2) % 3]) / 3.0);
    let center = (d[0] + d[1] + d[2]) / 3.0;

    let sub = std::array::from_fn(|k| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        [
            f[i], f[j], center, e[i][j], e[j][i], c[i], c[j], d[i], d[j], m[k],
        ]
    });
    MacroPatch { vertices: v, sub }
}

fn eval_patch(patch: &MacroPatch, l: [f64; 3]) -> f64 {
    // The sub-triangle containing the point is the one opposite the vertex
    // with the smallest barycentric coordinate.
    let k = (0..3).min_by(|&a, &b| l[a].total_cmp(&l[b])).unwrap();
    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
    let s = 3.0 * l[k];
    let a = l[i] - l[k];
    let b = l[j] - l[k];
    let q = &patch.sub[k];
    a * a * a * q[0]
        + b * b * b * q[1]
        + s * s * s * q[2]
        + 3.0 * a * a * b * q[3]
        + 3.0 * a * b * b * q[4]
        + 3.0 * a * a * s * q[5]
        + 3.0 * b * b * s * q[6]
        + 3.0 * a * s * s * q[7]
        + 3.0 * b * s * s * q[8]
        + 6.0 * a * b * s * q[9]
}

/// Vertex gradients minimising the summed squared second derivative of the
/// cubic Hermite curves along every triangulation edge, weighted by 1/L³.
///
/// The energy is positive definite in the gradients; the global system is
/// solved by Gauss–Seidel sweeps over vertices, each a 2x2 solve. Exact on
/// planes, and unlike local polynomial fits it stays bounded at hull
/// vertices whose neighbours all lie on one side.
fn estimate_gradients(tri: &Triangulation, values: &[f64]) -> Vec<Vec2> {
    const MAX_SWEEPS: usize = 2000;
    let n = tri.points.len();
    let value_scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if value_scale == 0.0 {
        return vec![Vec2::ZERO; n];
    }
    // Start from local plane fits, which already solve the system for planar data.
    let mut grads: Vec<Vec2> = (0..n).map(|i| plane_gradient(tri, values, i)).collect();
    let reach: Vec<f64> = (0..n)
        .map(|i| {
            tri.neighbors[i]
                .iter()
                .map(|&j| tri.points[j].distance(tri.points[i]))
                .fold(0.0, f64::max)
        })
        .collect();
    let tol = 1e-10 * value_scale;
    for _ in 0..MAX_SWEEPS {
        let mut change = 0.0f64;
        for i in 0..n {
            let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
            let mut b = Vec2::ZERO;
            for &j in &tri.neighbors[i] {
                let e = tri.points[j] - tri.points[i];
                let l2 = e.norm_sq();
                let w = 1.0 / (l2 * l2.sqrt());
                let delta = values[j] - values[i];
                let s1 = grads[j].dot(e);
                a11 += 8.0 * w * e.x * e.x;
                a12 += 8.0 * w * e.x * e.y;
                a22 += 8.0 * w * e.y * e.y;
                b += e * (w * (12.0 * delta - 4.0 * s1));
            }
            let Some(g) = solve2(a11, a12, a22, b) else {
                continue;
            };
            // Slope change across the longest incident edge, in value units.
            change = change.max((g - grads[i]).norm() * reach[i]);
            grads[i] = g;
        }
        if change <= tol {
            break;
        }
    }
    grads
}

/// Inverse-distance-weighted least-squares plane through vertex `i` and its neighbours.
fn plane_gradient(tri: &Triangulation, values: &[f64], i: usize) -> Vec2 {
    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    let mut b = Vec2::ZERO;
    for &j in &tri.neighbors[i] {
        let e = tri.points[j] - tri.points[i];
        let w = 1.0 / e.norm_sq();
        a11 += w * e.x * e.x;
        a12 += w * e.x * e.y;
        a22 += w * e.y * e.y;
        b += e * (w * (values[j] - values[i]));
    }
    solve2(a11, a12, a22, b).unwrap_or(Vec2::ZERO)
}

/// Solves the symmetric system [[a11, a12], [a12, a22]] x = b.
fn solve2(a11: f64, a12: f64, a22: f64, b: Vec2) -> Option<Vec2> {
    let det = a11 * a22 - a12 * a12;
    (det > 1e-300 * (a11 * a22).max(f64::MIN_POSITIVE))
        .then(|| Vec2::new((a22 * b.x - a12 * b.y) / det, (a11 * b.y - a12 * b.x) / det))
}

/// Regular grid of interpolated area deltas; `f64::NAN` marks nodes outside
/// the centroid hull. Indexed `[row, col]` = `[y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationSurface {
    pub grid: Array2<f64>,
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    pub mask: Array2<bool>,
}

impl DeformationSurface {
    pub fn dx(&self) -> f64 {
        self.x_axis[1] - self.x_axis[0]
    }

    pub fn dy(&self) -> f64 {
        self.y_axis[1] - self.y_axis[0]
    }

    /// The coarser of the two node spacings.
    pub fn spacing(&self) -> f64 {
        self.dx().max(self.dy())
    }

    pub fn node(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(self.x_axis[col], self.y_axis[row])
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.mask[(row, col)].then(|| self.grid[(row, col)])
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Largest value and its node, if any node is masked.
    pub fn peak(&self) -> Option<(Vec2, f64)> {
        let mut best: Option<(Vec2, f64)> = None;
        for ((r, c), &m) in self.mask.indexed_iter() {
            let z = self.grid[(r, c)];
            if m && best.is_none_or(|(_, b)| z > b) {
                best = Some((self.node(r, c), z));
            }
        }
        best
    }
}

/// Interpolates `z_values` (aligned with the frame's points) over the
/// bounding box of the frame. Nodes outside the hull are masked, never
/// extrapolated.
pub fn fit_surface(
    frame: &CentroidFrame,
    z_values: &[f64],
    resolution: GridResolution,
) -> Result<DeformationSurface> {
    resolution.validate()?;
    let interp = CloughTocher::new(frame.points(), z_values)?;
    Ok(grid_surface(&interp, resolution))
}

/// Samples an interpolant on a grid spanning its sites' bounding box.
pub fn grid_surface(interp: &CloughTocher, resolution: GridResolution) -> DeformationSurface {
    let pts = interp.points();
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in pts {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let x_axis = linspace(lo.x, hi.x, resolution.nx);
    let y_axis = linspace(lo.y, hi.y, resolution.ny);
    let mut grid = Array2::from_elem((resolution.ny, resolution.nx), f64::NAN);
    let mut mask = Array2::from_elem((resolution.ny, resolution.nx), false);
    let tol = interp.barycentric_tolerance();

    for patch in &interp.patches {
        let v = &patch.vertices;
        let bx = (
            v[0].x.min(v[1].x).min(v[2].x),
            v[0].x.max(v[1].x).max(v[2].x),
        );
        let by = (
            v[0].y.min(v[1].y).min(v[2].y),
            v[0].y.max(v[1].y).max(v[2].y),
        );
        let cols = index_range(&x_axis, bx.0, bx.1);
        let rows = index_range(&y_axis, by.0, by.1);
        for r in rows {
            for c in cols.clone() {
                if mask[(r, c)] {
                    continue;
                }
                let l = barycentric(v, Vec2::new(x_axis[c], y_axis[r]));
                if l.iter().all(|&x| x >= -tol) {
                    grid[(r, c)] = eval_patch(patch, l);
                    mask[(r, c)] = true;
                }
            }
        }
    }
    DeformationSurface {
        grid,
        x_axis,
        y_axis,
        mask,
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + step * i as f64 })
        .collect()
}

/// Indices of `axis` (ascending) within `[lo, hi]`, widened by one node so
/// nodes on a triangle edge are not lost to rounding.
fn index_range(axis: &[f64], lo: f64, hi: f64) -> std::ops::Range<usize> {
    let start = axis.partition_point(|&x| x < lo).saturating_sub(1);
    let end = (axis.partition_point(|&x| x <= hi) + 1).min(axis.len());
    start..end
}

/// Signed trapezoidal integral of the surface; unmasked nodes count as zero.
pub fn surface_volume(surface: &DeformationSurface) -> f64 {
    let (ny, nx) = surface.grid.dim();
    let mut total = 0.0;
    for r in 0..ny {
        let wy = if r == 0 || r == ny - 1 { 0.5 } else { 1.0 };
        for c in 0..nx {
            if !surface.mask[(r, c)] {
                continue;
            }
            let wx = if c == 0 || c == nx - 1 { 0.5 } else { 1.0 };
            total += wx * wy * surface.grid[(r, c)];
        }
    }
    total * surface.dx() * surface.dy()
}

/// One 8-connected plateau of equal masked values.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    pub nodes: Vec<(usize, usize)>,
    pub value: f64,
    pub is_maximum: bool,
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Labels every plateau of the masked grid.
pub fn plateaus(values: &Array2<f64>, mask: &Array2<bool>) -> Vec<Plateau> {
    let (ny, nx) = values.dim();
    let mut seen = Array2::from_elem((ny, nx), false);
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for r0 in 0..ny {
        for c0 in 0..nx {
            if !mask[(r0, c0)] || seen[(r0, c0)] {
                continue;
            }
            let value = values[(r0, c0)];
            let mut nodes = Vec::new();
            let mut is_maximum = true;
            seen[(r0, c0)] = true;
            queue.push_back((r0, c0));
            while let Some((r, c)) = queue.pop_front() {
                nodes.push((r, c));
                for (dr, dc) in NEIGHBORS {
                    let (Some(rr), Some(cc)) = (r.checked_add_signed(dr), c.checked_add_signed(dc))
                    else {
                        continue;
                    };
                    if rr >= ny || cc >= nx || !mask[(rr, cc)] {
                        continue;
                    }
                    let z = values[(rr, cc)];
                    if z > value {
                        is_maximum = false;
                    } else if z == value && !seen[(rr, cc)] {
                        seen[(rr, cc)] = true;
                        queue.push_back((rr, cc));
                    }
                }
            }
            out.push(Plateau {
                nodes,
                value,
                is_maximum,
            });
        }
    }
    out
}

/// Binary image of regional maxima: plateaus whose whole outer boundary is
/// strictly lower. Unmasked nodes are never maxima and do not bound plateaus.
pub fn regional_maxima(surface: &DeformationSurface) -> Array2<bool> {
    maxima_mask(&surface.grid, &surface.mask)
}

pub fn maxima_mask(values: &Array2<f64>, mask: &Array2<bool>) -> Array2<bool> {
    let mut out = Array2::from_elem(values.dim(), false);
    for p in plateaus(values, mask).into_iter().filter(|p| p.is_maximum) {
        for n in p.nodes {
            out[n] = true;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Contact {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSet {
    pub contacts: Vec<Contact>,
    pub threshold_used: f64,
}

impl ContactSet {
    pub fn empty(threshold: f64) -> Self {
        Self {
            contacts: Vec::new(),
            threshold_used: threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }
}

/// One contact per regional-maximum plateau at or above the threshold,
/// placed at the plateau centroid. Contacts are sorted by descending `z`.
pub fn detect_contacts(surface: &DeformationSurface, contact_threshold: f64) -> Result<ContactSet> {
    if contact_threshold.is_nan() || contact_threshold < 0.0 {
        return Err(Error::InvalidInput(format!(
            "contact threshold must be non-negative, got {contact_threshold}"
        )));
    }
    let mut contacts: Vec<Contact> = plateaus(&surface.grid, &surface.mask)
        .into_iter()
        .filter(|p| p.is_maximum && p.value >= contact_threshold)
        .map(|p| {
            let n = p.nodes.len() as f64;
            let sum = p
                .nodes
                .iter()
                .fold(Vec2::ZERO, |acc, &(r, c)| acc + surface.node(r, c));
            Contact {
                x: sum.x / n,
                y: sum.y / n,
                z: p.value,
            }
        })
        .collect();
    contacts.sort_by(|a, b| {
        b.z.total_cmp(&a.z)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    Ok(ContactSet {
        contacts,
        threshold_used: contact_threshold,
    })
}
