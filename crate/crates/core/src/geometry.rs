//! Bounded Voronoi tessellation of marker centroids.
//!
//! Outer centroids of a marker layout own unbounded Voronoi regions. To give
//! every real centroid a finite cell, a ring of artificial sites is placed on
//! a polygon enclosing the layout (the convex hull pushed outward by a fixed
//! offset), denser than the real markers. The diagram of real plus artificial
//! sites is computed, artificial cells are discarded, and each real cell is
//! clipped to the enclosing polygon. The cell areas are the transduced third
//! dimension used by [`crate::surface`].

use serde::{Deserialize, Serialize};

use crate::delaunay::Triangulation;
use crate::error::{Error, Result};
use crate::point::{
    clip_half_plane, convex_hull, orient2d, signed_area, strictly_inside_convex, Vec2,
};

pub type MarkerId = u32;

/// Relative tolerance (against the frame diameter) under which two points are
/// considered the same site.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// One time-sample of marker centroids with stable per-marker identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidFrame {
    points: Vec<Vec2>,
    ids: Vec<MarkerId>,
    timestamp: u64,
}

impl CentroidFrame {
    pub fn new(points: Vec<Vec2>, ids: Vec<MarkerId>, timestamp: u64) -> Result<Self> {
        if points.len() != ids.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} ids",
                points.len(),
                ids.len()
            )));
        }
        if points.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "a frame needs at least 3 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i} is not finite")));
        }
        let mut sorted_ids = ids.clone();
        sorted_ids.sort_unstable();
        if let Some(w) = sorted_ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!(
                "marker id {} appears twice",
                w[0]
            )));
        }
        check_duplicates(&points)?;
        Ok(Self {
            points,
            ids,
            timestamp,
        })
    }

    /// Frame with ids `0..n`.
    pub fn from_points(points: Vec<Vec2>, timestamp: u64) -> Result<Self> {
        let ids = (0..points.len() as MarkerId).collect();
        Self::new(points, ids, timestamp)
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn ids(&self) -> &[MarkerId] {
        &self.ids
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same markers with new positions (validated).
    pub fn with_points(&self, points: Vec<Vec2>, timestamp: u64) -> Result<Self> {
        Self::new(points, self.ids.clone(), timestamp)
    }

    /// Positions of `self` reordered to follow the id order of `reference`.
    pub fn aligned_to(&self, reference: &CentroidFrame) -> Result<Vec<Vec2>> {
        if self.ids == reference.ids {
            return Ok(self.points.clone());
        }
        if self.len() != reference.len() {
            return Err(Error::FrameAlignment(format!(
                "reference has {} markers, frame has {}",
                reference.len(),
                self.len()
            )));
        }
        let lookup: std::collections::HashMap<MarkerId, Vec2> = self
            .ids
            .iter()
            .copied()
            .zip(self.points.iter().copied())
            .collect();
        reference
            .ids
            .iter()
            .map(|id| {
                lookup
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::FrameAlignment(format!("marker {id} missing from frame")))
            })
            .collect()
    }

    pub fn centroid(&self) -> Vec2 {
        let sum = self.points.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
        sum / self.points.len() as f64
    }
}

fn bbox(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Bounding-box diagonal; within a factor of sqrt(2) of the true diameter.
fn diameter(points: &[Vec2]) -> f64 {
    let (lo, hi) = bbox(points);
    (hi - lo).norm()
}

fn check_duplicates(points: &[Vec2]) -> Result<()> {
    let tol = DUPLICATE_TOLERANCE * diameter(points);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j].x - points[i].x > tol {
                break;
            }
            if points[i].distance(points[j]) <= tol {
                return Err(Error::DuplicateSite {
                    first: i.min(j),
                    second: i.max(j),
                });
            }
        }
    }
    Ok(())
}

/// Median over points of the distance to the nearest other point.
pub fn median_nearest_neighbor(points: &[Vec2]) -> f64 {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
    // Scan outward in x from each point until the x gap alone exceeds the best distance.
    let mut nn: Vec<f64> = (0..order.len())
        .map(|k| {
            let p = points[order[k]];
            let mut best = f64::INFINITY;
            for &j in &order[k + 1..] {
                if points[j].x - p.x >= best {
                    break;
                }
                best = best.min(p.distance(points[j]));
            }
            for &j in order[..k].iter().rev() {
                if p.x - points[j].x >= best {
                    break;
                }
                best = best.min(p.distance(points[j]));
            }
            best
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let n = nn.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        nn[n / 2]
    } else {
        0.5 * (nn[n / 2 - 1] + nn[n / 2])
    }
}

/// Enclosing polygon plus the artificial sites placed along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRing {
    polygon: Vec<Vec2>,
    artificial_points: Vec<Vec2>,
}

impl BoundaryRing {
    /// `polygon` must be strictly convex and counter-clockwise.
    pub fn new(polygon: Vec<Vec2>, artificial_points: Vec<Vec2>) -> Result<Self> {
        let n = polygon.len();
        if n < 3 {
            return Err(Error::DegenerateGeometry(
                "boundary polygon needs 3 vertices".into(),
            ));
        }
        if polygon
            .iter()
            .chain(&artificial_points)
            .any(|p| !p.is_finite())
        {
            return Err(Error::InvalidInput(
                "boundary contains non-finite coordinates".into(),
            ));
        }
        for i in 0..n {
            if orient2d(polygon[i], polygon[(i + 1) % n], polygon[(i + 2) % n]) <= 0.0 {
                return Err(Error::DegenerateGeometry(
                    "boundary polygon must be strictly convex and counter-clockwise".into(),
                ));
            }
        }
        Ok(Self {
            polygon,
            artificial_points,
        })
    }

    pub fn polygon(&self) -> &[Vec2] {
        &self.polygon
    }

    pub fn artificial_points(&self) -> &[Vec2] {
        &self.artificial_points
    }

    pub fn contains_strictly(&self, p: Vec2) -> bool {
        strictly_inside_convex(&self.polygon, p)
    }
}

/// Boundary parameters expressed relative to the median nearest-neighbour
/// spacing of the reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryParams {
    pub offset_ratio: f64,
    pub spacing_ratio: f64,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self {
            offset_ratio: 0.5,
            spacing_ratio: 0.5,
        }
    }
}

impl BoundaryParams {
    pub fn build(&self, frame: &CentroidFrame) -> Result<BoundaryRing> {
        if !(self.offset_ratio > 0.0 && self.offset_ratio.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "boundary offset ratio must be positive, got {}",
                self.offset_ratio
            )));
        }
        let offset = self.offset_ratio * median_nearest_neighbor(frame.points());
        build_boundary(frame, offset, self.spacing_ratio)
    }
}

/// Dilates the convex hull of the centroids outward by `offset` (mitred
/// corners) and places artificial sites along it. Every polygon vertex is a
/// site; each edge is divided evenly so the arc-length spacing is at most
/// `spacing_ratio` times the median nearest-neighbour distance.
pub fn build_boundary(
    frame: &CentroidFrame,
    offset: f64,
    spacing_ratio: f64,
) -> Result<BoundaryRing> {
    if !(offset > 0.0 && offset.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "offset must be positive, got {offset}"
        )));
    }
    if !(spacing_ratio > 0.0 && spacing_ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "spacing ratio must lie in (0, 1), got {spacing_ratio}"
        )));
    }
    let hull = drop_flat_vertices(convex_hull(frame.points()));
    if hull.len() < 3 {
        return Err(Error::DegenerateGeometry("centroids are collinear".into()));
    }

    let n = hull.len();
    let normals: Vec<Vec2> = (0..n)
        .map(|i| {
            let e = hull[(i + 1) % n] - hull[i];
            Vec2::new(e.y, -e.x) / e.norm()
        })
        .collect();
    let polygon: Vec<Vec2> = (0..n)
        .map(|i| {
            let prev = normals[(i + n - 1) % n];
            let next = normals[i];
            hull[i] + (prev + next) * (offset / (1.0 + prev.dot(next)))
        })
        .collect();

    let spacing = spacing_ratio * median_nearest_neighbor(frame.points());
    let mut artificial = Vec::new();
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        let steps = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
        for k in 0..steps {
            artificial.push(a + (b - a) * (k as f64 / steps as f64));
        }
    }
    BoundaryRing::new(polygon, artificial)
}

/// Removes hull vertices lying within rounding distance of the chord joining
/// their neighbours. Such vertices are exact hull corners but would mitre
/// into a polygon that is not strictly convex.
fn drop_flat_vertices(mut hull: Vec<Vec2>) -> Vec<Vec2> {
    if hull.len() < 3 {
        return hull;
    }
    let (mut lo, mut hi) = (hull[0], hull[0]);
    for p in &hull {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let tol = 1e-9 * lo.distance(hi);
    loop {
        let n = hull.len();
        if n <= 3 {
            return hull;
        }
        let flat = (0..n).find(|&i| {
            let (a, b, c) = (hull[(i + n - 1) % n], hull[i], hull[(i + 1) % n]);
            (c - a).cross(b - a).abs() / a.distance(c) <= tol
        });
        match flat {
            Some(i) => {
                hull.remove(i);
            }
            None => return hull,
        }
    }
}

/// Bounded cells of the real centroids, in frame order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSet {
    pub cells: Vec<Vec<Vec2>>,
    /// Generating centroid of each cell.
    pub sites: Vec<Vec2>,
    pub areas: Vec<f64>,
    pub owner_ids: Vec<MarkerId>,
}

impl CellSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Tessellates a frame inside a boundary. See [`voronoi_cells`].
pub fn tessellate(frame: &CentroidFrame, boundary: &BoundaryRing) -> Result<CellSet> {
    let cells = voronoi_cells(frame.points(), boundary)?;
    let areas = cells.iter().map(|c| signed_area(c)).collect();
    Ok(CellSet {
        cells,
        sites: frame.points().to_vec(),
        areas,
        owner_ids: frame.ids().to_vec(),
    })
}

/// Voronoi cells of `real` sites computed together with the boundary's
/// artificial sites, clipped to the boundary polygon. Artificial cells are
/// never built. Accepts any number of real sites, including one.
///
/// Each cell is the boundary polygon cut by the perpendicular bisectors
/// between the site and its Delaunay neighbours.
pub fn voronoi_cells(real: &[Vec2], boundary: &BoundaryRing) -> Result<Vec<Vec<Vec2>>> {
    for (index, &p) in real.iter().enumerate() {
        if !boundary.contains_strictly(p) {
            return Err(Error::Containment {
                index,
                x: p.x,
                y: p.y,
            });
        }
    }
    let mut sites = real.to_vec();
    sites.extend_from_slice(boundary.artificial_points());
    check_duplicates(&sites)?;

    let scale = diameter(&sites);
    let merge_tol = 1e-12 * scale;
    let tri = Triangulation::new(&sites)?;

    real.iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut cell = boundary.polygon().to_vec();
            for &j in &tri.neighbors[i] {
                let q = sites[j];
                let normal = q - p;
                cell = clip_half_plane(&cell, normal, normal.dot((p + q) * 0.5));
            }
            cell.dedup_by(|b, a| a.distance(*b) <= merge_tol);
            while cell.len() > 1 && cell[0].distance(cell[cell.len() - 1]) <= merge_tol {
                cell.pop();
            }
            if cell.len() < 3 || signed_area(&cell) <= 0.0 {
                return Err(Error::DegenerateGeometry(format!(
                    "cell of site {i} collapsed"
                )));
            }
            Ok(cell)
        })
        .collect()
}

/// Shoelace area of every cell, aligned with `owner_ids`.
pub fn cell_areas(cells: &CellSet) -> Vec<f64> {
    cells.cells.iter().map(|c| signed_area(c)).collect()
}

/// Per-cell percentage change of area relative to `reference`. Positive values
/// mean the cell grew (compression of the skin above it).
pub fn area_deltas(reference: &CellSet, current: &CellSet) -> Result<Vec<f64>> {
    if reference.owner_ids != current.owner_ids {
        return Err(Error::FrameAlignment(
            "cell sets have different owners".into(),
        ));
    }
    Ok(reference
        .areas
        .iter()
        .zip(&current.areas)
        .map(|(&a0, &a1)| 100.0 * (a1 - a0) / a0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> CentroidFrame {
        CentroidFrame::from_points(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ],
            0,
        )
        .unwrap()
    }

    fn point_in_convex_or_on_edge(poly: &[Vec2], p: Vec2) -> bool {
        let n = poly.len();
        (0..n).all(|i| orient2d(poly[i], poly[(i + 1) % n], p) >= 0.0)
    }

    #[test]
    fn unit_square_boundary_is_dilated_square() {
        let ring = build_boundary(&unit_square(), 0.5, 0.5).unwrap();
        let mut poly = ring.polygon().to_vec();
        poly.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        let expected = [(-0.5, -0.5), (-0.5, 1.5), (1.5, -0.5), (1.5, 1.5)];
        for (p, (x, y)) in poly.iter().zip(expected) {
            assert!((p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12, "{p:?}");
        }
        assert!((signed_area(ring.polygon()) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn artificial_spacing_below_marker_spacing() {
        let frame = unit_square();
        let ring = build_boundary(&frame, 0.5, 0.5).unwrap();
        let art = ring.artificial_points();
        let n = art.len();
        let max_gap = (0..n)
            .map(|i| art[i].distance(art[(i + 1) % n]))
            .fold(0.0, f64::max);
        assert!(max_gap < median_nearest_neighbor(frame.points()));
        assert!(max_gap <= 0.5 + 1e-12);
    }

    #[test]
    fn nearly_collinear_hull_vertices_are_dropped() {
        let mut pts = Vec::new();
        for i in 0..=10 {
            let t = i as f64 * 0.1;
            // The layout sides accumulate rounding error like this.
            pts.push(Vec2::new(
                t * 7.0,
                t * 3.0 + if i % 3 == 1 { 1e-14 } else { 0.0 },
            ));
        }
        pts.push(Vec2::new(0.0, 5.0));
        let frame = CentroidFrame::from_points(pts, 0).unwrap();
        let ring = build_boundary(&frame, 0.5, 0.5).unwrap();
        assert_eq!(ring.polygon().len(), 3);
    }

    #[test]
    fn collinear_frame_is_degenerate() {
        let frame = CentroidFrame::from_points(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(2.0, 2.0),
            ],
            0,
        )
        .unwrap();
        assert!(matches!(
            build_boundary(&frame, 0.5, 0.5),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn frame_validation() {
        assert!(matches!(
            CentroidFrame::from_points(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)], 0),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            CentroidFrame::from_points(vec![Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::ZERO], 0),
            Err(Error::DuplicateSite {
                first: 0,
                second: 2
            })
        ));
        assert!(CentroidFrame::new(
            vec![Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
            vec![1, 1, 2],
            0
        )
        .is_err());
        assert!(CentroidFrame::from_points(
            vec![Vec2::ZERO, Vec2::new(f64::NAN, 0.0), Vec2::new(0.0, 1.0)],
            0
        )
        .is_err());
    }

    #[test]
    fn unit_square_cells_meet_at_center() {
        let frame = unit_square();
        let ring = build_boundary(&frame, 0.5, 0.5).unwrap();
        let cells = tessellate(&frame, &ring).unwrap();
        assert_eq!(cells.len(), 4);
        for cell in &cells.cells {
            assert!(
                cell.iter().any(|v| v.distance(Vec2::new(0.5, 0.5)) < 1e-12),
                "cell {cell:?} misses the shared vertex"
            );
        }
        // Artificial sites trim the outer corners, symmetrically.
        for a in &cells.areas {
            assert!((a - cells.areas[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_site_in_square_boundary() {
        let polygon = vec![
            Vec2::new(-1.0, -1.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(-1.0, 1.0),
        ];
        let mut artificial = Vec::new();
        for i in 0..4 {
            artificial.push(polygon[i]);
            artificial.push((polygon[i] + polygon[(i + 1) % 4]) * 0.5);
        }
        let ring = BoundaryRing::new(polygon, artificial).unwrap();
        let cells = voronoi_cells(&[Vec2::ZERO], &ring).unwrap();
        assert_eq!(cells.len(), 1);
        assert!(strictly_inside_convex(&cells[0], Vec2::ZERO));
        // Midpoint bisectors bound the cell; corner bisectors only touch its corners.
        assert!((signed_area(&cells[0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regular_hexagon_cell_area() {
        let r = 1.3;
        let hex: Vec<Vec2> = (0..6)
            .map(|k| Vec2::from_polar(r, std::f64::consts::FRAC_PI_3 * k as f64))
            .collect();
        let set = CellSet {
            cells: vec![hex],
            sites: vec![Vec2::ZERO],
            areas: vec![0.0],
            owner_ids: vec![0],
        };
        let area = cell_areas(&set)[0];
        assert!((area - 1.5 * 3f64.sqrt() * r * r).abs() < 1e-12);
    }

    #[test]
    fn centroid_outside_boundary_is_rejected() {
        let frame = unit_square();
        let ring = BoundaryRing::new(
            vec![
                Vec2::new(0.1, 0.1),
                Vec2::new(0.9, 0.1),
                Vec2::new(0.5, 0.9),
            ],
            vec![],
        )
        .unwrap();
        assert!(matches!(
            tessellate(&frame, &ring),
            Err(Error::Containment { .. })
        ));
    }

    #[test]
    fn artificial_site_on_real_site_is_duplicate() {
        let frame = unit_square();
        let ring = build_boundary(&frame, 0.5, 0.5).unwrap();
        let mut art = ring.artificial_points().to_vec();
        art.push(Vec2::new(1.0, 1.0));
        let ring = BoundaryRing::new(ring.polygon().to_vec(), art).unwrap();
        assert!(matches!(
            tessellate(&frame, &ring),
            Err(Error::DuplicateSite { .. })
        ));
    }

    #[test]
    fn deltas_identity_and_arithmetic() {
        let frame = unit_square();
        let ring = build_boundary(&frame, 0.5, 0.5).unwrap();
        let cells = tessellate(&frame, &ring).unwrap();
        assert!(area_deltas(&cells, &cells)
            .unwrap()
            .iter()
            .all(|&d| d == 0.0));

        let mut reference = cells.clone();
        reference.areas[2] = 1.0;
        let mut grown = cells.clone();
        grown.areas[2] = 1.2;
        let d = area_deltas(&reference, &grown).unwrap();
        assert!((d[2] - 20.0).abs() < 1e-9);

        let mut other = cells.clone();
        other.owner_ids[0] = 99;
        assert!(matches!(
            area_deltas(&cells, &other),
            Err(Error::FrameAlignment(_))
        ));
    }

    #[test]
    fn every_cell_contains_its_owner() {
        let pts: Vec<Vec2> = (0..40)
            .map(|i| {
                let t = i as f64;
                Vec2::new(
                    (t * 0.618_034).fract() * 10.0,
                    (t * 0.414_214).fract() * 10.0,
                )
            })
            .collect();
        let frame = CentroidFrame::from_points(pts, 0).unwrap();
        let ring = BoundaryParams::default().build(&frame).unwrap();
        let cells = tessellate(&frame, &ring).unwrap();
        assert_eq!(cells.len(), frame.len());
        for (cell, &p) in cells.cells.iter().zip(frame.points()) {
            assert!(point_in_convex_or_on_edge(cell, p));
            assert!(strictly_inside_convex(cell, p));
        }
    }
}
