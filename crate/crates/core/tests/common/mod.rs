//! Independent oracles shared by the integration and acceptance suites.
//!
//! Nothing here calls into the triangulation, clipping, interpolation or
//! labelling code it is used to check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_voronoi::Vec2;

/// Pixel-centre raster over the bounding box of a convex polygon.
pub struct Raster {
    pub origin: Vec2,
    pub dx: f64,
    pub dy: f64,
    pub width: usize,
    pub height: usize,
}

impl Raster {
    pub fn over(polygon: &[Vec2], resolution: usize) -> Self {
        let (mut lo, mut hi) = (polygon[0], polygon[0]);
        for p in polygon {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        Self {
            origin: lo,
            dx: (hi.x - lo.x) / resolution as f64,
            dy: (hi.y - lo.y) / resolution as f64,
            width: resolution,
            height: resolution,
        }
    }

    pub fn pixel_x(&self, i: usize) -> f64 {
        self.origin.x + (i as f64 + 0.5) * self.dx
    }

    pub fn pixel_y(&self, j: usize) -> f64 {
        self.origin.y + (j as f64 + 0.5) * self.dy
    }

    pub fn pixel_area(&self) -> f64 {
        self.dx * self.dy
    }
}

/// Open x-interval of a horizontal line inside a counter-clockwise convex
/// polygon, from the sign of the edge cross products.
fn row_span(polygon: &[Vec2], y: f64) -> (f64, f64) {
    let n = polygon.len();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        // (b - a) x (p - a) > 0  <=>  c0 + c1 * x > 0
        let c1 = -(b.y - a.y);
        let c0 = (b.x - a.x) * (y - a.y) + (b.y - a.y) * a.x;
        if c1 > 0.0 {
            lo = lo.max(-c0 / c1);
        } else if c1 < 0.0 {
            hi = hi.min(-c0 / c1);
        } else if c0 <= 0.0 {
            return (0.0, 0.0);
        }
    }
    (lo, hi)
}

/// Counts, per site, the raster pixels inside `polygon` whose nearest site
/// (over `sites`) it is, and converts counts to area.
///
/// Each row is solved exactly with the lower envelope of the squared-distance
/// parabolas `(x - xs)^2 + (y - ys)^2`, which is the per-pixel argmin over all
/// sites computed in one sweep.
pub fn raster_areas(sites: &[Vec2], polygon: &[Vec2], resolution: usize) -> Vec<f64> {
    let raster = Raster::over(polygon, resolution);
    let mut counts = vec![0u64; sites.len()];

    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|&a, &b| sites[a].x.total_cmp(&sites[b].x));

    let mut hull: Vec<usize> = Vec::with_capacity(sites.len());
    let mut starts: Vec<f64> = Vec::with_capacity(sites.len());
    for j in 0..raster.height {
        let y = raster.pixel_y(j);
        let (span_lo, span_hi) = row_span(polygon, y);
        if span_lo >= span_hi {
            continue;
        }
        let height = |k: usize| (y - sites[k].y).powi(2);

        hull.clear();
        starts.clear();
        for &k in &order {
            let xk = sites[k].x;
            let fk = height(k);
            loop {
                let Some(&top) = hull.last() else {
                    hull.push(k);
                    starts.push(f64::NEG_INFINITY);
                    break;
                };
                let xt = sites[top].x;
                let ft = height(top);
                if xk == xt {
                    if fk < ft {
                        hull.pop();
                        starts.pop();
                        continue;
                    }
                    break;
                }
                let s = ((fk + xk * xk) - (ft + xt * xt)) / (2.0 * (xk - xt));
                if s <= *starts.last().unwrap() {
                    hull.pop();
                    starts.pop();
                    continue;
                }
                hull.push(k);
                starts.push(s);
                break;
            }
        }

        let mut h = 0;
        for i in 0..raster.width {
            let x = raster.pixel_x(i);
            if x <= span_lo || x >= span_hi {
                continue;
            }
            while h + 1 < hull.len() && starts[h + 1] < x {
                h += 1;
            }
            counts[hull[h]] += 1;
        }
    }
    counts
        .iter()
        .map(|&c| c as f64 * raster.pixel_area())
        .collect()
}

/// Literal per-pixel nearest-site search; used to validate [`raster_areas`]
/// on small rasters.
pub fn brute_raster_areas(sites: &[Vec2], polygon: &[Vec2], resolution: usize) -> Vec<f64> {
    let raster = Raster::over(polygon, resolution);
    let mut counts = vec![0u64; sites.len()];
    let n = polygon.len();
    for j in 0..raster.height {
        for i in 0..raster.width {
            let p = Vec2::new(raster.pixel_x(i), raster.pixel_y(j));
            let inside = (0..n).all(|e| {
                let a = polygon[e];
                let b = polygon[(e + 1) % n];
                (b - a).cross(p - a) > 0.0
            });
            if !inside {
                continue;
            }
            let mut best = 0;
            for k in 1..sites.len() {
                if p.distance(sites[k]) < p.distance(sites[best]) {
                    best = k;
                }
            }
            counts[best] += 1;
        }
    }
    counts
        .iter()
        .map(|&c| c as f64 * raster.pixel_area())
        .collect()
}

/// `n` points in `[0, side]^2` with a hard-core minimum separation of
/// `0.5 * side / sqrt(n)`, mimicking a physical marker layout.
pub fn random_points(seed: u64, n: usize, side: f64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sep = 0.5 * side / (n as f64).sqrt();
    let mut pts: Vec<Vec2> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = Vec2::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
        if pts.iter().all(|q| q.distance(p) >= sep) {
            pts.push(p);
        }
    }
    pts
}

/// Regional maxima by growing every pixel's plateau independently and testing
/// its outer boundary. 8-connectivity; cells with `mask == false` are absent.
pub fn flood_fill_maxima(values: &[f64], mask: &[bool], rows: usize, cols: usize) -> Vec<bool> {
    let mut out = vec![false; rows * cols];
    for start in 0..rows * cols {
        if !mask[start] {
            continue;
        }
        let v = values[start];
        let mut plateau = vec![false; rows * cols];
        let mut stack = vec![start];
        plateau[start] = true;
        let mut is_max = true;
        while let Some(idx) = stack.pop() {
            let (r, c) = ((idx / cols) as i64, (idx % cols) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if (dr, dc) == (0, 0)
                        || rr < 0
                        || cc < 0
                        || rr >= rows as i64
                        || cc >= cols as i64
                    {
                        continue;
                    }
                    let nidx = rr as usize * cols + cc as usize;
                    if !mask[nidx] || plateau[nidx] {
                        continue;
                    }
                    if values[nidx] == v {
                        plateau[nidx] = true;
                        stack.push(nidx);
                    } else if values[nidx] > v {
                        is_max = false;
                    }
                }
            }
        }
        out[start] = is_max;
    }
    out
}

/// Random small-integer grid so plateaus are common.
pub fn random_plateau_grid(seed: u64, rows: usize, cols: usize, levels: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows * cols)
        .map(|_| rng.random_range(0..levels) as f64)
        .collect()
}

/// Ordinary least-squares R^2 of `y` against `x`.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

/// Smallest absolute difference between two angles in degrees.
pub fn angle_error_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}
