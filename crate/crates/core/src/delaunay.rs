//! Thin index-based view of a planar Delaunay triangulation.
//!
//! The triangulation itself is delegated to `spade`, which uses exact
//! orientation and in-circle predicates; this module only flattens its
//! half-edge structure into triangle and adjacency lists keyed by input index.

use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation as _};

use crate::error::{Error, Result};
use crate::point::Vec2;

struct Site {
    position: Point2<f64>,
    index: usize,
}

impl HasPosition for Site {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.position
    }
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    pub points: Vec<Vec2>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Delaunay neighbours of each vertex, counter-clockwise.
    pub neighbors: Vec<Vec<usize>>,
}

impl Triangulation {
    /// Triangulates `points`. Duplicate positions must be rejected by the caller;
    /// an all-collinear input yields zero triangles.
    pub fn new(points: &[Vec2]) -> Result<Self> {
        let sites: Vec<Site> = points
            .iter()
            .enumerate()
            .map(|(index, p)| Site {
                position: Point2::new(p.x, p.y),
                index,
            })
            .collect();
        let dt: DelaunayTriangulation<Site> = DelaunayTriangulation::bulk_load(sites)
            .map_err(|e| Error::InvalidInput(format!("triangulation failed: {e:?}")))?;
        if dt.num_vertices() != points.len() {
            return Err(Error::InvalidInput(format!(
                "triangulation merged {} coincident points",
                points.len() - dt.num_vertices()
            )));
        }

        let triangles = dt
            .inner_faces()
            .map(|f| f.vertices().map(|v| v.data().index))
            .collect();

        let mut neighbors = vec![Vec::new(); points.len()];
        for v in dt.vertices() {
            neighbors[v.data().index] = v.out_edges().map(|e| e.to().data().index).collect();
        }

        Ok(Self {
            points: points.to_vec(),
            triangles,
            neighbors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_plus_center_has_four_triangles() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.5, 0.5),
        ];
        let t = Triangulation::new(&pts).unwrap();
        assert_eq!(t.triangles.len(), 4);
        assert_eq!(t.neighbors[4].len(), 4);
        for tri in &t.triangles {
            let [a, b, c] = tri.map(|i| pts[i]);
            assert!((b - a).cross(c - a) > 0.0);
        }
    }

    #[test]
    fn collinear_input_has_no_triangles() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 0.0),
        ];
        assert!(Triangulation::new(&pts).unwrap().triangles.is_empty());
    }
}
