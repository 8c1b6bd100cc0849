//! Rounding of continuous coordinates onto grid nodes.

use crate::model::ObjectImage;

/// Conventional rounding, ties away from zero (`2.5 -> 3`).
///
/// Every component that maps coordinates to nodes goes through this
/// function so that tie behaviour is identical everywhere.
#[inline]
pub fn round_coordinate(v: f64) -> i64 {
    v.round() as i64
}

/// Node for a continuous location, clamped onto the `kx × ky` grid.
///
/// Locations within `d / 2` of the far edge round to `kx` (or `ky`) when the
/// extent is an exact multiple of `d`; those land on the last grid line.
#[inline]
pub fn grid_node(x: f64, y: f64, d_um: f64, kx: usize, ky: usize) -> (usize, usize) {
    let clamp = |v: i64, k: usize| v.clamp(0, k as i64 - 1) as usize;
    (
        clamp(round_coordinate(x / d_um), kx),
        clamp(round_coordinate(y / d_um), ky),
    )
}

/// Object indices binned per grid node; a node with more than one index is
/// an assignment conflict.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    kx: usize,
    ky: usize,
    d_um: f64,
    nodes: Vec<Vec<usize>>,
}

impl Bins {
    pub fn kx(&self) -> usize {
        self.kx
    }

    pub fn ky(&self) -> usize {
        self.ky
    }

    pub fn d_um(&self) -> f64 {
        self.d_um
    }

    pub fn get(&self, x: usize, y: usize) -> &[usize] {
        &self.nodes[x * self.ky + y]
    }

    pub(crate) fn by_index(&self, node: usize) -> &[usize] {
        &self.nodes[node]
    }

    /// Non-empty nodes in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[usize])> {
        let ky = self.ky;
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_empty())
            .map(move |(i, v)| ((i / ky, i % ky), v.as_slice()))
    }

    pub fn conflicted_nodes(&self) -> usize {
        self.nodes.iter().filter(|v| v.len() > 1).count()
    }

    pub fn object_count(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }
}

/// Bins every object of `img` onto a grid of spacing `d_um` covering its
/// extent. Indices within a node stay in input order.
pub fn bin_objects(img: &ObjectImage, d_um: f64, kx: usize, ky: usize) -> Bins {
    let mut nodes = vec![Vec::new(); kx * ky];
    for (i, o) in img.objects().iter().enumerate() {
        let (gx, gy) = grid_node(o.x, o.y, d_um, kx, ky);
        nodes[gx * ky + gy].push(i);
    }
    Bins {
        kx,
        ky,
        d_um,
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObjectRecord;

    fn image(points: &[(f64, f64)], w: f64, h: f64) -> ObjectImage {
        let objects = points
            .iter()
            .map(|&(x, y)| ObjectRecord::new(x, y, vec![1.0]))
            .collect();
        ObjectImage::new("t", w, h, 0.5, None, 1, objects).unwrap()
    }

    #[test]
    fn half_rounds_up() {
        assert_eq!(grid_node(7.5, 2.4, 5.0, 10, 10), (2, 0));
        assert_eq!(round_coordinate(2.5), 3);
        assert_eq!(round_coordinate(0.49999), 0);
    }

    #[test]
    fn origin() {
        for d in [0.3, 1.0, 5.0, 17.0] {
            assert_eq!(grid_node(0.0, 0.0, d, 4, 4), (0, 0));
        }
    }

    #[test]
    fn near_objects_conflict() {
        let img = image(&[(11.0, 11.0), (12.0, 12.4), (13.0, 13.0)], 50.0, 50.0);
        let bins = bin_objects(&img, 5.0, 10, 10);
        assert_eq!(bins.get(2, 2), &[0, 1]);
        assert_eq!(bins.get(3, 3), &[2]);
        assert_eq!(bins.conflicted_nodes(), 1);
    }

    #[test]
    fn far_edge_is_clamped() {
        let img = image(&[(49.9, 47.6), (47.4, 0.0)], 50.0, 50.0);
        let bins = bin_objects(&img, 5.0, 10, 10);
        assert_eq!(bins.get(9, 9), &[0]);
        assert_eq!(bins.get(9, 0), &[1]);
        assert_eq!(bins.object_count(), 2);
    }
}
