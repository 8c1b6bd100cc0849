//! Local resolution of assignment conflicts.
//!
//! For every node `G` holding more than one object (visited in row-major
//! order) the objects are sorted by Euclidean distance to `G`'s continuous
//! position `d·G`; the closest stays on `G`. Each remaining object moves to
//! the free 8-neighbour of `G` with the highest priority for that object, or
//! is deleted when no neighbour is free.
//!
//! Priority comes from the octant ("quadrant half") around `G` that holds
//! the object's original location. Octant `o` spans the angles
//! `[45°·o, 45°·(o+1))`, counter-clockwise from +x with +y up. Each octant
//! touches one side neighbour `s` and one corner neighbour; writing `r` for
//! the rotation sense from `s` towards that corner, the preference order is
//!
//! ```text
//! s, s+r, s-r, s+2r, s+3r, s-2r, s+4r, s-3r        (directions mod 8)
//! ```
//!
//! i.e. the nearest side, its two flanking corners (the in-octant one
//! first), then the remaining five by increasing angular distance from the
//! octant bisector, ties going to the object's side. Expanded:
//!
//! | octant | angles     | order                      |
//! |--------|------------|----------------------------|
//! | 0      | [0, 45)    | E  NE SE N  NW S  W  SW    |
//! | 1      | [45, 90)   | N  NE NW E  SE W  S  SW    |
//! | 2      | [90, 135)  | N  NW NE W  SW E  S  SE    |
//! | 3      | [135, 180) | W  NW SW N  NE S  E  SE    |
//! | 4      | [180, 225) | W  SW NW S  SE N  E  NE    |
//! | 5      | [225, 270) | S  SW SE W  NW E  N  NE    |
//! | 6      | [270, 315) | S  SE SW E  NE W  N  NW    |
//! | 7      | [315, 360) | E  SE NE S  SW N  W  NW    |
//!
//! Only `n` distances are computed for a conflict of `n` objects.

use serde::Serialize;

use super::binning::Bins;

/// Neighbour offsets indexed by direction: E, NE, N, NW, W, SW, S, SE.
pub const DIRECTIONS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

const fn build_priority() -> [[u8; 8]; 8] {
    const STEPS: [i8; 8] = [0, 1, -1, 2, 3, -2, 4, -3];
    let mut table = [[0u8; 8]; 8];
    let mut o = 0;
    while o < 8 {
        let (side, rot) = if o % 2 == 0 {
            (o as i8, 1i8)
        } else {
            (o as i8 + 1, -1i8)
        };
        let mut k = 0;
        while k < 8 {
            table[o][k] = (side + STEPS[k] * rot).rem_euclid(8) as u8;
            k += 1;
        }
        o += 1;
    }
    table
}

/// Neighbour preference per octant, as direction indices into [`DIRECTIONS`].
pub const PRIORITY: [[u8; 8]; 8] = build_priority();

/// Octant of the offset `(dx, dy)` from a node, using half-open 45° sectors.
/// The zero offset belongs to octant 0.
#[inline]
pub fn octant(dx: f64, dy: f64) -> usize {
    if dy >= 0.0 && dx > 0.0 {
        if dy < dx {
            0
        } else {
            1
        }
    } else if dx <= 0.0 && dy > 0.0 {
        if -dx < dy {
            2
        } else {
            3
        }
    } else if dy <= 0.0 && dx < 0.0 {
        if -dy < -dx {
            4
        } else {
            5
        }
    } else if dx >= 0.0 && dy < 0.0 {
        if dx < -dy {
            6
        } else {
            7
        }
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    KeptInPlace,
    Shifted,
    Deleted,
}

/// Final placement of one object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub object: usize,
    /// Node the object was binned to.
    pub binned: (usize, usize),
    /// Node the object ends up on; `None` when deleted.
    pub node: Option<(usize, usize)>,
    pub disposition: Disposition,
}

/// Euclidean distance between an object and a node's continuous position.
#[inline]
pub fn distance_to_node(x: f64, y: f64, node: (usize, usize), d_um: f64) -> f64 {
    let dx = x - node.0 as f64 * d_um;
    let dy = y - node.1 as f64 * d_um;
    (dx * dx + dy * dy).sqrt()
}

/// Resolves every conflict in `bins`. Returns one assignment per object,
/// indexed by object.
pub fn priority_shift(bins: &Bins, coords: &[(f64, f64)]) -> Vec<Assignment> {
    let (kx, ky, d) = (bins.kx(), bins.ky(), bins.d_um());
    let mut occupied: Vec<bool> = (0..kx * ky).map(|n| !bins.by_index(n).is_empty()).collect();
    let mut out: Vec<Option<Assignment>> = vec![None; coords.len()];
    let mut order: Vec<(f64, usize)> = Vec::new();

    for (node, members) in bins.iter() {
        if members.len() == 1 {
            out[members[0]] = Some(Assignment {
                object: members[0],
                binned: node,
                node: Some(node),
                disposition: Disposition::KeptInPlace,
            });
            continue;
        }

        order.clear();
        order.extend(members.iter().map(|&i| {
            let (x, y) = coords[i];
            (distance_to_node(x, y, node, d), i)
        }));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let (winner, rest) = order.split_first().expect("conflict has members");
        out[winner.1] = Some(Assignment {
            object: winner.1,
            binned: node,
            node: Some(node),
            disposition: Disposition::KeptInPlace,
        });

        let mut free = free_neighbours(node, kx, ky, &occupied);
        for &(_, i) in rest {
            if free == 0 {
                out[i] = Some(Assignment {
                    object: i,
                    binned: node,
                    node: None,
                    disposition: Disposition::Deleted,
                });
                continue;
            }
            let (x, y) = coords[i];
            let o = octant(x - node.0 as f64 * d, y - node.1 as f64 * d);
            let dir = PRIORITY[o]
                .iter()
                .map(|&k| k as usize)
                .find(|&k| free & (1 << k) != 0)
                .expect("free set is non-empty");
            free &= !(1 << dir);
            let target = step(node, dir);
            occupied[target.0 * ky + target.1] = true;
            out[i] = Some(Assignment {
                object: i,
                binned: node,
                node: Some(target),
                disposition: Disposition::Shifted,
            });
        }
    }

    out.into_iter()
        .map(|a| a.expect("every object is binned"))
        .collect()
}

#[inline]
fn step(node: (usize, usize), dir: usize) -> (usize, usize) {
    let (ox, oy) = DIRECTIONS[dir];
    ((node.0 as i64 + ox) as usize, (node.1 as i64 + oy) as usize)
}

/// Bitmask over [`DIRECTIONS`] of in-grid, unoccupied neighbours.
fn free_neighbours(node: (usize, usize), kx: usize, ky: usize, occupied: &[bool]) -> u8 {
    let mut mask = 0u8;
    for (k, &(ox, oy)) in DIRECTIONS.iter().enumerate() {
        let nx = node.0 as i64 + ox;
        let ny = node.1 as i64 + oy;
        if nx < 0 || ny < 0 || nx >= kx as i64 || ny >= ky as i64 {
            continue;
        }
        if !occupied[nx as usize * ky + ny as usize] {
            mask |= 1 << k;
        }
    }
    mask
}
