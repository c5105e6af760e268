//! Line-of-sight tests on the occupancy grid and the agent's 5x5
//! visibility window.
//!
//! Rays use a supercover traversal: every cell the continuous segment
//! between two cell centers touches is checked, including cells met only
//! at an exact corner crossing. Diagonal sight between two obstacle
//! corners is therefore blocked.

use crate::map::{Cell, PortfolioMap};

/// Side length of the visibility window.
pub const VIS_SIDE: usize = 5;
const VIS_RADIUS: i64 = (VIS_SIDE as i64 - 1) / 2;

/// All cells touched by the segment from the center of `a` to the center
/// of `b`, in traversal order starting at `a`. At an exact corner crossing
/// both adjacent cells are included.
pub fn supercover_cells(a: Cell, b: Cell) -> Vec<(i64, i64)> {
    let (x0, y0) = (a.x as i64, a.y as i64);
    let (x1, y1) = (b.x as i64, b.y as i64);
    let nx = (x1 - x0).abs();
    let ny = (y1 - y0).abs();
    let sx = (x1 - x0).signum();
    let sy = (y1 - y0).signum();

    let mut x = x0;
    let mut y = y0;
    let mut out = Vec::with_capacity((nx + ny + 1) as usize);
    out.push((x, y));
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        if iy >= ny {
            x += sx;
            ix += 1;
        } else if ix >= nx {
            y += sy;
            iy += 1;
        } else {
            // Compare (ix + 1/2)/nx with (iy + 1/2)/ny in integers to find
            // which cell boundary the segment crosses first.
            let tx = (2 * ix + 1) * ny;
            let ty = (2 * iy + 1) * nx;
            if tx < ty {
                x += sx;
                ix += 1;
            } else if tx > ty {
                y += sy;
                iy += 1;
            } else {
                // Exact corner: the segment touches both side cells.
                out.push((x + sx, y));
                out.push((x, y + sy));
                x += sx;
                y += sy;
                ix += 1;
                iy += 1;
            }
        }
        out.push((x, y));
    }
    out
}

/// True iff no obstacle lies on the ray from `a` to `b`. The starting cell
/// is not checked; the end cell is, so a ray into an obstacle is blocked.
pub fn los_clear(map: &PortfolioMap, a: Cell, b: Cell) -> bool {
    supercover_cells(a, b)
        .into_iter()
        .skip(1)
        .all(|(x, y)| !map.is_obstacle(Cell::new(x as usize, y as usize)))
}

/// The agent's 5x5 field of view centered on `p`. `mask[wy][wx]` covers the
/// grid cell `(p.x + wx - 2, p.y + wy - 2)`; it is true iff that cell is on
/// the grid and in line of sight from `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Visibility {
    pub origin: Cell,
    pub mask: [[bool; VIS_SIDE]; VIS_SIDE],
}

impl Visibility {
    /// Iterates over the visible grid cells.
    pub fn visible_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let (px, py) = (self.origin.x as i64, self.origin.y as i64);
        (0..VIS_SIDE).flat_map(move |wy| {
            (0..VIS_SIDE).filter_map(move |wx| {
                if self.mask[wy][wx] {
                    Some(Cell::new(
                        (px + wx as i64 - VIS_RADIUS) as usize,
                        (py + wy as i64 - VIS_RADIUS) as usize,
                    ))
                } else {
                    None
                }
            })
        })
    }
}

pub fn visibility_window(map: &PortfolioMap, p: Cell) -> Visibility {
    let mut mask = [[false; VIS_SIDE]; VIS_SIDE];
    let (px, py) = (p.x as i64, p.y as i64);
    for (wy, row) in mask.iter_mut().enumerate() {
        for (wx, seen) in row.iter_mut().enumerate() {
            let gx = px + wx as i64 - VIS_RADIUS;
            let gy = py + wy as i64 - VIS_RADIUS;
            if map.in_bounds(gx, gy) {
                *seen = los_clear(map, p, Cell::new(gx as usize, gy as usize));
            }
        }
    }
    Visibility { origin: p, mask }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_map(n: usize) -> PortfolioMap {
        let mut text = String::new();
        for y in 0..n {
            for x in 0..n {
                text.push(if x == 0 && y == 0 { 'L' } else { '.' });
            }
            text.push('\n');
        }
        PortfolioMap::parse(&text).unwrap()
    }

    #[test]
    fn adjacent_cells_are_clear() {
        let map = open_map(3);
        assert!(los_clear(&map, Cell::new(0, 0), Cell::new(1, 0)));
        assert!(los_clear(&map, Cell::new(0, 0), Cell::new(1, 1)));
    }

    #[test]
    fn blocker_on_segment() {
        let map = PortfolioMap::parse("L..\nO..\n...\n").unwrap();
        // a = (0,0), b = (0,2), obstacle at (0,1)
        assert!(!los_clear(&map, Cell::new(0, 0), Cell::new(0, 2)));
    }

    #[test]
    fn same_cell_is_clear() {
        let map = PortfolioMap::parse("L.O\n.O.\nOO.\n").unwrap();
        assert!(los_clear(&map, Cell::new(0, 0), Cell::new(0, 0)));
    }

    #[test]
    fn ray_into_obstacle_is_blocked() {
        let map = PortfolioMap::parse("L.O\n...\n...\n").unwrap();
        assert!(!los_clear(&map, Cell::new(0, 0), Cell::new(2, 0)));
    }

    #[test]
    fn corner_peeking_is_blocked() {
        // Diagonal ray passing exactly between two obstacles at the shared
        // corner must be blocked from either side.
        let map = PortfolioMap::parse("L.O\n.O.\n...\n").unwrap();
        assert!(!los_clear(&map, Cell::new(1, 0), Cell::new(0, 1)));
        assert!(!los_clear(&map, Cell::new(0, 0), Cell::new(2, 2)));
    }

    #[test]
    fn open_window_is_all_true() {
        let map = open_map(9);
        let v = visibility_window(&map, Cell::new(4, 4));
        assert!(v.mask.iter().flatten().all(|&b| b));
        assert_eq!(v.visible_cells().count(), 25);
    }

    #[test]
    fn corner_window_clips_off_grid() {
        let map = open_map(9);
        let v = visibility_window(&map, Cell::new(0, 0));
        // Rows/cols at negative coordinates are false.
        for i in 0..VIS_SIDE {
            assert!(!v.mask[0][i]);
            assert!(!v.mask[1][i]);
            assert!(!v.mask[i][0]);
            assert!(!v.mask[i][1]);
        }
        assert_eq!(v.visible_cells().count(), 9);
    }

    #[test]
    fn supercover_diagonal_touches_corner_neighbors() {
        let cells = supercover_cells(Cell::new(0, 0), Cell::new(2, 2));
        assert!(cells.contains(&(1, 0)));
        assert!(cells.contains(&(0, 1)));
        assert!(cells.contains(&(1, 1)));
        assert_eq!(*cells.last().unwrap(), (2, 2));
    }
}
