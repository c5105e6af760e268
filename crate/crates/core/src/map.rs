//! World map: three boolean layers over a square grid, plus the text map
//! format used for fixtures.
//!
//! A map cell can be a start/finish cell (`L`), a no-go cell (`N`), an
//! obstacle (`O`, which is also no-go and blocks line of sight), or free
//! (`.`). Obstacle implies no-go; start/finish cells are never no-go.

use ndarray::Array3;
use thiserror::Error;

/// Grid coordinate. `x` is the column, `y` the row; `(0, 0)` is the
/// top-left cell of the map text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }

    /// Euclidean distance between cell centers.
    pub fn dist(self, other: Cell) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map text is empty")]
    Empty,
    #[error("line {line}: expected {expected} characters to match {expected} lines, got {got}")]
    NonSquare {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}, column {column}: unknown map character {ch:?}")]
    UnknownChar { line: usize, column: usize, ch: char },
    #[error("map has no start/finish cell")]
    NoStartCell,
    #[error("layer size mismatch: expected {expected} cells, got {got}")]
    LayerSize { expected: usize, got: usize },
    #[error("obstacle cell {0} is not marked no-go")]
    ObstacleOutsideNogo(Cell),
    #[error("start/finish cell {0} is marked no-go")]
    StartOverlapsNogo(Cell),
}

/// The world tensor: start/finish, no-go and obstacle layers over a
/// `size x size` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioMap {
    size: usize,
    start: Vec<bool>,
    nogo: Vec<bool>,
    obstacle: Vec<bool>,
}

impl PortfolioMap {
    /// Builds a map from raw layers, checking all structural invariants:
    /// square layers, obstacle ⊆ no-go, start ∩ no-go = ∅, and at least
    /// one start/finish cell.
    pub fn from_layers(
        size: usize,
        start: Vec<bool>,
        nogo: Vec<bool>,
        obstacle: Vec<bool>,
    ) -> Result<Self, MapError> {
        let expected = size * size;
        for layer in [&start, &nogo, &obstacle] {
            if layer.len() != expected {
                return Err(MapError::LayerSize {
                    expected,
                    got: layer.len(),
                });
            }
        }
        let map = PortfolioMap {
            size,
            start,
            nogo,
            obstacle,
        };
        for y in 0..size {
            for x in 0..size {
                let c = Cell::new(x, y);
                if map.is_obstacle(c) && !map.is_nogo(c) {
                    return Err(MapError::ObstacleOutsideNogo(c));
                }
                if map.is_start(c) && map.is_nogo(c) {
                    return Err(MapError::StartOverlapsNogo(c));
                }
            }
        }
        if !map.start.iter().any(|&s| s) {
            return Err(MapError::NoStartCell);
        }
        Ok(map)
    }

    /// Parses the text map format: one row per line over the alphabet
    /// `.` (free), `L` (start/finish), `N` (no-go), `O` (obstacle, which
    /// also sets the no-go layer). The grid must be square.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(MapError::Empty);
        }
        let size = lines.len();
        let mut start = vec![false; size * size];
        let mut nogo = vec![false; size * size];
        let mut obstacle = vec![false; size * size];
        for (y, line) in lines.iter().enumerate() {
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != size {
                return Err(MapError::NonSquare {
                    line: y + 1,
                    expected: size,
                    got: chars.len(),
                });
            }
            for (x, &ch) in chars.iter().enumerate() {
                let i = y * size + x;
                match ch {
                    '.' => {}
                    'L' => start[i] = true,
                    'N' => nogo[i] = true,
                    'O' => {
                        obstacle[i] = true;
                        nogo[i] = true;
                    }
                    other => {
                        return Err(MapError::UnknownChar {
                            line: y + 1,
                            column: x + 1,
                            ch: other,
                        })
                    }
                }
            }
        }
        Self::from_layers(size, start, nogo, obstacle)
    }

    /// Renders the canonical text form (inverse of [`PortfolioMap::parse`]).
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.size + 1) * self.size);
        for y in 0..self.size {
            for x in 0..self.size {
                let c = Cell::new(x, y);
                out.push(if self.is_obstacle(c) {
                    'O'
                } else if self.is_nogo(c) {
                    'N'
                } else if self.is_start(c) {
                    'L'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.size && (y as usize) < self.size
    }

    fn idx(&self, c: Cell) -> usize {
        debug_assert!(c.x < self.size && c.y < self.size);
        c.y * self.size + c.x
    }

    pub fn is_start(&self, c: Cell) -> bool {
        self.start[self.idx(c)]
    }

    pub fn is_nogo(&self, c: Cell) -> bool {
        self.nogo[self.idx(c)]
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.obstacle[self.idx(c)]
    }

    /// Start/finish cells in row-major order.
    pub fn start_cells(&self) -> Vec<Cell> {
        self.cells().filter(|&c| self.is_start(c)).collect()
    }

    /// Cells that are not obstacles, in row-major order.
    pub fn non_obstacle_cells(&self) -> Vec<Cell> {
        self.cells().filter(|&c| !self.is_obstacle(c)).collect()
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let size = self.size;
        (0..size).flat_map(move |y| (0..size).map(move |x| Cell::new(x, y)))
    }

    /// The `size x size x 3` real tensor with channels
    /// (start/finish, no-go, obstacle) as 0/1 values, indexed `(y, x, ch)`.
    pub fn as_tensor(&self) -> Array3<f64> {
        let mut t = Array3::zeros((self.size, self.size, 3));
        for c in self.cells() {
            t[(c.y, c.x, 0)] = self.is_start(c) as u8 as f64;
            t[(c.y, c.x, 1)] = self.is_nogo(c) as u8 as f64;
            t[(c.y, c.x, 2)] = self.is_obstacle(c) as u8 as f64;
        }
        t
    }
}

/// Bundled map fixtures. `site32` and `site50` are hand-drawn layouts for
/// the two full-scale scenarios; `desk16` is a reduced map for fast runs.
pub const BUILTIN_MAPS: [(&str, &str); 3] = [
    ("desk16", include_str!("../maps/desk16.map")),
    ("site32", include_str!("../maps/site32.map")),
    ("site50", include_str!("../maps/site50.map")),
];

/// Looks up a bundled map by name.
pub fn builtin_map(name: &str) -> Option<PortfolioMap> {
    BUILTIN_MAPS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| PortfolioMap::parse(text).expect("bundled map is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_legal_map() {
        let map = PortfolioMap::parse("L..\n...\n...\n").unwrap();
        assert_eq!(map.size(), 3);
        assert_eq!(map.start_cells(), vec![Cell::new(0, 0)]);
        assert!(map.cells().all(|c| !map.is_nogo(c) && !map.is_obstacle(c)));
    }

    #[test]
    fn obstacle_implies_nogo() {
        let map = PortfolioMap::parse("L..\n.O.\n...\n").unwrap();
        assert!(map.is_obstacle(Cell::new(1, 1)));
        assert!(map.is_nogo(Cell::new(1, 1)));
    }

    #[test]
    fn non_square_is_rejected() {
        let err = PortfolioMap::parse("L..\n....\n...\n").unwrap_err();
        assert_eq!(
            err,
            MapError::NonSquare {
                line: 2,
                expected: 3,
                got: 4
            }
        );
    }

    #[test]
    fn unknown_char_names_position() {
        let err = PortfolioMap::parse("L..\n.X.\n...\n").unwrap_err();
        assert_eq!(
            err,
            MapError::UnknownChar {
                line: 2,
                column: 2,
                ch: 'X'
            }
        );
    }

    #[test]
    fn no_start_cell_is_rejected() {
        assert_eq!(
            PortfolioMap::parse("...\n...\n...\n").unwrap_err(),
            MapError::NoStartCell
        );
    }

    #[test]
    fn text_roundtrip() {
        for (_, text) in BUILTIN_MAPS {
            let map = PortfolioMap::parse(text).unwrap();
            assert_eq!(PortfolioMap::parse(&map.to_text()).unwrap(), map);
        }
    }

    #[test]
    fn builtin_maps_parse_and_have_expected_sizes() {
        assert_eq!(builtin_map("desk16").unwrap().size(), 16);
        assert_eq!(builtin_map("site32").unwrap().size(), 32);
        assert_eq!(builtin_map("site50").unwrap().size(), 50);
        assert!(builtin_map("nope").is_none());
    }

    #[test]
    fn from_layers_checks_invariants() {
        let n = 4;
        let f = vec![false; n];
        let mut obstacle = f.clone();
        obstacle[0] = true;
        let mut start = f.clone();
        start[3] = true;
        // obstacle without no-go
        assert_eq!(
            PortfolioMap::from_layers(2, start.clone(), f.clone(), obstacle.clone()).unwrap_err(),
            MapError::ObstacleOutsideNogo(Cell::new(0, 0))
        );
        // start overlapping no-go
        let mut nogo = f.clone();
        nogo[0] = true;
        nogo[3] = true;
        assert_eq!(
            PortfolioMap::from_layers(2, start, nogo, obstacle).unwrap_err(),
            MapError::StartOverlapsNogo(Cell::new(1, 1))
        );
    }

    #[test]
    fn tensor_matches_layers() {
        let map = PortfolioMap::parse("L.O\n.N.\n...\n").unwrap();
        let t = map.as_tensor();
        assert_eq!(t[(0, 0, 0)], 1.0);
        assert_eq!(t[(0, 2, 1)], 1.0); // obstacle sets no-go
        assert_eq!(t[(0, 2, 2)], 1.0);
        assert_eq!(t[(1, 1, 1)], 1.0);
        assert_eq!(t[(1, 1, 2)], 0.0);
    }
}
