//! Multi-resolution tiling of the raster.
//!
//! Level `k` cells have a nominal side of `eta^k` pixels and are anchored on
//! multiples of that side. Cells touching the right or bottom raster edge
//! are clipped, never padded. Only the current leaf [`Frontier`] is kept;
//! parents and children are recovered arithmetically from a cell's anchor.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    /// Refinement ratio per axis between adjacent levels.
    pub eta: usize,
    /// Coarsest level `K`.
    pub max_level: u32,
}

impl HierarchyConfig {
    pub fn new(eta: usize, max_level: u32) -> Result<Self> {
        let cfg = Self { eta, max_level };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta < 2 {
            return Err(Error::Config(format!("eta must be >= 2, got {}", self.eta)));
        }
        if self.max_level < 1 {
            return Err(Error::Config("max_level must be >= 1".into()));
        }
        self.eta
            .checked_pow(self.max_level)
            .ok_or_else(|| Error::Config("eta^max_level overflows".into()))?;
        Ok(())
    }

    /// Nominal side length of a level-`level` cell.
    pub fn side(&self, level: u32) -> usize {
        self.eta.pow(level)
    }
}

/// A rectangular block of pixels at one hierarchy level.
///
/// Field order gives the canonical ordering: top-left anchor first, so the
/// leaves of a frontier sort in raster scan order of their corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub row0: usize,
    pub col0: usize,
    pub level: u32,
    /// Clipped extent in rows.
    pub height: usize,
    /// Clipped extent in columns.
    pub width: usize,
}

impl CellId {
    fn clipped(level: u32, row0: usize, col0: usize, side: usize, rows: usize, cols: usize) -> Self {
        Self {
            row0,
            col0,
            level,
            height: side.min(rows - row0),
            width: side.min(cols - col0),
        }
    }

    pub fn row_end(&self) -> usize {
        self.row0 + self.height
    }

    pub fn col_end(&self) -> usize {
        self.col0 + self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row_end()).contains(&row) && (self.col0..self.col_end()).contains(&col)
    }

    /// Row-major pixel indices covered by the cell.
    pub fn pixels(&self, cols: usize) -> impl Iterator<Item = usize> + '_ {
        (self.row0..self.row_end())
            .flat_map(move |r| (self.col0..self.col_end()).map(move |c| r * cols + c))
    }

    /// The level-`(k-1)` cells tiling this cell. Empty for level 0.
    pub fn children(&self, eta: usize) -> Vec<CellId> {
        if self.level == 0 {
            return Vec::new();
        }
        let side = eta.pow(self.level - 1);
        let (rows, cols) = (self.row_end(), self.col_end());
        let mut out = Vec::with_capacity(eta * eta);
        for r in (self.row0..rows).step_by(side) {
            for c in (self.col0..cols).step_by(side) {
                out.push(CellId::clipped(self.level - 1, r, c, side, rows, cols));
            }
        }
        out
    }

    /// The enclosing level-`(k+1)` cell in a `rows x cols` raster.
    pub fn parent(&self, eta: usize, rows: usize, cols: usize) -> CellId {
        let side = eta.pow(self.level + 1);
        CellId::clipped(
            self.level + 1,
            self.row0 / side * side,
            self.col0 / side * side,
            side,
            rows,
            cols,
        )
    }

    /// True when the two rectangles share an edge segment of positive length.
    pub fn touches(&self, other: &CellId) -> bool {
        let rows_overlap = self.row0 < other.row_end() && other.row0 < self.row_end();
        let cols_overlap = self.col0 < other.col_end() && other.col0 < self.col_end();
        let side_by_side = self.col_end() == other.col0 || other.col_end() == self.col0;
        let stacked = self.row_end() == other.row0 || other.row_end() == self.row0;
        (rows_overlap && side_by_side) || (cols_overlap && stacked)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L{}@({},{})[{}x{}]",
            self.level, self.row0, self.col0, self.height, self.width
        )
    }
}

/// The set of current leaf cells. Leaves tile the raster exactly and are
/// kept sorted in canonical order, so a leaf's position is a stable index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frontier {
    rows: usize,
    cols: usize,
    config: HierarchyConfig,
    leaves: Vec<CellId>,
}

/// Tiles a `rows x cols` raster with level-`K` cells.
pub fn build_root(rows: usize, cols: usize, config: HierarchyConfig) -> Result<Frontier> {
    config.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::Dimensions(format!("{rows}x{cols}")));
    }
    let side = config.side(config.max_level);
    let mut leaves = Vec::new();
    for r in (0..rows).step_by(side) {
        for c in (0..cols).step_by(side) {
            leaves.push(CellId::clipped(config.max_level, r, c, side, rows, cols));
        }
    }
    Ok(Frontier {
        rows,
        cols,
        config,
        leaves,
    })
}

/// Tiles the raster entirely with cells of one level.
pub fn build_uniform(rows: usize, cols: usize, config: HierarchyConfig, level: u32) -> Result<Frontier> {
    if level > config.max_level {
        return Err(Error::Config(format!(
            "level {level} above max_level {}",
            config.max_level
        )));
    }
    let mut frontier = build_root(rows, cols, config)?;
    frontier.leaves = frontier
        .leaves
        .iter()
        .flat_map(|cell| descend(*cell, level, config.eta))
        .collect();
    frontier.leaves.sort_unstable();
    Ok(frontier)
}

fn descend(cell: CellId, level: u32, eta: usize) -> Vec<CellId> {
    if cell.level <= level {
        return vec![cell];
    }
    cell.children(eta)
        .into_iter()
        .flat_map(|c| descend(c, level, eta))
        .collect()
}

impl Frontier {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn config(&self) -> HierarchyConfig {
        self.config
    }

    pub fn leaves(&self) -> &[CellId] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn index_of(&self, cell: &CellId) -> Option<usize> {
        self.leaves.binary_search(cell).ok()
    }

    /// Replaces each selected leaf with its children.
    ///
    /// Every selected cell must be a current leaf of level >= 1.
    pub fn refine(&self, cells: &[CellId]) -> Result<Frontier> {
        let selected: BTreeSet<CellId> = cells.iter().copied().collect();
        for cell in &selected {
            if self.index_of(cell).is_none() {
                return Err(Error::Contract(format!("{cell} is not a leaf of the frontier")));
            }
            if cell.level == 0 {
                return Err(Error::Contract(format!("{cell} is at level 0 and cannot be refined")));
            }
        }
        let mut leaves = Vec::with_capacity(self.leaves.len() + selected.len() * self.config.eta.pow(2));
        for leaf in &self.leaves {
            if selected.contains(leaf) {
                leaves.extend(leaf.children(self.config.eta));
            } else {
                leaves.push(*leaf);
            }
        }
        leaves.sort_unstable();
        Ok(Frontier {
            rows: self.rows,
            cols: self.cols,
            config: self.config,
            leaves,
        })
    }

    /// Row-major map from pixel to the index of the leaf covering it.
    pub fn owner_grid(&self) -> Vec<u32> {
        let mut owner = vec![u32::MAX; self.rows * self.cols];
        for (i, leaf) in self.leaves.iter().enumerate() {
            for p in leaf.pixels(self.cols) {
                owner[p] = i as u32;
            }
        }
        owner
    }

    /// Expands one value per leaf to one value per pixel.
    pub fn upsample(&self, per_leaf: &[f64]) -> Result<Vec<f64>> {
        if per_leaf.len() != self.leaves.len() {
            return Err(Error::Length {
                expected: self.leaves.len(),
                got: per_leaf.len(),
            });
        }
        let mut out = vec![0.0; self.rows * self.cols];
        for (leaf, &v) in self.leaves.iter().zip(per_leaf) {
            for p in leaf.pixels(self.cols) {
                out[p] = v;
            }
        }
        Ok(out)
    }

    /// Frontier dump as `level,row0,col0,side_rows,side_cols` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,row0,col0,side_rows,side_cols\n");
        for c in &self.leaves {
            out.push_str(&format!("{},{},{},{},{}\n", c.level, c.row0, c.col0, c.height, c.width));
        }
        out
    }
}

/// Mean of `plane` over the pixels of `cell`.
pub fn cell_mean<T: Copy + Into<f64>>(plane: &[T], cols: usize, cell: &CellId) -> f64 {
    let sum: f64 = cell.pixels(cols).map(|p| plane[p].into()).sum();
    sum / cell.pixel_count() as f64
}

/// Unordered pairs `(i, j)`, `i < j`, of leaf indices whose rectangles
/// share a boundary segment. Corner-only contact does not count.
///
/// Found by scanning pixel edges of the owner grid, so cost is linear in
/// the raster size.
pub fn leaf_adjacency(frontier: &Frontier) -> Vec<(usize, usize)> {
    let owner = frontier.owner_grid();
    let (rows, cols) = (frontier.rows, frontier.cols);
    let mut pairs = BTreeSet::new();
    let mut add = |a: u32, b: u32| {
        if a != b {
            let (a, b) = (a.min(b) as usize, a.max(b) as usize);
            pairs.insert((a, b));
        }
    };
    // Only edges on leaf boundaries can separate two owners; walk each leaf's
    // right and bottom boundary.
    for leaf in frontier.leaves() {
        let here = owner[leaf.row0 * cols + leaf.col0];
        if leaf.col_end() < cols {
            for r in leaf.row0..leaf.row_end() {
                add(here, owner[r * cols + leaf.col_end()]);
            }
        }
        if leaf.row_end() < rows {
            for c in leaf.col0..leaf.col_end() {
                add(here, owner[leaf.row_end() * cols + c]);
            }
        }
    }
    pairs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(eta: usize, k: u32) -> HierarchyConfig {
        HierarchyConfig::new(eta, k).unwrap()
    }

    fn assert_tiles(f: &Frontier) {
        let mut count = vec![0u32; f.rows() * f.cols()];
        for leaf in f.leaves() {
            assert!(leaf.height > 0 && leaf.width > 0);
            for p in leaf.pixels(f.cols()) {
                count[p] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 1), "leaves overlap or leave gaps");
    }

    #[test]
    fn root_of_large_raster() {
        let f = build_root(1000, 1000, cfg(10, 2)).unwrap();
        assert_eq!(f.len(), 100);
        assert!(f.leaves().iter().all(|c| c.height == 100 && c.width == 100));
        let c = f.config();
        assert_eq!((c.side(2), c.side(1), c.side(0)), (100, 10, 1));
    }

    #[test]
    fn root_of_small_raster() {
        let f = build_root(8, 8, cfg(2, 2)).unwrap();
        assert_eq!(f.len(), 4);
        assert!(f.leaves().iter().all(|c| c.height == 4 && c.width == 4));
    }

    #[test]
    fn clipped_root_tiling() {
        let f = build_root(10, 10, cfg(4, 1)).unwrap();
        assert_eq!(f.len(), 9);
        let shapes: Vec<(usize, usize)> = f.leaves().iter().map(|c| (c.height, c.width)).collect();
        let full = shapes.iter().filter(|&&s| s == (4, 4)).count();
        let edge = shapes.iter().filter(|&&s| s == (4, 2) || s == (2, 4)).count();
        let corner = shapes.iter().filter(|&&s| s == (2, 2)).count();
        assert_eq!((full, edge, corner), (4, 4, 1));
        assert_tiles(&f);
    }

    #[test]
    fn refine_one_cell() {
        let f = build_root(8, 8, cfg(2, 2)).unwrap();
        let g = f.refine(&[f.leaves()[0]]).unwrap();
        assert_eq!(g.len(), f.len() + 3);
        assert_tiles(&g);
    }

    #[test]
    fn refine_three_of_four() {
        let f = build_root(8, 8, cfg(2, 2)).unwrap();
        let g = f.refine(&f.leaves()[1..]).unwrap();
        assert_eq!(g.len(), 13);
        assert_tiles(&g);
    }

    #[test]
    fn refine_nothing() {
        let f = build_root(8, 8, cfg(2, 2)).unwrap();
        assert_eq!(f.refine(&[]).unwrap(), f);
    }

    #[test]
    fn refine_errors() {
        let f = build_root(4, 4, cfg(2, 1)).unwrap();
        let g = f.refine(&[f.leaves()[0]]).unwrap();
        let level0 = g.leaves().iter().find(|c| c.level == 0).copied().unwrap();
        assert!(matches!(g.refine(&[level0]), Err(Error::Contract(_))));
        // the refined parent is no longer a leaf
        assert!(matches!(g.refine(&[f.leaves()[0]]), Err(Error::Contract(_))));
    }

    #[test]
    fn children_partition_clipped_parent() {
        let f = build_root(10, 7, cfg(3, 2)).unwrap();
        for leaf in f.leaves() {
            let kids = leaf.children(3);
            let area: usize = kids.iter().map(CellId::pixel_count).sum();
            assert_eq!(area, leaf.pixel_count());
            for k in &kids {
                assert_eq!(k.parent(3, 10, 7), *leaf);
            }
        }
    }

    #[test]
    fn cell_means() {
        let plane = vec![7.0f32; 16];
        let cell = CellId { row0: 0, col0: 0, level: 1, height: 2, width: 2 };
        assert_eq!(cell_mean(&plane, 4, &cell), 7.0);

        let plane = [1.0f32, 2.0, 3.0, 4.0];
        assert_eq!(cell_mean(&plane, 2, &cell), 2.5);

        let plane = [0.0f64, 10.0, 0.0, 20.0];
        let edge = CellId { row0: 0, col0: 1, level: 1, height: 2, width: 1 };
        assert_eq!(cell_mean(&plane, 2, &edge), 15.0);
    }

    #[test]
    fn uniform_two_by_two_adjacency() {
        let f = build_root(8, 8, cfg(2, 2)).unwrap();
        assert_eq!(leaf_adjacency(&f).len(), 4);
    }

    #[test]
    fn mixed_level_contact() {
        // left 4x4 cell stays coarse, right column refined into 2x2 cells
        let f = build_root(4, 8, cfg(2, 2)).unwrap();
        let g = f.refine(&[f.leaves()[1]]).unwrap();
        let coarse = g.index_of(&f.leaves()[0]).unwrap();
        let touching: Vec<usize> = g
            .leaves()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.col0 == 4)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(touching.len(), 2);
        let adj = leaf_adjacency(&g);
        for t in touching {
            assert!(adj.contains(&(coarse.min(t), coarse.max(t))));
        }
    }

    #[test]
    fn corner_contact_is_not_adjacency() {
        let a = CellId { row0: 0, col0: 0, level: 0, height: 1, width: 1 };
        let b = CellId { row0: 1, col0: 1, level: 0, height: 1, width: 1 };
        assert!(!a.touches(&b));
        let f = build_uniform(2, 2, cfg(2, 1), 0).unwrap();
        let adj = leaf_adjacency(&f);
        assert_eq!(adj.len(), 4);
        assert!(!adj.contains(&(0, 3)));
        assert!(!adj.contains(&(1, 2)));
    }

    #[test]
    fn frontier_csv() {
        let f = build_root(10, 10, cfg(4, 1)).unwrap();
        let csv = f.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("level,row0,col0,side_rows,side_cols"));
        assert_eq!(lines.next(), Some("1,0,0,4,4"));
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.contains("1,8,8,2,2"));
    }

    fn brute_adjacency(f: &Frontier) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                if f.leaves()[i].touches(&f.leaves()[j]) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn adjacency_matches_brute_force(
            rows in 3usize..20, cols in 3usize..20, eta in 2usize..4, picks in proptest::collection::vec(any::<u16>(), 0..12),
        ) {
            let mut f = build_root(rows, cols, HierarchyConfig::new(eta, 2).unwrap()).unwrap();
            for p in picks {
                let candidates: Vec<CellId> = f.leaves().iter().copied().filter(|c| c.level > 0).collect();
                if candidates.is_empty() { break; }
                f = f.refine(&[candidates[p as usize % candidates.len()]]).unwrap();
            }
            assert_tiles(&f);
            prop_assert_eq!(leaf_adjacency(&f), brute_adjacency(&f));
        }
    }
}
