//! Core grid containers: scalar grids and the typed rasters built on them.
//!
//! Everything is row-major and indexed (row, col).

use crate::error::{Error, Result};

/// Row-major 2D scalar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        assert!(width >= 1 && height >= 1, "grid dimensions must be >= 1");
        Grid {
            width,
            height,
            values: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<T>) -> Self {
        assert!(width >= 1 && height >= 1, "grid dimensions must be >= 1");
        assert_eq!(values.len(), width * height, "grid length mismatch");
        Grid {
            width,
            height,
            values,
        }
    }
}

impl<T> Grid<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        debug_assert!(row < self.height && col < self.width);
        &self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.height && col < self.width);
        self.values[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.width)
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        *self.get(row, col)
    }

    /// Value at a possibly out-of-bounds index.
    #[inline]
    pub fn at_checked(&self, row: i64, col: i64) -> Option<T> {
        if self.in_bounds(row, col) {
            Some(self.values[row as usize * self.width + col as usize])
        } else {
            None
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Grid<T> {
    type Output = T;
    #[inline]
    fn index(&self, (row, col): (usize, usize)) -> &T {
        self.get(row, col)
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        debug_assert!(row < self.height && col < self.width);
        &mut self.values[row * self.width + col]
    }
}

/// Class code for pixels outside any object.
pub const CLASS_BACKGROUND: u8 = 0;
/// Class code for object interior pixels.
pub const CLASS_INTERIOR: u8 = 1;
/// Class code for the 1-pixel border ring inside each object outline.
pub const CLASS_BORDER: u8 = 2;

/// Per-pixel 3-class semantic raster (background / interior / border).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    grid: Grid<u8>,
}

impl ClassMap {
    pub fn new(grid: Grid<u8>) -> Result<Self> {
        if let Some(bad) = grid.as_slice().iter().find(|&&v| v > CLASS_BORDER) {
            return Err(Error::validation(format!(
                "class map contains code {bad}, expected 0, 1 or 2"
            )));
        }
        Ok(ClassMap { grid })
    }

    pub fn filled(width: usize, height: usize, code: u8) -> Self {
        assert!(code <= CLASS_BORDER);
        ClassMap {
            grid: Grid::new(width, height, code),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.grid.at(row, col)
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.grid
    }

    pub fn grid_mut(&mut self) -> &mut Grid<u8> {
        &mut self.grid
    }
}

/// Binary raster, 1 = foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid<u8>,
}

impl BinaryMask {
    pub fn new(grid: Grid<u8>) -> Result<Self> {
        if grid.as_slice().iter().any(|&v| v > 1) {
            return Err(Error::validation("binary mask values must be 0 or 1"));
        }
        Ok(BinaryMask { grid })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(value <= 1);
        BinaryMask {
            grid: Grid::new(width, height, value),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.grid.at(row, col)
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.grid
    }

    pub fn count_ones(&self) -> u64 {
        self.grid.as_slice().iter().filter(|&&v| v == 1).count() as u64
    }
}

/// Per-pixel object-id raster. 0 is background; nonzero ids are exactly
/// `{1, ..., n_instances}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    grid: Grid<u32>,
    n_instances: u32,
}

impl InstanceMap {
    /// Build from a grid whose nonzero values are already compact (checked).
    pub fn new(grid: Grid<u32>) -> Result<Self> {
        let max = grid.as_slice().iter().copied().max().unwrap_or(0);
        let mut seen = vec![false; max as usize + 1];
        for &v in grid.as_slice() {
            seen[v as usize] = true;
        }
        if let Some(missing) = (1..=max).find(|&id| !seen[id as usize]) {
            return Err(Error::validation(format!(
                "instance ids are not compact: id {missing} is absent but max id is {max}"
            )));
        }
        Ok(InstanceMap {
            grid,
            n_instances: max,
        })
    }

    /// Relabel an arbitrary id grid so nonzero ids become 1..N in row-major
    /// first-appearance order. Returns the map plus, per new id, the original
    /// id it replaced.
    pub fn compact_from(grid: Grid<u32>) -> (Self, Vec<u32>) {
        let mut grid = grid;
        let max = grid.as_slice().iter().copied().max().unwrap_or(0) as usize;
        let mut remap = vec![0u32; max + 1];
        let mut originals = Vec::new();
        let mut next = 0u32;
        for v in grid.as_mut_slice() {
            if *v != 0 {
                let slot = &mut remap[*v as usize];
                if *slot == 0 {
                    next += 1;
                    *slot = next;
                    originals.push(*v);
                }
                *v = *slot;
            }
        }
        (
            InstanceMap {
                grid,
                n_instances: next,
            },
            originals,
        )
    }

    pub fn empty(width: usize, height: usize) -> Self {
        InstanceMap {
            grid: Grid::new(width, height, 0),
            n_instances: 0,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn n_instances(&self) -> u32 {
        self.n_instances
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u32 {
        self.grid.at(row, col)
    }

    pub fn grid(&self) -> &Grid<u32> {
        &self.grid
    }

    /// Pixel count per id, indexed by id (slot 0 counts background).
    pub fn areas(&self) -> Vec<u64> {
        let mut areas = vec![0u64; self.n_instances as usize + 1];
        for &v in self.grid.as_slice() {
            areas[v as usize] += 1;
        }
        areas
    }

    pub(crate) fn from_parts(grid: Grid<u32>, n_instances: u32) -> Self {
        InstanceMap { grid, n_instances }
    }
}

/// Per-pixel 3-channel class-probability raster with accumulation support
/// for overlap averaging.
///
/// Channel order is (background, interior, border). During accumulation the
/// channel grids hold 32-bit probability sums and `counts` holds the number
/// of windows that contributed to each pixel; [`ProbMap::finalize`] turns the
/// sums into normalized means in place.
#[derive(Debug, Clone)]
pub struct ProbMap {
    channels: [Grid<f32>; 3],
    counts: Grid<u32>,
    finalized: bool,
}

impl ProbMap {
    pub fn zeroed(width: usize, height: usize) -> Self {
        ProbMap {
            channels: [
                Grid::new(width, height, 0.0),
                Grid::new(width, height, 0.0),
                Grid::new(width, height, 0.0),
            ],
            counts: Grid::new(width, height, 0),
            finalized: false,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.counts.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.counts.height()
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn counts(&self) -> &Grid<u32> {
        &self.counts
    }

    pub fn channel(&self, ch: usize) -> &Grid<f32> {
        &self.channels[ch]
    }

    /// Probabilities at a pixel (finalized maps) or raw sums (accumulating).
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> [f32; 3] {
        [
            self.channels[0].at(row, col),
            self.channels[1].at(row, col),
            self.channels[2].at(row, col),
        ]
    }

    /// Add one window's per-pixel probabilities at the given origin.
    ///
    /// Callers serialize access per pixel region; the mosaicker owns that
    /// contract.
    pub fn accumulate(&mut self, row0: usize, col0: usize, win: &ProbWindow) {
        assert!(
            !self.finalized,
            "cannot accumulate into a finalized ProbMap"
        );
        assert!(row0 + win.height <= self.height() && col0 + win.width <= self.width());
        let map_w = self.width();
        for r in 0..win.height {
            let src = r * win.width;
            let dst = (row0 + r) * map_w + col0;
            for ch in 0..3 {
                let dst_slice = &mut self.channels[ch].as_mut_slice()[dst..dst + win.width];
                let src_slice = &win.channels[ch][src..src + win.width];
                for (d, s) in dst_slice.iter_mut().zip(src_slice) {
                    *d += *s;
                }
            }
            for c in &mut self.counts.as_mut_slice()[dst..dst + win.width] {
                *c += 1;
            }
        }
    }

    /// Convert accumulated sums into per-pixel mean probabilities, normalized
    /// to sum to 1. Pixels never covered by a window are left at zero.
    pub fn finalize(&mut self) {
        assert!(!self.finalized, "ProbMap already finalized");
        let n = self.counts.len();
        for i in 0..n {
            let count = self.counts.as_slice()[i];
            if count == 0 {
                continue;
            }
            let total = self.channels[0].as_slice()[i] as f64
                + self.channels[1].as_slice()[i] as f64
                + self.channels[2].as_slice()[i] as f64;
            if total > 0.0 {
                for ch in 0..3 {
                    let v = self.channels[ch].as_slice()[i] as f64 / total;
                    self.channels[ch].as_mut_slice()[i] = v as f32;
                }
            } else {
                // Degenerate all-zero prediction: call it background.
                self.channels[0].as_mut_slice()[i] = 1.0;
                self.channels[1].as_mut_slice()[i] = 0.0;
                self.channels[2].as_mut_slice()[i] = 0.0;
            }
        }
        self.finalized = true;
    }
}

/// One window of per-pixel class probabilities as produced by a predictor,
/// channel order (background, interior, border), each channel row-major.
#[derive(Debug, Clone)]
pub struct ProbWindow {
    pub height: usize,
    pub width: usize,
    pub channels: [Vec<f32>; 3],
}

impl ProbWindow {
    pub fn zeroed(height: usize, width: usize) -> Self {
        let n = height * width;
        ProbWindow {
            height,
            width,
            channels: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, p: [f32; 3]) {
        let i = row * self.width + col;
        self.channels[0][i] = p[0];
        self.channels[1][i] = p[1];
        self.channels[2][i] = p[2];
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> [f32; 3] {
        let i = row * self.width + col;
        [
            self.channels[0][i],
            self.channels[1][i],
            self.channels[2][i],
        ]
    }
}
