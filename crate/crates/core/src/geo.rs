//! Affine pixel/world georeferencing.

use serde::{Deserialize, Serialize};

/// Affine mapping between pixel indices and world coordinates.
///
/// `origin_x`/`origin_y` is the world position of the outer corner of pixel
/// (0, 0). `pixel_size_y` is negative for north-up rasters (row index grows
/// southward while world y grows northward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size_x: f64, pixel_size_y: f64) -> Self {
        assert!(
            pixel_size_x != 0.0 && pixel_size_y != 0.0,
            "pixel size must be nonzero"
        );
        GeoTransform {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
        }
    }

    /// North-up transform with 1 m pixels anchored at the world origin.
    pub fn unit() -> Self {
        GeoTransform::new(0.0, 0.0, 1.0, -1.0)
    }

    /// Identity mapping between pixel indices and coordinates, with y growing
    /// downward like the row index. Used for tile-local (image coordinate)
    /// geometry such as COCO polygons.
    pub fn identity() -> Self {
        GeoTransform::new(0.0, 0.0, 1.0, 1.0)
    }

    /// World coordinate of the center of pixel (row, col).
    pub fn pixel_to_world(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size_x,
            self.origin_y + (row as f64 + 0.5) * self.pixel_size_y,
        )
    }

    /// World coordinate of the pixel corner (row, col) on the corner lattice.
    ///
    /// Corner (r, c) is the outer corner shared by pixels (r-1, c-1) and
    /// (r, c); corner (0, 0) is the raster origin.
    pub fn corner_to_world(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + col as f64 * self.pixel_size_x,
            self.origin_y + row as f64 * self.pixel_size_y,
        )
    }

    /// Pixel index containing the world point, with floor semantics.
    ///
    /// May return negative or otherwise out-of-bounds indices; callers check
    /// bounds themselves.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (i64, i64) {
        let col = ((x - self.origin_x) / self.pixel_size_x).floor() as i64;
        let row = ((y - self.origin_y) / self.pixel_size_y).floor() as i64;
        (row, col)
    }

    /// Continuous pixel-space position of a world point: pixel (r, c) covers
    /// `[c, c+1) x [r, r+1)` in the returned (u, v) = (col-like, row-like)
    /// coordinates.
    pub fn world_to_pixel_f(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_size_x,
            (y - self.origin_y) / self.pixel_size_y,
        )
    }

    /// Absolute area in square world units covered by one pixel.
    pub fn pixel_area(&self) -> f64 {
        (self.pixel_size_x * self.pixel_size_y).abs()
    }
}
