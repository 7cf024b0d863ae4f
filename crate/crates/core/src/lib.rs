//! Turns border-encoded semantic segmentation maps into per-object instance
//! maps and GIS-ready polygons, and generates the training-data artifacts
//! (3-class masks, tiles, COCO annotations) for iterative labeling at city
//! scale.
//!
//! The pipeline stages are plain functions over raster and vector types:
//!
//! * [`groundtruth`] rasterizes vehicle polygons, derives the 3-class
//!   interior/border training masks, and synthesizes test scenes.
//! * [`instancer`] converts a 3-class map into instances: strip the border
//!   class, label connected components, grow everything back one pixel.
//! * [`mosaic`] classifies arbitrarily large rasters by sliding a window
//!   with overlap and averaging probabilities.
//! * [`sampler`] and [`coco`] cut point-centered training tiles and emit
//!   COCO annotations.
//! * [`metrics`] scores predictions per pixel and per object.
//! * [`vectorize`] traces instance maps into polygons that rasterize back
//!   bit-exactly.

pub mod coco;
pub mod error;
pub mod geo;
pub mod geojson;
pub mod grid;
pub mod groundtruth;
mod hash;
pub mod instancer;
pub mod io;
pub mod metrics;
pub mod mosaic;
pub mod sampler;
pub mod source;
pub mod tiled;
pub mod vectorize;

pub use error::{Error, Result};
pub use geo::GeoTransform;
pub use grid::{
    BinaryMask, ClassMap, Grid, InstanceMap, ProbMap, ProbWindow, CLASS_BACKGROUND, CLASS_BORDER,
    CLASS_INTERIOR,
};
pub use source::{MemoryRaster, PixelWindow, RasterSource};
