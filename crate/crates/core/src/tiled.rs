//! Tiled raster container for city-scale imagery.
//!
//! A tiled raster is a directory holding `manifest.json` plus one PNG per
//! tile. Edge tiles are zero-padded to the full tile size so every tile file
//! decodes to `tile_size x tile_size`.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use image::ColorType;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;
use crate::io;
use crate::source::{check_window, PixelWindow, RasterSource};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileEntry {
    pub tile_row: usize,
    pub tile_col: usize,
    pub relative_path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TiledRasterManifest {
    pub width: usize,
    pub height: usize,
    pub tile_size: usize,
    pub channels: usize,
    pub bit_depth: u8,
    pub geotransform: GeoTransform,
    pub tiles: Vec<TileEntry>,
}

impl TiledRasterManifest {
    pub fn tiles_across(&self) -> usize {
        self.width.div_ceil(self.tile_size)
    }

    pub fn tiles_down(&self) -> usize {
        self.height.div_ceil(self.tile_size)
    }

    /// Every in-bounds tile index must appear exactly once.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.tile_size == 0 {
            return Err(Error::validation("tiled raster dimensions must be nonzero"));
        }
        if self.bit_depth != 8 && self.bit_depth != 16 {
            return Err(Error::validation(format!(
                "tiled raster bit depth must be 8 or 16, found {}",
                self.bit_depth
            )));
        }
        let (across, down) = (self.tiles_across(), self.tiles_down());
        let mut seen = vec![false; across * down];
        for t in &self.tiles {
            if t.tile_row >= down || t.tile_col >= across {
                return Err(Error::validation(format!(
                    "tile ({}, {}) is outside the {}x{} tile grid",
                    t.tile_row, t.tile_col, down, across
                )));
            }
            let i = t.tile_row * across + t.tile_col;
            if seen[i] {
                return Err(Error::validation(format!(
                    "tile ({}, {}) appears more than once",
                    t.tile_row, t.tile_col
                )));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::validation(format!(
                "tile ({}, {}) is missing from the manifest",
                missing / across,
                missing % across
            )));
        }
        Ok(())
    }
}

/// Decoded-tile cache entry count. Covers a full row of 256-px tiles of a
/// ~16k-wide scene, which is the access pattern of the sliding window.
const TILE_CACHE_CAP: usize = 64;

/// Streaming reader over a tiled raster directory.
pub struct TiledRaster {
    dir: PathBuf,
    manifest: TiledRasterManifest,
    /// tile grid index -> manifest entry index
    lookup: Vec<usize>,
    cache: Mutex<TileCache>,
}

struct TileCache {
    entries: Vec<Option<Arc<Vec<u16>>>>,
    order: VecDeque<usize>,
}

impl TiledRaster {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest: TiledRasterManifest = io::read_json(&dir.join(MANIFEST_NAME))?;
        manifest.validate()?;
        let across = manifest.tiles_across();
        let down = manifest.tiles_down();
        let mut lookup = vec![usize::MAX; across * down];
        for (i, t) in manifest.tiles.iter().enumerate() {
            lookup[t.tile_row * across + t.tile_col] = i;
        }
        Ok(TiledRaster {
            dir: dir.to_path_buf(),
            manifest,
            lookup,
            cache: Mutex::new(TileCache {
                entries: vec![None; across * down],
                order: VecDeque::new(),
            }),
        })
    }

    pub fn manifest(&self) -> &TiledRasterManifest {
        &self.manifest
    }

    fn decode_tile(&self, entry: &TileEntry) -> Result<Vec<u16>> {
        let path = self.dir.join(&entry.relative_path);
        let img = image::open(&path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(&path, io),
            other => Error::image(&path, other),
        })?;
        let ts = self.manifest.tile_size;
        let expect = |ok: bool| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(format!(
                    "{}: tile color type {:?} does not match manifest ({} channels, {}-bit)",
                    path.display(),
                    img.color(),
                    self.manifest.channels,
                    self.manifest.bit_depth
                )))
            }
        };
        let samples: Vec<u16> = match (self.manifest.channels, self.manifest.bit_depth) {
            (1, 8) => {
                expect(img.color() == ColorType::L8)?;
                img.into_luma8()
                    .into_raw()
                    .into_iter()
                    .map(u16::from)
                    .collect()
            }
            (1, 16) => {
                expect(img.color() == ColorType::L16)?;
                img.into_luma16().into_raw()
            }
            (3, 8) => {
                expect(img.color() == ColorType::Rgb8)?;
                img.into_rgb8()
                    .into_raw()
                    .into_iter()
                    .map(u16::from)
                    .collect()
            }
            (3, 16) => {
                expect(img.color() == ColorType::Rgb16)?;
                img.into_rgb16().into_raw()
            }
            (c, b) => {
                return Err(Error::validation(format!(
                    "unsupported tile layout: {c} channels at {b}-bit"
                )))
            }
        };
        if samples.len() != ts * ts * self.manifest.channels {
            return Err(Error::validation(format!(
                "{}: tile decodes to {} samples, expected {}x{}x{}",
                path.display(),
                samples.len(),
                ts,
                ts,
                self.manifest.channels
            )));
        }
        Ok(samples)
    }

    fn tile(&self, tile_row: usize, tile_col: usize) -> Result<Arc<Vec<u16>>> {
        let across = self.manifest.tiles_across();
        let key = tile_row * across + tile_col;
        if let Some(hit) = self.cache.lock().unwrap().entries[key].clone() {
            return Ok(hit);
        }
        let entry = &self.manifest.tiles[self.lookup[key]];
        let decoded = Arc::new(self.decode_tile(entry)?);
        let mut cache = self.cache.lock().unwrap();
        if cache.entries[key].is_none() {
            while cache.order.len() >= TILE_CACHE_CAP {
                let evict = cache.order.pop_front().unwrap();
                cache.entries[evict] = None;
            }
            cache.entries[key] = Some(decoded.clone());
            cache.order.push_back(key);
        }
        Ok(decoded)
    }
}

impl RasterSource for TiledRaster {
    fn width(&self) -> usize {
        self.manifest.width
    }

    fn height(&self) -> usize {
        self.manifest.height
    }

    fn channels(&self) -> usize {
        self.manifest.channels
    }

    fn bit_depth(&self) -> u8 {
        self.manifest.bit_depth
    }

    fn geotransform(&self) -> GeoTransform {
        self.manifest.geotransform
    }

    fn read_window(&self, row0: usize, col0: usize, h: usize, w: usize) -> Result<PixelWindow> {
        check_window(self.manifest.height, self.manifest.width, row0, col0, h, w)?;
        let ts = self.manifest.tile_size;
        let ch = self.manifest.channels;
        let mut win = PixelWindow::new(h, w, ch);
        let tr0 = row0 / ts;
        let tr1 = (row0 + h - 1) / ts;
        let tc0 = col0 / ts;
        let tc1 = (col0 + w - 1) / ts;
        for tr in tr0..=tr1 {
            for tc in tc0..=tc1 {
                let tile = self.tile(tr, tc)?;
                // Intersection of this tile with the requested window.
                let r_start = row0.max(tr * ts);
                let r_end = (row0 + h).min((tr + 1) * ts);
                let c_start = col0.max(tc * ts);
                let c_end = (col0 + w).min((tc + 1) * ts);
                for r in r_start..r_end {
                    let src = ((r - tr * ts) * ts + (c_start - tc * ts)) * ch;
                    let dst = ((r - row0) * w + (c_start - col0)) * ch;
                    let n = (c_end - c_start) * ch;
                    win.samples[dst..dst + n].copy_from_slice(&tile[src..src + n]);
                }
            }
        }
        Ok(win)
    }
}

/// Write a raster as a tiled directory; edge tiles are zero-padded to the
/// full tile size.
pub fn write_tiled(
    dir: &Path,
    raster: &crate::source::MemoryRaster,
    tile_size: usize,
) -> Result<TiledRasterManifest> {
    let (width, height) = (raster.width(), raster.height());
    let channels = raster.channels();
    let bit_depth = raster.bit_depth();
    let geotransform = raster.geotransform();
    let samples = raster.samples();
    let tiles_dir = dir.join("tiles");
    fs::create_dir_all(&tiles_dir).map_err(|e| Error::io(&tiles_dir, e))?;
    let across = width.div_ceil(tile_size);
    let down = height.div_ceil(tile_size);
    let mut tiles = Vec::with_capacity(across * down);
    for tr in 0..down {
        for tc in 0..across {
            let mut data = vec![0u16; tile_size * tile_size * channels];
            let r_end = (tr * tile_size + tile_size).min(height);
            let c_end = (tc * tile_size + tile_size).min(width);
            for r in tr * tile_size..r_end {
                let src = (r * width + tc * tile_size) * channels;
                let n = (c_end - tc * tile_size) * channels;
                let dst = (r - tr * tile_size) * tile_size * channels;
                data[dst..dst + n].copy_from_slice(&samples[src..src + n]);
            }
            let rel = format!("tiles/r{tr}_c{tc}.png");
            let path = dir.join(&rel);
            write_tile_png(&path, tile_size, channels, bit_depth, data)?;
            tiles.push(TileEntry {
                tile_row: tr,
                tile_col: tc,
                relative_path: rel,
            });
        }
    }
    let manifest = TiledRasterManifest {
        width,
        height,
        tile_size,
        channels,
        bit_depth,
        geotransform,
        tiles,
    };
    io::write_json_pretty(&dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

fn write_tile_png(
    path: &Path,
    tile_size: usize,
    channels: usize,
    bit_depth: u8,
    data: Vec<u16>,
) -> Result<()> {
    match (channels, bit_depth) {
        (1, 8) => {
            let bytes: Vec<u8> = data.into_iter().map(|v| v as u8).collect();
            io::write_gray8_png(
                path,
                &crate::grid::Grid::from_vec(tile_size, tile_size, bytes),
            )
        }
        (1, 16) => io::write_gray16_png(path, tile_size, tile_size, data),
        (3, 8) => {
            let bytes: Vec<u8> = data.into_iter().map(|v| v as u8).collect();
            io::write_rgb8_png(path, tile_size, tile_size, bytes)
        }
        (3, 16) => io::write_rgb16_png(path, tile_size, tile_size, data),
        (c, b) => Err(Error::validation(format!(
            "unsupported tile layout: {c} channels at {b}-bit"
        ))),
    }
}
