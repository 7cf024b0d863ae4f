//! Point-driven training-sample generator: crop image tiles centered on
//! user-chosen points and emit imagery, 3-class masks and tile-local
//! instance rasters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;
use crate::geojson::PointSet;
use crate::grid::{ClassMap, Grid, InstanceMap};
use crate::io;
use crate::source::RasterSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderPolicy {
    /// Shift tiles near the raster edge inward so they stay in bounds.
    #[default]
    Clamp,
    /// Skip points whose tile would cross the raster edge.
    Skip,
}

impl std::str::FromStr for BorderPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamp" => Ok(BorderPolicy::Clamp),
            "skip" => Ok(BorderPolicy::Skip),
            other => Err(Error::validation(format!(
                "unknown border policy {other:?}; expected clamp or skip"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSpec {
    pub tile_size: usize,
    pub out_dir: PathBuf,
    pub emit_coco: bool,
    pub border_policy: BorderPolicy,
}

impl SampleSpec {
    pub fn new(out_dir: PathBuf) -> Self {
        SampleSpec {
            tile_size: 256,
            out_dir,
            emit_coco: true,
            border_policy: BorderPolicy::Clamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size < 32 {
            return Err(Error::validation(format!(
                "tile size {} is below the minimum of 32",
                self.tile_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileRecord {
    pub index: usize,
    pub point: [f64; 2],
    pub origin_row: usize,
    pub origin_col: usize,
    pub n_instances: u32,
    /// Tile-local ids of instances cut off by the tile edge.
    pub clipped_ids: Vec<u32>,
    pub image: String,
    pub mask: String,
    pub instances: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub point: [f64; 2],
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleManifest {
    pub out_dir: PathBuf,
    pub tile_size: usize,
    pub border_policy: BorderPolicy,
    pub tiles: Vec<TileRecord>,
    pub skipped: Vec<SkippedPoint>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<serde_json::Value>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Generate one tile per accepted point, centered on the point's pixel.
///
/// Writes `img_{i}.png`, `mask_{i}.png` and `inst_{i}.png` (tile-local ids
/// recompacted to 1..n) into the spec's output directory and returns the
/// manifest, which is also written as `manifest.json`.
pub fn generate_samples(
    image: &dyn RasterSource,
    gt: &InstanceMap,
    gt_classes: &ClassMap,
    gt_geotransform: &GeoTransform,
    pts: &PointSet,
    spec: &SampleSpec,
) -> Result<SampleManifest> {
    spec.validate()?;
    let (width, height) = (image.width(), image.height());
    if gt.width() != width
        || gt.height() != height
        || gt_classes.width() != width
        || gt_classes.height() != height
    {
        return Err(Error::validation(format!(
            "image ({}x{}), instance map ({}x{}) and class map ({}x{}) must share dimensions",
            width,
            height,
            gt.width(),
            gt.height(),
            gt_classes.width(),
            gt_classes.height()
        )));
    }
    if image.geotransform() != *gt_geotransform {
        return Err(Error::validation(
            "image and ground truth must share a geotransform".to_string(),
        ));
    }
    let ts = spec.tile_size;
    if ts > width || ts > height {
        return Err(Error::validation(format!(
            "tile size {ts} exceeds the {width}x{height} raster"
        )));
    }
    fs::create_dir_all(&spec.out_dir).map_err(|e| Error::io(&spec.out_dir, e))?;

    let global_areas = gt.areas();
    let mut tiles = Vec::new();
    let mut skipped = Vec::new();
    for (&(x, y), _label) in pts.points.iter().zip(&pts.labels) {
        let (row, col) = gt_geotransform.world_to_pixel(x, y);
        if row < 0 || col < 0 || row as usize >= height || col as usize >= width {
            skipped.push(SkippedPoint {
                point: [x, y],
                reason: format!("point maps to pixel ({row}, {col}), outside the raster"),
            });
            continue;
        }
        let want_r = row - (ts / 2) as i64;
        let want_c = col - (ts / 2) as i64;
        let (origin_row, origin_col) = match spec.border_policy {
            BorderPolicy::Clamp => (
                want_r.clamp(0, (height - ts) as i64) as usize,
                want_c.clamp(0, (width - ts) as i64) as usize,
            ),
            BorderPolicy::Skip => {
                if want_r < 0
                    || want_c < 0
                    || want_r as usize + ts > height
                    || want_c as usize + ts > width
                {
                    skipped.push(SkippedPoint {
                        point: [x, y],
                        reason: "tile would cross the raster edge".to_string(),
                    });
                    continue;
                }
                (want_r as usize, want_c as usize)
            }
        };

        let index = tiles.len();
        let image_name = format!("img_{index}.png");
        let mask_name = format!("mask_{index}.png");
        let inst_name = format!("inst_{index}.png");

        write_image_tile(
            image,
            origin_row,
            origin_col,
            ts,
            &spec.out_dir.join(&image_name),
        )?;

        let mut mask = Grid::new(ts, ts, 0u8);
        for r in 0..ts {
            for c in 0..ts {
                mask.set(r, c, gt_classes.at(origin_row + r, origin_col + c));
            }
        }
        io::write_gray8_png(&spec.out_dir.join(&mask_name), &mask)?;

        let mut ids = Grid::new(ts, ts, 0u32);
        for r in 0..ts {
            for c in 0..ts {
                ids.set(r, c, gt.at(origin_row + r, origin_col + c));
            }
        }
        let (local, originals) = InstanceMap::compact_from(ids);
        let local_areas = local.areas();
        let clipped_ids: Vec<u32> = (1..=local.n_instances())
            .filter(|&local_id| {
                let original = originals[local_id as usize - 1];
                local_areas[local_id as usize] < global_areas[original as usize]
            })
            .collect();
        if local.n_instances() > u16::MAX as u32 {
            return Err(Error::validation(format!(
                "tile {index} holds {} instances; 16-bit PNG supports at most 65535",
                local.n_instances()
            )));
        }
        let data: Vec<u16> = local.grid().as_slice().iter().map(|&v| v as u16).collect();
        io::write_gray16_png(&spec.out_dir.join(&inst_name), ts, ts, data)?;

        tiles.push(TileRecord {
            index,
            point: [x, y],
            origin_row,
            origin_col,
            n_instances: local.n_instances(),
            clipped_ids,
            image: image_name,
            mask: mask_name,
            instances: inst_name,
        });
    }

    let manifest = SampleManifest {
        out_dir: spec.out_dir.clone(),
        tile_size: ts,
        border_policy: spec.border_policy,
        tiles,
        skipped,
        config: None,
    };
    io::write_json_pretty(&spec.out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn write_image_tile(
    image: &dyn RasterSource,
    row0: usize,
    col0: usize,
    ts: usize,
    path: &Path,
) -> Result<()> {
    let win = image.read_window(row0, col0, ts, ts)?;
    let scale_down = image.bit_depth() == 16;
    let mut rgb = vec![0u8; ts * ts * 3];
    for i in 0..ts * ts {
        for ch in 0..3 {
            let v = if win.channels == 1 {
                win.samples[i]
            } else {
                win.samples[i * win.channels + ch.min(win.channels - 1)]
            };
            rgb[i * 3 + ch] = if scale_down { (v >> 8) as u8 } else { v as u8 };
        }
    }
    io::write_rgb8_png(path, ts, ts, rgb)
}
