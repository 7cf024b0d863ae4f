//! PNG and JSON codecs for the on-disk raster formats.
//!
//! Imagery is 8-bit RGB PNG, class maps are 8-bit single-channel PNG with
//! raw codes 0/1/2, instance maps are 16-bit single-channel PNG with a JSON
//! sidecar `<name>.meta.json` carrying the geotransform and instance count.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageBuffer, Luma, Rgb};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;
use crate::grid::{ClassMap, Grid, InstanceMap, ProbMap, CLASS_BORDER};
use crate::source::MemoryRaster;

/// Sidecar metadata written next to raster outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RasterMeta {
    pub geotransform: GeoTransform,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_instances: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub thin_objects: Option<u32>,
    /// Feature ids skipped during rasterization (degenerate geometry).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skipped_features: Option<Vec<u64>>,
    /// Fully-resolved parameter set of the command that produced the raster.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<serde_json::Value>,
}

impl RasterMeta {
    pub fn new(geotransform: GeoTransform) -> Self {
        RasterMeta {
            geotransform,
            n_instances: None,
            thin_objects: None,
            skipped_features: None,
            config: None,
        }
    }
}

/// Sidecar path for a raster: `dir/name.png` -> `dir/name.meta.json`.
pub fn meta_path(raster_path: &Path) -> PathBuf {
    raster_path.with_extension("meta.json")
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::image(path, other),
    })
}

pub fn write_gray8_png(path: &Path, grid: &Grid<u8>) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        grid.width() as u32,
        grid.height() as u32,
        grid.as_slice().to_vec(),
    )
    .expect("grid length matches dimensions");
    buf.save(path).map_err(|e| Error::image(path, e))
}

pub fn read_gray8_png(path: &Path) -> Result<Grid<u8>> {
    let img = open_image(path)?;
    if img.color() != ColorType::L8 {
        return Err(Error::validation(format!(
            "{}: expected 8-bit single-channel PNG, found {:?}",
            path.display(),
            img.color()
        )));
    }
    let buf = img.into_luma8();
    Ok(Grid::from_vec(
        buf.width() as usize,
        buf.height() as usize,
        buf.into_raw(),
    ))
}

pub fn write_gray16_png(path: &Path, width: usize, height: usize, data: Vec<u16>) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, data).expect("length matches dims");
    buf.save(path).map_err(|e| Error::image(path, e))
}

pub fn read_gray16_png(path: &Path) -> Result<Grid<u16>> {
    let img = open_image(path)?;
    if img.color() != ColorType::L16 {
        return Err(Error::validation(format!(
            "{}: expected 16-bit single-channel PNG, found {:?}",
            path.display(),
            img.color()
        )));
    }
    let buf = img.into_luma16();
    Ok(Grid::from_vec(
        buf.width() as usize,
        buf.height() as usize,
        buf.into_raw(),
    ))
}

pub fn write_rgb8_png(path: &Path, width: usize, height: usize, data: Vec<u8>) -> Result<()> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(width as u32, height as u32, data).expect("length matches dims");
    buf.save(path).map_err(|e| Error::image(path, e))
}

pub fn read_rgb8_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = open_image(path)?;
    let buf = img.to_rgb8();
    Ok((buf.width() as usize, buf.height() as usize, buf.into_raw()))
}

pub fn write_rgb16_png(path: &Path, width: usize, height: usize, data: Vec<u16>) -> Result<()> {
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, data).expect("length matches dims");
    buf.save(path).map_err(|e| Error::image(path, e))
}

pub fn write_classmap(path: &Path, cm: &ClassMap) -> Result<()> {
    write_gray8_png(path, cm.grid())
}

pub fn read_classmap(path: &Path) -> Result<ClassMap> {
    let grid = read_gray8_png(path)?;
    if let Some(bad) = grid.as_slice().iter().find(|&&v| v > CLASS_BORDER) {
        return Err(Error::validation(format!(
            "{}: class map contains code {bad}, expected 0, 1 or 2",
            path.display()
        )));
    }
    ClassMap::new(grid)
}

/// Write an instance map as 16-bit PNG plus its metadata sidecar.
pub fn write_instance_map(path: &Path, im: &InstanceMap, meta: &RasterMeta) -> Result<()> {
    if im.n_instances() > u16::MAX as u32 {
        return Err(Error::validation(format!(
            "instance map has {} instances; 16-bit PNG supports at most 65535",
            im.n_instances()
        )));
    }
    let data: Vec<u16> = im.grid().as_slice().iter().map(|&v| v as u16).collect();
    write_gray16_png(path, im.width(), im.height(), data)?;
    let mut meta = meta.clone();
    meta.n_instances = Some(im.n_instances());
    write_json_pretty(&meta_path(path), &meta)
}

/// Read an instance map and its sidecar, validating id compactness.
pub fn read_instance_map(path: &Path) -> Result<(InstanceMap, RasterMeta)> {
    let grid16 = read_gray16_png(path)?;
    let meta: RasterMeta = read_json(&meta_path(path))?;
    let grid = Grid::from_vec(
        grid16.width(),
        grid16.height(),
        grid16.as_slice().iter().map(|&v| v as u32).collect(),
    );
    let im = InstanceMap::new(grid)?;
    if let Some(n) = meta.n_instances {
        if n != im.n_instances() {
            return Err(Error::validation(format!(
                "{}: sidecar declares {} instances but raster holds {}",
                path.display(),
                n,
                im.n_instances()
            )));
        }
    }
    Ok((im, meta))
}

/// Write a finalized probability map as one 16-bit RGB PNG,
/// channels (background, interior, border), value = probability * 65535.
pub fn write_probmap(path: &Path, pm: &ProbMap) -> Result<()> {
    assert!(
        pm.is_finalized(),
        "write_probmap expects a finalized ProbMap"
    );
    let (w, h) = (pm.width(), pm.height());
    let mut data = vec![0u16; w * h * 3];
    for i in 0..w * h {
        for ch in 0..3 {
            let p = pm.channel(ch).as_slice()[i].clamp(0.0, 1.0);
            data[i * 3 + ch] = (p * 65535.0).round() as u16;
        }
    }
    write_rgb16_png(path, w, h, data)
}

/// Load a single-file PNG as an in-memory raster source. The geotransform
/// comes from a `<name>.meta.json` sidecar when present, else the unit
/// transform.
pub fn load_image_raster(path: &Path) -> Result<MemoryRaster> {
    let gt = match read_json::<RasterMeta>(&meta_path(path)) {
        Ok(meta) => meta.geotransform,
        Err(Error::Io { .. }) => GeoTransform::unit(),
        Err(e) => return Err(e),
    };
    let img = open_image(path)?;
    match img.color() {
        ColorType::L8 => {
            let buf = img.into_luma8();
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let samples = buf.into_raw().into_iter().map(u16::from).collect();
            MemoryRaster::new(w, h, 1, 8, gt, samples)
        }
        ColorType::L16 => {
            let buf = img.into_luma16();
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            MemoryRaster::new(w, h, 1, 16, gt, buf.into_raw())
        }
        _ => {
            let buf = img.to_rgb8();
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let samples = buf.into_raw().into_iter().map(u16::from).collect();
            MemoryRaster::new(w, h, 3, 8, gt, samples)
        }
    }
}
