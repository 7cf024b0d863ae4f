//! Sliding-window classification of arbitrarily large rasters with overlap
//! averaging, behind a pluggable predictor contract.

use std::path::{Path, PathBuf};

use image::ColorType;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ClassMap, Grid, ProbMap, ProbWindow};
use crate::hash::{pixel_hash, unit_f64};
use crate::io;
use crate::source::{PixelWindow, RasterSource};

/// How the final window per axis is placed when the stride does not divide
/// the raster evenly. The only policy is shifting it inward so it ends flush
/// with the raster edge, keeping every prediction on real pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgePolicy {
    #[default]
    ShiftInward,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MosaicConfig {
    pub window: usize,
    pub stride: usize,
    #[serde(default)]
    pub edge_policy: EdgePolicy,
}

impl Default for MosaicConfig {
    fn default() -> Self {
        MosaicConfig {
            window: 256,
            stride: 128,
            edge_policy: EdgePolicy::ShiftInward,
        }
    }
}

impl MosaicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride < 1 || self.stride > self.window {
            return Err(Error::validation(format!(
                "stride {} must satisfy 1 <= stride <= window ({})",
                self.stride, self.window
            )));
        }
        Ok(())
    }
}

/// Per-window classifier: given an image window and its absolute origin,
/// produce per-pixel class probabilities of the same spatial shape.
/// Probabilities must be non-negative and finite; they need not sum to 1
/// (normalization happens at finalization).
pub trait Predictor: Sync {
    fn predict(&self, origin: (usize, usize), window: &PixelWindow) -> Result<ProbWindow>;
}

/// Window origins along one axis: multiples of the stride, with the final
/// window shifted inward to end flush with the edge (added once even when it
/// coincides with a grid origin).
pub fn window_origins(dim: usize, window: usize, stride: usize) -> Vec<usize> {
    debug_assert!(window <= dim && stride >= 1);
    let last = dim - window;
    let mut origins: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|&o| o < last)
        .collect();
    origins.push(last);
    origins
}

/// Classify a raster larger than the predictor window by sliding the window
/// with overlap and averaging per-pixel probabilities.
pub fn predict_large(
    source: &dyn RasterSource,
    predictor: &dyn Predictor,
    cfg: &MosaicConfig,
) -> Result<ProbMap> {
    cfg.validate()?;
    let (w, h) = (source.width(), source.height());
    if h < cfg.window || w < cfg.window {
        return Err(Error::validation(format!(
            "raster {w}x{h} is smaller than the {0}x{0} window; pad the raster to at least the window size",
            cfg.window
        )));
    }
    let row_origins = window_origins(h, cfg.window, cfg.stride);
    let col_origins = window_origins(w, cfg.window, cfg.stride);

    let mut pm = ProbMap::zeroed(w, h);
    for &r0 in &row_origins {
        // Predict one row of windows in parallel, then accumulate in a fixed
        // order so float sums are bit-stable across runs and thread counts.
        let row: Vec<(usize, ProbWindow)> = col_origins
            .par_iter()
            .map(|&c0| {
                let win = source.read_window(r0, c0, cfg.window, cfg.window)?;
                let out = predictor.predict((r0, c0), &win)?;
                check_prediction(&out, (r0, c0), cfg.window)?;
                Ok((c0, out))
            })
            .collect::<Result<Vec<_>>>()?;
        for (c0, out) in &row {
            pm.accumulate(r0, *c0, out);
        }
    }
    pm.finalize();
    Ok(pm)
}

fn check_prediction(out: &ProbWindow, origin: (usize, usize), window: usize) -> Result<()> {
    if out.height != window || out.width != window {
        return Err(Error::contract(format!(
            "predictor returned a {}x{} window for origin ({}, {}); expected {window}x{window}",
            out.height, out.width, origin.0, origin.1
        )));
    }
    for ch in &out.channels {
        if ch.len() != window * window {
            return Err(Error::contract(format!(
                "predictor channel length {} at origin ({}, {}) does not match {window}x{window}",
                ch.len(),
                origin.0,
                origin.1
            )));
        }
        if let Some(bad) = ch.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::contract(format!(
                "predictor produced probability {bad} at origin ({}, {}); probabilities must be finite and >= 0",
                origin.0, origin.1
            )));
        }
    }
    Ok(())
}

/// Per-pixel argmax over a finalized probability map. Ties break toward the
/// lower class code.
pub fn argmax_classmap(pm: &ProbMap) -> ClassMap {
    assert!(
        pm.is_finalized(),
        "argmax_classmap expects a finalized ProbMap"
    );
    let n = pm.width() * pm.height();
    let mut out = vec![0u8; n];
    let (c0, c1, c2) = (
        pm.channel(0).as_slice(),
        pm.channel(1).as_slice(),
        pm.channel(2).as_slice(),
    );
    for i in 0..n {
        let mut best = 0u8;
        let mut best_p = c0[i];
        if c1[i] > best_p {
            best = 1;
            best_p = c1[i];
        }
        if c2[i] > best_p {
            best = 2;
        }
        out[i] = best;
    }
    ClassMap::new(Grid::from_vec(pm.width(), pm.height(), out)).expect("codes in range")
}

/// Ground-truth-backed predictor: one-hot probabilities read from a class
/// map, optionally perturbed by seeded per-pixel noise. The same absolute
/// pixel perturbs identically in every overlapping window, so outputs are
/// stride-invariant and deterministic.
pub struct OraclePredictor {
    gt: ClassMap,
    noise: f64,
    seed: u64,
}

impl OraclePredictor {
    pub fn new(gt: ClassMap, noise: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::validation(format!(
                "noise probability {noise} must lie in [0, 1)"
            )));
        }
        Ok(OraclePredictor { gt, noise, seed })
    }

    fn class_at(&self, row: usize, col: usize) -> u8 {
        let class = self.gt.at(row, col);
        if self.noise > 0.0 {
            let h = pixel_hash(self.seed, row, col);
            if unit_f64(h) < self.noise {
                // swap to one of the two other classes, chosen uniformly
                let offset = 1 + ((h >> 33) & 1) as u8;
                return (class + offset) % 3;
            }
        }
        class
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, origin: (usize, usize), window: &PixelWindow) -> Result<ProbWindow> {
        let (r0, c0) = origin;
        let (h, w) = (window.height, window.width);
        if r0 + h > self.gt.height() || c0 + w > self.gt.width() {
            return Err(Error::range(format!(
                "oracle window at ({r0}, {c0}) size {h}x{w} exceeds the {}x{} ground truth",
                self.gt.width(),
                self.gt.height()
            )));
        }
        let mut out = ProbWindow::zeroed(h, w);
        for r in 0..h {
            for c in 0..w {
                let class = self.class_at(r0 + r, c0 + c);
                out.channels[class as usize][r * w + c] = 1.0;
            }
        }
        Ok(out)
    }
}

/// Exchange-tile filename for a window origin.
pub fn prediction_tile_name(row: usize, col: usize) -> String {
    format!("pred_r{row}_c{col}.png")
}

/// Write one prediction window as a 16-bit RGB PNG, channels
/// (background, interior, border), value = probability * 65535.
pub fn write_prediction_tile(dir: &Path, origin: (usize, usize), win: &ProbWindow) -> Result<()> {
    let n = win.height * win.width;
    let mut data = vec![0u16; n * 3];
    for i in 0..n {
        for ch in 0..3 {
            let p = win.channels[ch][i].clamp(0.0, 1.0);
            data[i * 3 + ch] = (p * 65535.0).round() as u16;
        }
    }
    let path = dir.join(prediction_tile_name(origin.0, origin.1));
    io::write_rgb16_png(&path, win.width, win.height, data)
}

/// File-exchange predictor: serves `pred_r{row}_c{col}.png` tiles written by
/// an external model (or by [`DumpingPredictor`]).
pub struct DirectoryPredictor {
    dir: PathBuf,
    cfg: MosaicConfig,
}

impl DirectoryPredictor {
    pub fn new(dir: PathBuf, cfg: MosaicConfig) -> Self {
        DirectoryPredictor { dir, cfg }
    }
}

impl Predictor for DirectoryPredictor {
    fn predict(&self, origin: (usize, usize), window: &PixelWindow) -> Result<ProbWindow> {
        let _ = window;
        let path = self.dir.join(prediction_tile_name(origin.0, origin.1));
        let img = image::open(&path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(&path, io),
            other => Error::image(&path, other),
        })?;
        if img.color() != ColorType::Rgb16 {
            return Err(Error::contract(format!(
                "{}: prediction tiles must be 16-bit RGB PNG, found {:?}",
                path.display(),
                img.color()
            )));
        }
        let buf = img.into_rgb16();
        let (w, h) = (buf.width() as usize, buf.height() as usize);
        if w != self.cfg.window || h != self.cfg.window {
            return Err(Error::contract(format!(
                "{}: tile is {w}x{h}, expected {want}x{want}",
                path.display(),
                want = self.cfg.window
            )));
        }
        let raw = buf.into_raw();
        let mut out = ProbWindow::zeroed(h, w);
        for i in 0..w * h {
            for ch in 0..3 {
                out.channels[ch][i] = raw[i * 3 + ch] as f32 / 65535.0;
            }
        }
        Ok(out)
    }
}

/// Wraps a predictor and writes every predicted window to an exchange
/// directory while passing it through.
pub struct DumpingPredictor<'a> {
    inner: &'a dyn Predictor,
    dir: PathBuf,
}

impl<'a> DumpingPredictor<'a> {
    pub fn new(inner: &'a dyn Predictor, dir: PathBuf) -> Self {
        DumpingPredictor { inner, dir }
    }
}

impl Predictor for DumpingPredictor<'_> {
    fn predict(&self, origin: (usize, usize), window: &PixelWindow) -> Result<ProbWindow> {
        let out = self.inner.predict(origin, window)?;
        write_prediction_tile(&self.dir, origin, &out)?;
        Ok(out)
    }
}
