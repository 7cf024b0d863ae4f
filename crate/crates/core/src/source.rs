//! Windowed access to imagery, independent of how it is stored.

use crate::error::{Error, Result};
use crate::geo::GeoTransform;

/// One rectangular window of raw samples, interleaved row-major
/// (row, col, channel). 8-bit sources are widened to u16 unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelWindow {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub samples: Vec<u16>,
}

impl PixelWindow {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        PixelWindow {
            height,
            width,
            channels,
            samples: vec![0; height * width * channels],
        }
    }

    #[inline]
    pub fn sample(&self, row: usize, col: usize, ch: usize) -> u16 {
        self.samples[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set_sample(&mut self, row: usize, col: usize, ch: usize, v: u16) {
        self.samples[(row * self.width + col) * self.channels + ch] = v;
    }
}

/// Read-only raster that can serve arbitrary in-bounds windows.
///
/// Implementations must be safe to read from multiple threads.
pub trait RasterSource: Sync {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn channels(&self) -> usize;
    fn bit_depth(&self) -> u8;
    fn geotransform(&self) -> GeoTransform;

    /// Pixel-exact window starting at (row0, col0), h rows by w cols.
    fn read_window(&self, row0: usize, col0: usize, h: usize, w: usize) -> Result<PixelWindow>;
}

pub(crate) fn check_window(
    src_h: usize,
    src_w: usize,
    row0: usize,
    col0: usize,
    h: usize,
    w: usize,
) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::range(format!("window {h}x{w} is empty")));
    }
    if row0 + h > src_h || col0 + w > src_w {
        return Err(Error::range(format!(
            "window rows {row0}..{} cols {col0}..{} exceeds raster {src_h}x{src_w}",
            row0 + h,
            col0 + w
        )));
    }
    Ok(())
}

/// Raster held fully in memory.
#[derive(Debug, Clone)]
pub struct MemoryRaster {
    width: usize,
    height: usize,
    channels: usize,
    bit_depth: u8,
    geotransform: GeoTransform,
    samples: Vec<u16>,
}

impl MemoryRaster {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: u8,
        geotransform: GeoTransform,
        samples: Vec<u16>,
    ) -> Result<Self> {
        if bit_depth != 8 && bit_depth != 16 {
            return Err(Error::validation(format!(
                "unsupported bit depth {bit_depth}"
            )));
        }
        if samples.len() != width * height * channels {
            return Err(Error::validation(format!(
                "sample buffer length {} does not match {width}x{height}x{channels}",
                samples.len()
            )));
        }
        Ok(MemoryRaster {
            width,
            height,
            channels,
            bit_depth,
            geotransform,
            samples,
        })
    }

    /// Flat constant-valued raster, cheap stand-in where pixel content does
    /// not matter (oracle predictors ignore it).
    pub fn flat(width: usize, height: usize, value: u16, geotransform: GeoTransform) -> Self {
        MemoryRaster {
            width,
            height,
            channels: 1,
            bit_depth: 8,
            geotransform,
            samples: vec![value; width * height],
        }
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }
}

impl RasterSource for MemoryRaster {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    fn geotransform(&self) -> GeoTransform {
        self.geotransform
    }

    fn read_window(&self, row0: usize, col0: usize, h: usize, w: usize) -> Result<PixelWindow> {
        check_window(self.height, self.width, row0, col0, h, w)?;
        let mut win = PixelWindow::new(h, w, self.channels);
        for r in 0..h {
            let src = ((row0 + r) * self.width + col0) * self.channels;
            let dst = r * w * self.channels;
            win.samples[dst..dst + w * self.channels]
                .copy_from_slice(&self.samples[src..src + w * self.channels]);
        }
        Ok(win)
    }
}
