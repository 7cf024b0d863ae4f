//! Ground-truth construction: polygon rasterization, 3-class mask derivation,
//! and synthetic scene generation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;
use crate::geojson::{Feature, FeatureCollection};
use crate::grid::{ClassMap, Grid, InstanceMap, CLASS_BORDER, CLASS_INTERIOR};
use crate::hash::{pixel_hash, splitmix64};

/// Output of [`rasterize_features`]: the instance raster, the original
/// feature id behind each compacted instance id, and the ids of features
/// skipped for degenerate geometry.
#[derive(Debug, Clone)]
pub struct Rasterized {
    pub instances: InstanceMap,
    /// `source_ids[i]` is the feature id painted as instance id `i + 1`.
    pub source_ids: Vec<u64>,
    pub skipped: Vec<u64>,
}

/// Rasterize polygons onto a pixel grid by testing pixel centers with the
/// even-odd rule. Overlaps resolve to the higher feature id; surviving ids
/// are compacted to 1..N in row-major first-appearance order.
pub fn rasterize_features(
    fc: &FeatureCollection,
    gt: &GeoTransform,
    width: usize,
    height: usize,
) -> Result<Rasterized> {
    if width == 0 || height == 0 {
        return Err(Error::validation("target raster dimensions must be >= 1"));
    }
    fc.validate_unique_ids()?;

    let mut order: Vec<&Feature> = fc.features.iter().collect();
    order.sort_by_key(|f| f.id);

    let mut paint: Grid<u32> = Grid::new(width, height, 0);
    let mut painted_ids: Vec<u64> = Vec::new();
    let mut skipped = Vec::new();
    for feature in order {
        if feature.is_degenerate() {
            skipped.push(feature.id);
            continue;
        }
        painted_ids.push(feature.id);
        let stamp = painted_ids.len() as u32;
        paint_feature(&mut paint, feature, gt, stamp);
    }

    let (instances, originals) = InstanceMap::compact_from(paint);
    let source_ids = originals
        .into_iter()
        .map(|stamp| painted_ids[stamp as usize - 1])
        .collect();
    Ok(Rasterized {
        instances,
        source_ids,
        skipped,
    })
}

/// Scanline even-odd fill over all of the feature's rings, in continuous
/// pixel space where pixel (r, c) covers [c, c+1) x [r, r+1).
fn paint_feature(paint: &mut Grid<u32>, feature: &Feature, gt: &GeoTransform, stamp: u32) {
    let (width, height) = (paint.width(), paint.height());
    let rings: Vec<Vec<(f64, f64)>> = feature
        .rings()
        .map(|ring| {
            ring.iter()
                .map(|&(x, y)| gt.world_to_pixel_f(x, y))
                .collect()
        })
        .collect();

    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for ring in &rings {
        for &(_, v) in ring {
            v_min = v_min.min(v);
            v_max = v_max.max(v);
        }
    }
    if !v_min.is_finite() {
        return;
    }
    let r_start = ((v_min - 0.5).ceil().max(0.0)) as usize;
    let r_end = (((v_max - 0.5).floor() + 1.0).min(height as f64).max(0.0)) as usize;

    let mut crossings: Vec<f64> = Vec::new();
    for row in r_start..r_end.min(height) {
        let vs = row as f64 + 0.5;
        crossings.clear();
        for ring in &rings {
            let n = ring.len();
            if n < 2 {
                continue;
            }
            // Implicit closure; an explicit closing vertex yields one
            // zero-length edge which contributes nothing.
            for i in 0..n {
                let (u1, v1) = ring[i];
                let (u2, v2) = ring[(i + 1) % n];
                if (v1 <= vs && vs < v2) || (v2 <= vs && vs < v1) {
                    let t = (vs - v1) / (v2 - v1);
                    crossings.push(u1 + t * (u2 - u1));
                }
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in crossings.chunks_exact(2) {
            let c_lo = (pair[0] - 0.5).ceil().max(0.0) as usize;
            let c_hi = ((pair[1] - 0.5).ceil().max(0.0) as usize).min(width);
            for c in c_lo..c_hi {
                paint.set(row, c, stamp);
            }
        }
    }
}

/// Output of [`derive_three_class`].
#[derive(Debug, Clone)]
pub struct DerivedClasses {
    pub classes: ClassMap,
    /// Instances whose interior eroded away entirely (thinner than 3 px).
    pub thin_objects: u32,
}

/// Split each instance into interior and a 1-pixel border by eroding the
/// instance's pixel set with the full 3x3 structuring element. A pixel is
/// interior only if itself and all 8 neighbors carry the same id; the image
/// boundary counts as outside. Erosion is per id, so touching instances get
/// borders on both sides of the contact line.
pub fn derive_three_class(im: &InstanceMap) -> DerivedClasses {
    let (width, height) = (im.width(), im.height());
    let mut out: Grid<u8> = Grid::new(width, height, 0);
    let mut interior_count = vec![0u64; im.n_instances() as usize + 1];
    let src = im.grid();

    for r in 0..height {
        for c in 0..width {
            let id = src.at(r, c);
            if id == 0 {
                continue;
            }
            let interior = r > 0
                && c > 0
                && r + 1 < height
                && c + 1 < width
                && src.at(r - 1, c - 1) == id
                && src.at(r - 1, c) == id
                && src.at(r - 1, c + 1) == id
                && src.at(r, c - 1) == id
                && src.at(r, c + 1) == id
                && src.at(r + 1, c - 1) == id
                && src.at(r + 1, c) == id
                && src.at(r + 1, c + 1) == id;
            if interior {
                out.set(r, c, CLASS_INTERIOR);
                interior_count[id as usize] += 1;
            } else {
                out.set(r, c, CLASS_BORDER);
            }
        }
    }

    let thin_objects = interior_count[1..].iter().filter(|&&n| n == 0).count() as u32;
    DerivedClasses {
        classes: ClassMap::new(out).expect("codes constructed in range"),
        thin_objects,
    }
}

/// Shape primitives for synthetic scenes, in pixel coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShapeSpec {
    Rect {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    Ellipse {
        center_row: f64,
        center_col: f64,
        radius_rows: f64,
        radius_cols: f64,
    },
}

/// Declarative description of a synthetic scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "GeoTransform::unit")]
    pub geotransform: GeoTransform,
    #[serde(default)]
    pub seed: u64,
    pub shapes: Vec<ShapeSpec>,
}

/// Built-in scene layouts for desk-scale experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenePreset {
    /// 100 separated 20x10 rectangles on a 10x10 grid.
    Grid,
    /// 100 rectangles packed into rows of touching cars.
    ParkingLot,
    /// 50 pairs of rectangles, each pair sharing a full edge.
    TouchingPairs,
}

impl std::str::FromStr for ScenePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(ScenePreset::Grid),
            "parking-lot" => Ok(ScenePreset::ParkingLot),
            "touching-pairs" => Ok(ScenePreset::TouchingPairs),
            other => Err(Error::validation(format!(
                "unknown preset {other:?}; expected grid, parking-lot or touching-pairs"
            ))),
        }
    }
}

/// Build the scene spec for a preset. Jitter comes from the seed; contacts
/// and separations are preserved for every seed.
pub fn preset_scene(preset: ScenePreset, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes = Vec::new();
    match preset {
        ScenePreset::Grid => {
            for gr in 0..10usize {
                for gc in 0..10usize {
                    let jr = rng.gen_range(0..=28usize);
                    let jc = rng.gen_range(0..=18usize);
                    shapes.push(ShapeSpec::Rect {
                        row: gr * 48 + 8 + jr,
                        col: gc * 48 + 8 + jc,
                        height: 10,
                        width: 20,
                    });
                }
            }
        }
        ScenePreset::ParkingLot => {
            for lane in 0..10usize {
                let row = 24 + lane * 44;
                let offset = 40 + rng.gen_range(0..=60usize);
                for car in 0..10usize {
                    shapes.push(ShapeSpec::Rect {
                        row,
                        col: offset + car * 10,
                        height: 20,
                        width: 10,
                    });
                }
            }
        }
        ScenePreset::TouchingPairs => {
            for gr in 0..10usize {
                for gc in 0..5usize {
                    let jy = rng.gen_range(0..=12usize);
                    let jx = rng.gen_range(0..=16usize);
                    let row = gr * 48 + 12 + jy;
                    let col = gc * 96 + 16 + jx;
                    if rng.gen_bool(0.5) {
                        // stacked: share the long horizontal edge
                        shapes.push(ShapeSpec::Rect {
                            row,
                            col,
                            height: 10,
                            width: 20,
                        });
                        shapes.push(ShapeSpec::Rect {
                            row: row + 10,
                            col,
                            height: 10,
                            width: 20,
                        });
                    } else {
                        // side by side: share the short vertical edge
                        shapes.push(ShapeSpec::Rect {
                            row,
                            col,
                            height: 10,
                            width: 20,
                        });
                        shapes.push(ShapeSpec::Rect {
                            row,
                            col: col + 20,
                            height: 10,
                            width: 20,
                        });
                    }
                }
            }
        }
    }
    SceneSpec {
        width: 512,
        height: 512,
        geotransform: GeoTransform::unit(),
        seed,
        shapes,
    }
}

/// Paint a scene's shapes into an instance raster and derive the matching
/// vector ground truth. Shapes may touch but must not overlap.
pub fn synthesize_scene(spec: &SceneSpec) -> Result<(InstanceMap, FeatureCollection)> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::validation("scene dimensions must be >= 1"));
    }
    let mut paint: Grid<u32> = Grid::new(spec.width, spec.height, 0);
    for (i, shape) in spec.shapes.iter().enumerate() {
        let stamp = i as u32 + 1;
        stamp_shape(&mut paint, shape, stamp, spec.width, spec.height)?;
    }
    let (instances, _) = InstanceMap::compact_from(paint);
    let features = crate::vectorize::instances_to_features(&instances, &spec.geotransform);
    Ok((instances, features))
}

fn stamp_shape(
    paint: &mut Grid<u32>,
    shape: &ShapeSpec,
    stamp: u32,
    width: usize,
    height: usize,
) -> Result<()> {
    let mut set = |r: usize, c: usize| -> Result<()> {
        let prev = paint.at(r, c);
        if prev != 0 && prev != stamp {
            return Err(Error::validation(format!(
                "shapes {prev} and {stamp} overlap at pixel ({r}, {c}); scene shapes must be disjoint"
            )));
        }
        paint.set(r, c, stamp);
        Ok(())
    };
    match *shape {
        ShapeSpec::Rect {
            row,
            col,
            height: h,
            width: w,
        } => {
            if h == 0 || w == 0 {
                return Err(Error::validation(format!("shape {stamp} is empty")));
            }
            if row + h > height || col + w > width {
                return Err(Error::validation(format!(
                    "shape {stamp} exceeds the {width}x{height} scene"
                )));
            }
            for r in row..row + h {
                for c in col..col + w {
                    set(r, c)?;
                }
            }
        }
        ShapeSpec::Ellipse {
            center_row,
            center_col,
            radius_rows,
            radius_cols,
        } => {
            if radius_rows <= 0.0 || radius_cols <= 0.0 {
                return Err(Error::validation(format!(
                    "shape {stamp} has nonpositive radius"
                )));
            }
            if center_row - radius_rows < 0.0
                || center_col - radius_cols < 0.0
                || center_row + radius_rows > height as f64
                || center_col + radius_cols > width as f64
            {
                return Err(Error::validation(format!(
                    "shape {stamp} exceeds the {width}x{height} scene"
                )));
            }
            let r_lo = (center_row - radius_rows).floor().max(0.0) as usize;
            let r_hi = ((center_row + radius_rows).ceil() as usize).min(height);
            let c_lo = (center_col - radius_cols).floor().max(0.0) as usize;
            let c_hi = ((center_col + radius_cols).ceil() as usize).min(width);
            let mut any = false;
            for r in r_lo..r_hi {
                for c in c_lo..c_hi {
                    let dr = (r as f64 + 0.5 - center_row) / radius_rows;
                    let dc = (c as f64 + 0.5 - center_col) / radius_cols;
                    if dr * dr + dc * dc <= 1.0 {
                        set(r, c)?;
                        any = true;
                    }
                }
            }
            if !any {
                return Err(Error::validation(format!(
                    "shape {stamp} covers no pixel centers"
                )));
            }
        }
    }
    Ok(())
}

/// Render a synthetic RGB image for a scene: flat-shaded instances on a
/// seeded noise background. Interleaved RGB, row-major.
pub fn render_scene_image(im: &InstanceMap, seed: u64) -> Vec<u8> {
    let (width, height) = (im.width(), im.height());
    let mut data = vec![0u8; width * height * 3];
    for r in 0..height {
        for c in 0..width {
            let i = (r * width + c) * 3;
            let id = im.at(r, c);
            if id == 0 {
                let h = pixel_hash(seed, r, c);
                let base = 88 + (h & 0x3F) as u8; // 88..=151
                data[i] = base;
                data[i + 1] = base.saturating_add(((h >> 8) & 0x07) as u8);
                data[i + 2] = base.saturating_add(((h >> 16) & 0x07) as u8);
            } else {
                let h = splitmix64(seed ^ (0xC0FFEE ^ u64::from(id)).wrapping_mul(0x9E37));
                data[i] = 60 + (h & 0xFF) as u8 % 160;
                data[i + 1] = 60 + ((h >> 16) & 0xFF) as u8 % 160;
                data[i + 2] = 60 + ((h >> 32) & 0xFF) as u8 % 160;
            }
        }
    }
    data
}
