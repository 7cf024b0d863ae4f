//! Cross-module integration tests: rasterization against the
//! point-in-polygon oracle, tiled raster streaming, mosaicking equivalences,
//! orientation independence and metric properties.

mod common;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cityseg_core::error::Error;
use cityseg_core::geo::GeoTransform;
use cityseg_core::geojson::{
    read_feature_collection, write_feature_collection, Feature, FeatureCollection,
};
use cityseg_core::groundtruth::{derive_three_class, rasterize_features};
use cityseg_core::instancer::{semantic_to_instances, InstancerConfig};
use cityseg_core::metrics::{per_object, MatchConfig};
use cityseg_core::mosaic::{
    argmax_classmap, predict_large, prediction_tile_name, window_origins, DirectoryPredictor,
    DumpingPredictor, MosaicConfig, OraclePredictor, Predictor,
};
use cityseg_core::source::{MemoryRaster, PixelWindow, RasterSource};
use cityseg_core::tiled::{write_tiled, TiledRaster};
use cityseg_core::vectorize::{features_to_instances, instances_to_features};
use cityseg_core::{ClassMap, Grid, InstanceMap, ProbWindow};

// --- rasterization vs point-in-polygon oracle ---

#[test]
fn rasterize_matches_point_in_polygon_oracle() {
    let gt = GeoTransform::new(2.0, 9.0, 0.5, -0.5);
    let triangle = Feature::polygon(1, vec![vec![(2.5, 8.5), (14.0, 8.0), (6.0, 1.5)]]);
    let with_hole = Feature::polygon(
        2,
        vec![
            vec![(15.0, 8.0), (21.0, 8.0), (21.0, 2.0), (15.0, 2.0)],
            vec![(17.0, 6.0), (19.0, 6.0), (19.0, 4.0), (17.0, 4.0)],
        ],
    );
    let mut multi = Feature::polygon(3, Vec::new());
    multi.polygons = vec![
        vec![vec![(3.0, 0.5), (6.0, 0.5), (6.0, -1.5), (3.0, -1.5)]],
        vec![vec![(8.0, 0.5), (11.0, 0.5), (11.0, -1.5), (8.0, -1.5)]],
    ];
    // id 4 overlaps the triangle; higher id wins there
    let overlap = Feature::polygon(
        4,
        vec![vec![(4.0, 7.0), (9.0, 7.0), (9.0, 4.0), (4.0, 4.0)]],
    );
    let fc = FeatureCollection::new(vec![triangle, with_hole, multi, overlap]);

    let out = rasterize_features(&fc, &gt, 40, 24).unwrap();
    let expect = common::brute_rasterize(&fc, &gt, 40, 24);
    assert_eq!(out.instances.grid(), &expect);
}

#[test]
fn rasterize_matches_oracle_on_traced_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let gt = GeoTransform::new(-8.0, 3.0, 0.25, -0.25);
    for _ in 0..20 {
        let im = common::random_instance_map(&mut rng, 24, 20);
        let fc = instances_to_features(&im, &gt);
        let out = rasterize_features(&fc, &gt, 24, 20).unwrap();
        let expect = common::brute_rasterize(&fc, &gt, 24, 20);
        assert_eq!(out.instances.grid(), &expect);
    }
}

// --- tiled raster streaming ---

#[test]
fn tiled_windows_match_the_full_raster_for_1000_random_reads() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (width, height) = (203, 157);
    let samples: Vec<u16> = (0..width * height * 3)
        .map(|_| rng.gen_range(0..256))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let memory = MemoryRaster::new(width, height, 3, 8, GeoTransform::unit(), samples).unwrap();
    write_tiled(dir.path(), &memory, 64).unwrap();
    let tiled = TiledRaster::open(dir.path()).unwrap();

    for _ in 0..1000 {
        let h = rng.gen_range(1..=height);
        let w = rng.gen_range(1..=width);
        let r0 = rng.gen_range(0..=height - h);
        let c0 = rng.gen_range(0..=width - w);
        let a = tiled.read_window(r0, c0, h, w).unwrap();
        let b = memory.read_window(r0, c0, h, w).unwrap();
        assert_eq!(a, b, "window ({r0},{c0}) {h}x{w}");
    }
}

#[test]
fn tiled_round_trip_is_bit_exact_and_tile_aligned_windows_match_tiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (width, height) = (96, 64);
    let samples: Vec<u16> = (0..width * height)
        .map(|_| rng.gen_range(0..=u16::MAX))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let memory =
        MemoryRaster::new(width, height, 1, 16, GeoTransform::unit(), samples.clone()).unwrap();
    let manifest = write_tiled(dir.path(), &memory, 32).unwrap();
    assert_eq!(manifest.tiles.len(), 6);
    let tiled = TiledRaster::open(dir.path()).unwrap();

    // full read reproduces every pixel bit-exactly
    let full = tiled.read_window(0, 0, height, width).unwrap();
    assert_eq!(full.samples, samples);

    // a window aligned to one tile returns exactly that tile's bytes
    let win = tiled.read_window(32, 64, 32, 32).unwrap();
    let png = cityseg_core::io::read_gray16_png(&dir.path().join("tiles/r1_c2.png")).unwrap();
    assert_eq!(win.samples, png.as_slice());
}

#[test]
fn predict_large_streams_from_a_tiled_raster() {
    let (width, height) = (96, 96);
    let dir = tempfile::tempdir().unwrap();
    let flat = MemoryRaster::flat(width, height, 0, GeoTransform::unit());
    write_tiled(dir.path(), &flat, 40).unwrap();
    let tiled = TiledRaster::open(dir.path()).unwrap();

    let mut grid = Grid::new(width, height, 0u32);
    common::paint_rect(&mut grid, 20, 30, 12, 24, 1);
    let gt_inst = InstanceMap::new(grid).unwrap();
    let classes = derive_three_class(&gt_inst).classes;
    let oracle = OraclePredictor::new(classes.clone(), 0.0, 0).unwrap();
    let cfg = MosaicConfig {
        window: 48,
        stride: 24,
        ..Default::default()
    };
    let pm = predict_large(&tiled, &oracle, &cfg).unwrap();
    assert_eq!(argmax_classmap(&pm), classes);
}

// --- mosaicking equivalences ---

/// Per-window constant probabilities derived from the window origin, so
/// overlapping pixels really average different values.
struct OriginPredictor;

impl Predictor for OriginPredictor {
    fn predict(
        &self,
        origin: (usize, usize),
        window: &PixelWindow,
    ) -> cityseg_core::Result<ProbWindow> {
        let p0 = ((origin.0 * 31 + origin.1 * 17) % 101) as f32 / 101.0;
        let p = [p0, 1.0 - p0, 0.25];
        let mut out = ProbWindow::zeroed(window.height, window.width);
        for r in 0..window.height {
            for c in 0..window.width {
                out.set(r, c, p);
            }
        }
        Ok(out)
    }
}

#[test]
fn finalized_probabilities_equal_brute_force_means() {
    let (width, height) = (200, 120);
    let src = MemoryRaster::flat(width, height, 0, GeoTransform::unit());
    let cfg = MosaicConfig {
        window: 64,
        stride: 48,
        ..Default::default()
    };
    let pm = predict_large(&src, &OriginPredictor, &cfg).unwrap();

    let rows = window_origins(height, 64, 48);
    let cols = window_origins(width, 64, 48);
    let mut sums = vec![[0f64; 3]; width * height];
    let mut counts = vec![0u32; width * height];
    for &r0 in &rows {
        for &c0 in &cols {
            let p0 = ((r0 * 31 + c0 * 17) % 101) as f64 / 101.0;
            let p = [p0, 1.0 - p0, 0.25];
            for r in r0..r0 + 64 {
                for c in c0..c0 + 64 {
                    for ch in 0..3 {
                        sums[r * width + c][ch] += p[ch];
                    }
                    counts[r * width + c] += 1;
                }
            }
        }
    }
    for i in 0..width * height {
        assert_eq!(pm.counts().as_slice()[i], counts[i]);
        let mean: Vec<f64> = (0..3).map(|ch| sums[i][ch] / counts[i] as f64).collect();
        let total: f64 = mean.iter().sum();
        for (ch, m) in mean.iter().enumerate() {
            let expect = m / total;
            let got = pm.channel(ch).as_slice()[i] as f64;
            assert!(
                (got - expect).abs() < 1e-5,
                "pixel {i} channel {ch}: {got} vs {expect}"
            );
        }
    }
}

#[test]
fn directory_predictor_reproduces_the_in_process_run() {
    let mut grid = Grid::new(96, 96, 0u32);
    common::paint_rect(&mut grid, 10, 10, 10, 20, 1);
    common::paint_rect(&mut grid, 40, 40, 12, 20, 2);
    let gt_inst = InstanceMap::new(grid).unwrap();
    let classes = derive_three_class(&gt_inst).classes;
    let oracle = OraclePredictor::new(classes, 0.05, 42).unwrap();
    let src = MemoryRaster::flat(96, 96, 0, GeoTransform::unit());
    let cfg = MosaicConfig {
        window: 48,
        stride: 24,
        ..Default::default()
    };

    let dir = tempfile::tempdir().unwrap();
    let dumping = DumpingPredictor::new(&oracle, dir.path().to_path_buf());
    let pm_live = predict_large(&src, &dumping, &cfg).unwrap();

    let from_files = DirectoryPredictor::new(dir.path().to_path_buf(), cfg);
    let pm_replayed = predict_large(&src, &from_files, &cfg).unwrap();

    assert_eq!(pm_live.counts(), pm_replayed.counts());
    assert_eq!(argmax_classmap(&pm_live), argmax_classmap(&pm_replayed));
    for ch in 0..3 {
        for (a, b) in pm_live
            .channel(ch)
            .as_slice()
            .iter()
            .zip(pm_replayed.channel(ch).as_slice())
        {
            assert!((a - b).abs() < 1e-4);
        }
    }
}

#[test]
fn missing_prediction_tile_error_names_the_file() {
    let src = MemoryRaster::flat(96, 96, 0, GeoTransform::unit());
    let cfg = MosaicConfig {
        window: 48,
        stride: 48,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();

    // dump a full set, then remove one tile
    let gt = ClassMap::filled(96, 96, 0);
    let oracle = OraclePredictor::new(gt, 0.0, 0).unwrap();
    let dumping = DumpingPredictor::new(&oracle, dir.path().to_path_buf());
    predict_large(&src, &dumping, &cfg).unwrap();
    std::fs::remove_file(dir.path().join(prediction_tile_name(48, 0))).unwrap();

    let from_files = DirectoryPredictor::new(dir.path().to_path_buf(), cfg);
    let err = predict_large(&src, &from_files, &cfg).unwrap_err();
    assert!(err.to_string().contains("pred_r48_c0.png"), "{err}");
}

#[test]
fn eight_bit_prediction_tile_is_a_contract_violation() {
    let cfg = MosaicConfig {
        window: 48,
        stride: 48,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    // 8-bit RGB where 16-bit is required
    cityseg_core::io::write_rgb8_png(
        &dir.path().join(prediction_tile_name(0, 0)),
        48,
        48,
        vec![0u8; 48 * 48 * 3],
    )
    .unwrap();
    let predictor = DirectoryPredictor::new(dir.path().to_path_buf(), cfg);
    let win = PixelWindow::new(48, 48, 1);
    let err = predictor.predict((0, 0), &win).unwrap_err();
    assert!(matches!(err, Error::Contract(_)), "{err}");
    assert!(err.to_string().contains("16-bit"), "{err}");
}

#[test]
fn wrong_sized_prediction_tile_is_a_contract_violation() {
    let cfg = MosaicConfig {
        window: 48,
        stride: 48,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    cityseg_core::io::write_rgb16_png(
        &dir.path().join(prediction_tile_name(0, 0)),
        32,
        32,
        vec![0u16; 32 * 32 * 3],
    )
    .unwrap();
    let predictor = DirectoryPredictor::new(dir.path().to_path_buf(), cfg);
    let win = PixelWindow::new(48, 48, 1);
    let err = predictor.predict((0, 0), &win).unwrap_err();
    assert!(matches!(err, Error::Contract(_)), "{err}");
    assert!(err.to_string().contains("32x32"), "{err}");
}

// --- orientation independence ---

#[test]
fn pipeline_output_is_orientation_independent() {
    for seed in [3u64, 17, 51] {
        let gt_inst = common::random_rect_scene(seed);
        let classes = derive_three_class(&gt_inst).classes;
        let base = semantic_to_instances(&classes, &InstancerConfig::default());
        for turns in 1..=3usize {
            let rotated = ClassMap::new(common::rotate_grid(classes.grid(), turns)).unwrap();
            let out = semantic_to_instances(&rotated, &InstancerConfig::default());
            let back = common::rotate_grid(out.grid(), 4 - turns);
            assert!(
                common::same_partition_grids(&back, base.grid()),
                "seed {seed}, {turns} quarter turns"
            );
        }
    }
}

// --- metric properties ---

#[test]
fn replicating_a_scene_2x2_quadruples_every_count() {
    let (width, height) = (64, 48);
    let gt = common::rects_to_map(width, height, &[(4, 4, 10, 20), (30, 30, 10, 20)]);
    // prediction: first object matched exactly, second shifted into partial,
    // plus one spurious blob
    let pred = common::rects_to_map(
        width,
        height,
        &[(4, 4, 10, 20), (33, 38, 10, 20), (20, 4, 4, 4)],
    );
    let base = per_object(&pred, &gt, &MatchConfig::default()).unwrap();
    assert_eq!(
        (
            base.correct,
            base.partial,
            base.false_negatives,
            base.false_positives
        ),
        (1, 1, 0, 1)
    );

    let tile = |im: &InstanceMap| -> InstanceMap {
        let n = im.n_instances();
        let mut big = Grid::new(2 * width, 2 * height, 0u32);
        for (q, (dr, dc)) in [(0usize, 0usize), (0, width), (height, 0), (height, width)]
            .iter()
            .enumerate()
        {
            for r in 0..height {
                for c in 0..width {
                    let v = im.at(r, c);
                    if v != 0 {
                        big.set(r + dr, c + dc, v + q as u32 * n);
                    }
                }
            }
        }
        InstanceMap::new(big).unwrap()
    };
    let big = per_object(&tile(&pred), &tile(&gt), &MatchConfig::default()).unwrap();
    assert_eq!(big.correct, 4 * base.correct);
    assert_eq!(big.partial, 4 * base.partial);
    assert_eq!(big.false_negatives, 4 * base.false_negatives);
    assert_eq!(big.false_positives, 4 * base.false_positives);
}

/// Exhaustive optimal one-to-one matching on tiny scenes: maximum number of
/// disjoint pairs with IoU >= tau_correct.
fn optimal_correct(pred: &InstanceMap, gt: &InstanceMap, tau: f64) -> u32 {
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let pred_areas = pred.areas();
    let gt_areas = gt.areas();
    let mut inter = std::collections::HashMap::new();
    for (&p, &g) in pred.grid().as_slice().iter().zip(gt.grid().as_slice()) {
        if p != 0 && g != 0 {
            *inter.entry((p, g)).or_insert(0u64) += 1;
        }
    }
    for ((p, g), i) in inter {
        let iou = i as f64 / (pred_areas[p as usize] + gt_areas[g as usize] - i) as f64;
        if iou >= tau {
            pairs.push((p, g));
        }
    }
    fn best(pairs: &[(u32, u32)], used_p: u64, used_g: u64) -> u32 {
        let mut top = 0;
        for (i, &(p, g)) in pairs.iter().enumerate() {
            if used_p & (1 << p) == 0 && used_g & (1 << g) == 0 {
                top = top.max(1 + best(&pairs[i + 1..], used_p | (1 << p), used_g | (1 << g)));
            }
        }
        top
    }
    best(&pairs, 0, 0)
}

#[test]
fn greedy_matching_equals_optimal_on_small_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let n = rng.gen_range(1..=6usize);
        let mut gt_rects = Vec::new();
        let mut pred_rects = Vec::new();
        for k in 0..n {
            let r0 = 4 + (k / 3) * 20;
            let c0 = 4 + (k % 3) * 28;
            gt_rects.push((r0, c0, 10, 20));
            let dr = rng.gen_range(-2i64..=2);
            let dc = rng.gen_range(-2i64..=2);
            pred_rects.push(((r0 as i64 + dr) as usize, (c0 as i64 + dc) as usize, 10, 20));
        }
        let gt = common::rects_to_map(96, 48, &gt_rects);
        let pred = common::rects_to_map(96, 48, &pred_rects);
        let cfg = MatchConfig::default();
        let report = per_object(&pred, &gt, &cfg).unwrap();
        let optimal = optimal_correct(&pred, &gt, cfg.tau_correct);
        assert_eq!(report.correct, optimal);
    }
}

// --- containment and end-to-end behavior ---

#[test]
fn pipeline_never_claims_pixels_outside_the_original_objects() {
    // Hole-free scenes: containment holds with default hole filling.
    for seed in 0..10u64 {
        let im = common::random_rect_scene(seed);
        let classes = derive_three_class(&im).classes;
        let out = semantic_to_instances(&classes, &InstancerConfig::default());
        for r in 0..im.height() {
            for c in 0..im.width() {
                assert!(
                    out.at(r, c) == 0 || out.at(r, c) == im.at(r, c),
                    "pixel ({r},{c}) grown outside its object"
                );
            }
        }
    }
    // Arbitrary shapes with holes: containment holds once filling is off
    // (filling deliberately claims enclosed background).
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = InstancerConfig {
        fill_holes: false,
        ..InstancerConfig::default()
    };
    for _ in 0..20 {
        let im = common::random_instance_map(&mut rng, 40, 40);
        let classes = derive_three_class(&im).classes;
        let out = semantic_to_instances(&classes, &cfg);
        for r in 0..40 {
            for c in 0..40 {
                if out.at(r, c) != 0 {
                    assert_ne!(im.at(r, c), 0, "pixel ({r},{c}) grown outside the mask");
                }
            }
        }
    }
}

#[test]
fn geojson_file_round_trip_preserves_rasterization() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let im = common::random_instance_map(&mut rng, 32, 24);
    let gt = GeoTransform::new(700.0, -120.0, 0.24, -0.24);
    let fc = instances_to_features(&im, &gt);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("instances.geojson");
    write_feature_collection(&path, &fc).unwrap();
    let loaded = read_feature_collection(&path).unwrap();
    let back = features_to_instances(&loaded, &gt, 32, 24).unwrap();
    assert!(common::same_partition(&back.instances, &im));
}
