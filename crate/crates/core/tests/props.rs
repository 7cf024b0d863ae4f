//! Property tests for the spec-level invariants.

mod common;

use proptest::prelude::*;
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cityseg_core::geo::GeoTransform;
use cityseg_core::groundtruth::derive_three_class;
use cityseg_core::instancer::{
    label_components, restore_borders, strip_borders, ConflictRule, Connectivity, InstancerConfig,
};
use cityseg_core::metrics::{iou, pixel_confusion};
use cityseg_core::vectorize::{features_to_instances, instances_to_features};
use cityseg_core::{BinaryMask, Grid, CLASS_BORDER, CLASS_INTERIOR};

fn arb_geotransform() -> impl Strategy<Value = GeoTransform> {
    (
        -1e6..1e6f64,
        -1e6..1e6f64,
        prop_oneof![0.01..10.0f64, -10.0..-0.01f64],
        prop_oneof![0.01..10.0f64, -10.0..-0.01f64],
    )
        .prop_map(|(ox, oy, px, py)| GeoTransform::new(ox, oy, px, py))
}

proptest! {
    #[test]
    fn world_pixel_round_trip(gt in arb_geotransform(), r in 0usize..100_000, c in 0usize..100_000) {
        let (x, y) = gt.pixel_to_world(r, c);
        prop_assert_eq!(gt.world_to_pixel(x, y), (r as i64, c as i64));
    }

    #[test]
    fn iou_is_symmetric_and_bounded(seed in any::<u64>(), w in 2usize..24, h in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_mask(&mut rng, w, h, 0.4);
        let b = common::random_mask(&mut rng, w, h, 0.4);
        let ab = iou(&pixel_confusion(&a, &b).unwrap());
        let ba = iou(&pixel_confusion(&b, &a).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        let aa = iou(&pixel_confusion(&a, &a).unwrap());
        prop_assert_eq!(aa, 1.0);
        if a.count_ones() > 0 && ab == 1.0 {
            prop_assert_eq!(a.grid().as_slice(), b.grid().as_slice());
        }
    }

    #[test]
    fn labeling_matches_flood_fill_oracle(
        seed in any::<u64>(),
        w in 2usize..32,
        h in 2usize..32,
        density in 0.1f64..0.8,
        eight in any::<bool>(),
        fill in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = common::random_mask(&mut rng, w, h, density);
        let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
        let cfg = InstancerConfig { connectivity: conn, fill_holes: fill, ..InstancerConfig::default() };
        let im = label_components(&mask, &cfg);
        let expect = common::oracle_label(&mask, conn, fill, 1);
        prop_assert_eq!(im.grid(), &expect);
    }

    #[test]
    fn restoration_matches_neighbor_scan_oracle(
        seed in any::<u64>(),
        w in 2usize..32,
        h in 2usize..32,
        density in 0.05f64..0.5,
        max_id in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = common::random_mask(&mut rng, w, h, density);
        let rule = if max_id { ConflictRule::MaxId } else { ConflictRule::MinId };
        let cfg = InstancerConfig { conflict_rule: rule, ..InstancerConfig::default() };
        let im = label_components(&mask, &cfg);
        let out = restore_borders(&im, None, &cfg).unwrap();
        let expect = common::oracle_restore(&im, None, false, rule);
        prop_assert_eq!(out.grid(), &expect);
        prop_assert_eq!(out.n_instances(), im.n_instances());
    }

    #[test]
    fn vector_round_trip_preserves_the_partition(seed in any::<u64>(), w in 4usize..40, h in 4usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let im = common::random_instance_map(&mut rng, w, h);
        let gt = GeoTransform::new(12.0, 88.0, 0.24, -0.24);
        let fc = instances_to_features(&im, &gt);
        let back = features_to_instances(&fc, &gt, w, h).unwrap();
        prop_assert!(common::same_partition(&back.instances, &im));
        let total: u64 = fc.features.iter().map(|f| f.area_px.unwrap()).sum();
        let nonzero = im.grid().as_slice().iter().filter(|&&v| v != 0).count() as u64;
        prop_assert_eq!(total, nonzero);
    }

    #[test]
    fn three_class_partitions_every_rect_instance(seed in any::<u64>()) {
        let im = common::random_rect_scene(seed);
        let derived = derive_three_class(&im);
        prop_assert_eq!(derived.thin_objects, 0);
        let cm = &derived.classes;
        for r in 0..im.height() {
            for c in 0..im.width() {
                let id = im.at(r, c);
                let code = cm.at(r, c);
                // interior + border together cover exactly the instance pixels
                prop_assert_eq!(id != 0, code != 0);
                if code == CLASS_INTERIOR {
                    // interior never touches another id
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            prop_assert_eq!(im.grid().at_checked(r as i64 + dr, c as i64 + dc), Some(id));
                        }
                    }
                }
                if code == CLASS_BORDER {
                    // every border pixel touches an interior pixel of its id
                    let mut touches = false;
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                            if im.grid().at_checked(nr, nc) == Some(id)
                                && cm.grid().at_checked(nr, nc) == Some(CLASS_INTERIOR)
                            {
                                touches = true;
                            }
                        }
                    }
                    prop_assert!(touches, "border pixel ({}, {}) isolated", r, c);
                }
            }
        }
    }

    #[test]
    fn strip_borders_is_exactly_the_interior_class(seed in any::<u64>(), w in 2usize..32, h in 2usize..32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<u8> = (0..w * h).map(|_| rng.gen_range(0..=CLASS_BORDER)).collect();
        let cm = cityseg_core::ClassMap::new(Grid::from_vec(w, h, values)).unwrap();
        let mask = strip_borders(&cm);
        for (m, v) in mask.grid().as_slice().iter().zip(cm.grid().as_slice()) {
            prop_assert_eq!(*m == 1, *v == CLASS_INTERIOR);
        }
    }

    #[test]
    fn restored_ids_stay_compact(seed in any::<u64>(), w in 2usize..24, h in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = common::random_mask(&mut rng, w, h, 0.3);
        let cfg = InstancerConfig::default();
        let im = label_components(&mask, &cfg);
        let out = restore_borders(&im, None, &cfg).unwrap();
        // ids are exactly {1..N}
        let mut seen = vec![false; out.n_instances() as usize + 1];
        for &v in out.grid().as_slice() {
            prop_assert!(v <= out.n_instances());
            seen[v as usize] = true;
        }
        prop_assert!(seen.iter().skip(1).all(|&s| s));
    }
}

// Non-proptest deterministic property: masks of {0,1} reject nothing, maps
// with out-of-range codes are refused.
#[test]
fn binary_mask_rejects_values_above_one() {
    assert!(BinaryMask::new(Grid::from_vec(2, 1, vec![0u8, 2])).is_err());
}
