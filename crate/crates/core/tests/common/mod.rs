//! Shared test oracles and generators. Everything here is deliberately
//! independent of the library's implementation paths: labeling is plain
//! flood fill, restoration is a per-pixel neighbor scan, rasterization is a
//! per-pixel point-in-polygon test.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cityseg_core::geojson::FeatureCollection;
use cityseg_core::instancer::{ConflictRule, Connectivity};
use cityseg_core::{BinaryMask, ClassMap, GeoTransform, Grid, InstanceMap};

// --- flood-fill labeling oracle ---

fn neighbors(conn: Connectivity, r: i64, c: i64) -> Vec<(i64, i64)> {
    let mut out = vec![(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)];
    if conn == Connectivity::Eight {
        out.extend([
            (r - 1, c - 1),
            (r - 1, c + 1),
            (r + 1, c - 1),
            (r + 1, c + 1),
        ]);
    }
    out
}

fn flood<F: Fn(usize, usize) -> bool>(
    visited: &mut Grid<u32>,
    seed: (usize, usize),
    mark: u32,
    conn: Connectivity,
    open: F,
) -> Vec<(usize, usize)> {
    let mut stack = vec![seed];
    let mut pixels = Vec::new();
    visited.set(seed.0, seed.1, mark);
    while let Some((r, c)) = stack.pop() {
        pixels.push((r, c));
        for (nr, nc) in neighbors(conn, r as i64, c as i64) {
            if visited.in_bounds(nr, nc) {
                let (nr, nc) = (nr as usize, nc as usize);
                if visited.at(nr, nc) == 0 && open(nr, nc) {
                    visited.set(nr, nc, mark);
                    stack.push((nr, nc));
                }
            }
        }
    }
    pixels
}

/// Brute-force reference for `label_components`: flood-fill labeling with
/// ids in row-major discovery order, border-flood hole filling under the
/// complementary connectivity, minimum-area filtering, id compaction.
pub fn oracle_label(
    mask: &BinaryMask,
    conn: Connectivity,
    fill_holes: bool,
    min_area: usize,
) -> Grid<u32> {
    let (w, h) = (mask.width(), mask.height());
    let mut labels: Grid<u32> = Grid::new(w, h, 0);
    let mut next = 0u32;
    for r in 0..h {
        for c in 0..w {
            if mask.at(r, c) == 1 && labels.at(r, c) == 0 {
                next += 1;
                flood(&mut labels, (r, c), next, conn, |nr, nc| {
                    mask.at(nr, nc) == 1
                });
            }
        }
    }

    if fill_holes {
        let bg_conn = match conn {
            Connectivity::Four => Connectivity::Eight,
            Connectivity::Eight => Connectivity::Four,
        };
        // mark background connected to the image border
        let mut outside: Grid<u32> = Grid::new(w, h, 0);
        for r in 0..h {
            for c in 0..w {
                let on_border = r == 0 || c == 0 || r == h - 1 || c == w - 1;
                if on_border && mask.at(r, c) == 0 && outside.at(r, c) == 0 {
                    flood(&mut outside, (r, c), 1, bg_conn, |nr, nc| {
                        mask.at(nr, nc) == 0
                    });
                }
            }
        }
        // Each remaining background region joins its smallest 8-adjacent
        // component id. Owners are decided against the unfilled label grid
        // so neighboring hole regions cannot influence each other.
        let mut hole_seen: Grid<u32> = Grid::new(w, h, 0);
        let mut fills: Vec<(Vec<(usize, usize)>, u32)> = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if mask.at(r, c) == 0 && outside.at(r, c) == 0 && hole_seen.at(r, c) == 0 {
                    let region = flood(&mut hole_seen, (r, c), 1, bg_conn, |nr, nc| {
                        mask.at(nr, nc) == 0 && outside.at(nr, nc) == 0
                    });
                    let mut owner = u32::MAX;
                    for &(hr, hc) in &region {
                        for (nr, nc) in neighbors(Connectivity::Eight, hr as i64, hc as i64) {
                            if let Some(v) = labels.at_checked(nr, nc) {
                                if v != 0 && v < owner {
                                    owner = v;
                                }
                            }
                        }
                    }
                    assert_ne!(owner, u32::MAX, "hole must touch a component");
                    fills.push((region, owner));
                }
            }
        }
        for (region, owner) in fills {
            for (hr, hc) in region {
                labels.set(hr, hc, owner);
            }
        }
    }

    if min_area > 1 {
        let mut areas = vec![0usize; next as usize + 1];
        for &v in labels.as_slice() {
            areas[v as usize] += 1;
        }
        for v in labels.as_mut_slice() {
            if *v != 0 && areas[*v as usize] < min_area {
                *v = 0;
            }
        }
    }

    // row-major first-appearance compaction
    let mut remap = vec![0u32; next as usize + 1];
    let mut count = 0u32;
    for v in labels.as_mut_slice() {
        if *v != 0 {
            if remap[*v as usize] == 0 {
                count += 1;
                remap[*v as usize] = count;
            }
            *v = remap[*v as usize];
        }
    }
    labels
}

// --- neighbor-scan restoration oracle ---

/// Brute-force reference for `restore_borders`: every background pixel looks
/// at its 8 neighbors and takes the winning id under the conflict rule.
pub fn oracle_restore(
    im: &InstanceMap,
    cm: Option<&ClassMap>,
    restrict: bool,
    rule: ConflictRule,
) -> Grid<u32> {
    let (w, h) = (im.width(), im.height());
    let mut out: Grid<u32> = Grid::new(w, h, 0);
    for r in 0..h {
        for c in 0..w {
            let v = im.at(r, c);
            if v != 0 {
                out.set(r, c, v);
                continue;
            }
            if restrict {
                if let Some(cm) = cm {
                    if cm.at(r, c) == 0 {
                        continue;
                    }
                }
            }
            let mut ids: Vec<u32> = neighbors(Connectivity::Eight, r as i64, c as i64)
                .into_iter()
                .filter_map(|(nr, nc)| im.grid().at_checked(nr, nc))
                .filter(|&v| v != 0)
                .collect();
            ids.sort_unstable();
            ids.dedup();
            let pick = match rule {
                ConflictRule::MinId => ids.first().copied(),
                ConflictRule::MaxId => ids.last().copied(),
            };
            if let Some(id) = pick {
                out.set(r, c, id);
            }
        }
    }
    out
}

// --- point-in-polygon rasterization oracle ---

fn point_in_rings(rings: &[Vec<(f64, f64)>], px: f64, py: f64) -> bool {
    let mut crossings = 0u32;
    for ring in rings {
        let n = ring.len();
        if n < 2 {
            continue;
        }
        for i in 0..n {
            let (x1, y1) = ring[i];
            let (x2, y2) = ring[(i + 1) % n];
            if (y1 <= py && py < y2) || (y2 <= py && py < y1) {
                let xi = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
                if xi > px {
                    crossings += 1;
                }
            }
        }
    }
    crossings % 2 == 1
}

/// Brute-force reference for `rasterize_features`: an even-odd
/// point-in-polygon test at every pixel center, features painted in
/// ascending id order, ids compacted row-major.
pub fn brute_rasterize(
    fc: &FeatureCollection,
    gt: &GeoTransform,
    width: usize,
    height: usize,
) -> Grid<u32> {
    let mut order: Vec<&cityseg_core::geojson::Feature> = fc.features.iter().collect();
    order.sort_by_key(|f| f.id);
    let mut paint: Grid<u32> = Grid::new(width, height, 0);
    for (i, feature) in order.iter().enumerate() {
        if feature.is_degenerate() {
            continue;
        }
        let rings: Vec<Vec<(f64, f64)>> = feature.rings().cloned().collect();
        for r in 0..height {
            for c in 0..width {
                let (px, py) = gt.pixel_to_world(r, c);
                if point_in_rings(&rings, px, py) {
                    paint.set(r, c, i as u32 + 1);
                }
            }
        }
    }
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let mut count = 0u32;
    for v in paint.as_mut_slice() {
        if *v != 0 {
            let id = *remap.entry(*v).or_insert_with(|| {
                count += 1;
                count
            });
            *v = id;
        }
    }
    paint
}

// --- comparison helpers ---

/// Pixel sets of both maps form the same partition (ids may permute).
pub fn same_partition(a: &InstanceMap, b: &InstanceMap) -> bool {
    same_partition_grids(a.grid(), b.grid())
}

pub fn same_partition_grids(a: &Grid<u32>, b: &Grid<u32>) -> bool {
    if a.width() != b.width() || a.height() != b.height() {
        return false;
    }
    let mut fwd: HashMap<u32, u32> = HashMap::new();
    let mut bwd: HashMap<u32, u32> = HashMap::new();
    for (&va, &vb) in a.as_slice().iter().zip(b.as_slice()) {
        if (va == 0) != (vb == 0) {
            return false;
        }
        if va != 0 && (*fwd.entry(va).or_insert(vb) != vb || *bwd.entry(vb).or_insert(va) != va) {
            return false;
        }
    }
    true
}

pub fn rotate_grid_cw<T: Copy + Clone>(g: &Grid<T>) -> Grid<T> {
    let (w, h) = (g.width(), g.height());
    let mut out = Grid::new(h, w, g.at(0, 0));
    for r in 0..w {
        for c in 0..h {
            out.set(r, c, g.at(h - 1 - c, r));
        }
    }
    out
}

pub fn rotate_grid<T: Copy + Clone>(g: &Grid<T>, quarter_turns: usize) -> Grid<T> {
    let mut out = g.clone();
    for _ in 0..quarter_turns % 4 {
        out = rotate_grid_cw(&out);
    }
    out
}

// --- random generators ---

pub fn random_mask(rng: &mut ChaCha8Rng, width: usize, height: usize, density: f64) -> BinaryMask {
    let values = (0..width * height)
        .map(|_| u8::from(rng.gen_bool(density)))
        .collect();
    BinaryMask::new(Grid::from_vec(width, height, values)).unwrap()
}

pub fn paint_rect(g: &mut Grid<u32>, r0: usize, c0: usize, h: usize, w: usize, id: u32) {
    for r in r0..r0 + h {
        for c in c0..c0 + w {
            g.set(r, c, id);
        }
    }
}

pub fn rects_to_map(
    width: usize,
    height: usize,
    rects: &[(usize, usize, usize, usize)],
) -> InstanceMap {
    let mut g = Grid::new(width, height, 0u32);
    for (i, &(r0, c0, h, w)) in rects.iter().enumerate() {
        paint_rect(&mut g, r0, c0, h, w, i as u32 + 1);
    }
    InstanceMap::new(g).unwrap()
}

/// Seeded scene of axis-aligned rectangles with all dims >= 3, placed on a
/// cell grid so shapes never overlap. Roughly a third of the occupied cells
/// hold an edge-sharing pair instead of a single rectangle.
pub fn random_rect_scene(seed: u64) -> InstanceMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = 24usize;
    let (cols, rows) = (8usize, 8usize);
    let (width, height) = (cols * cell, rows * cell);
    let mut g = Grid::new(width, height, 0u32);
    let mut next = 0u32;
    for gr in 0..rows {
        for gc in 0..cols {
            let kind = rng.gen_range(0..10u32);
            if kind == 0 {
                continue; // empty cell
            }
            let base_r = gr * cell + 1;
            let base_c = gc * cell + 1;
            if kind <= 6 {
                let h = rng.gen_range(3..=12usize);
                let w = rng.gen_range(3..=12usize);
                let r0 = base_r + rng.gen_range(0..=(cell - 2 - h));
                let c0 = base_c + rng.gen_range(0..=(cell - 2 - w));
                next += 1;
                paint_rect(&mut g, r0, c0, h, w, next);
            } else {
                // edge-sharing pair, split horizontally or vertically
                let h = rng.gen_range(3..=9usize);
                let w = rng.gen_range(3..=9usize);
                let r0 = base_r + rng.gen_range(0..=(cell - 2 - 2 * h.min(9)));
                let c0 = base_c + rng.gen_range(0..=(cell - 2 - 2 * w.min(9)));
                if rng.gen_bool(0.5) {
                    next += 1;
                    paint_rect(&mut g, r0, c0, h, w, next);
                    next += 1;
                    paint_rect(&mut g, r0 + h, c0, h, w, next);
                } else {
                    next += 1;
                    paint_rect(&mut g, r0, c0, h, w, next);
                    next += 1;
                    paint_rect(&mut g, r0, c0 + w, h, w, next);
                }
            }
        }
    }
    let (im, _) = InstanceMap::compact_from(g);
    im
}

/// Random instance map with awkward geometry: overlapping paint order,
/// carved holes, single pixels, disconnected leftovers.
pub fn random_instance_map(rng: &mut ChaCha8Rng, width: usize, height: usize) -> InstanceMap {
    let mut g = Grid::new(width, height, 0u32);
    let shapes = rng.gen_range(3..=8usize);
    for i in 0..shapes {
        let id = i as u32 + 1;
        match rng.gen_range(0..4u32) {
            0 => {
                // solid rectangle (may overwrite earlier ids)
                let h = rng.gen_range(1..=height / 2);
                let w = rng.gen_range(1..=width / 2);
                let r0 = rng.gen_range(0..=height - h);
                let c0 = rng.gen_range(0..=width - w);
                paint_rect(&mut g, r0, c0, h, w, id);
            }
            1 => {
                // rectangle with a carved hole
                let h = rng.gen_range(4..=(height / 2).max(4));
                let w = rng.gen_range(4..=(width / 2).max(4));
                let r0 = rng.gen_range(0..=height.saturating_sub(h));
                let c0 = rng.gen_range(0..=width.saturating_sub(w));
                paint_rect(&mut g, r0, c0, h, w, id);
                let hh = rng.gen_range(1..=h - 2);
                let hw = rng.gen_range(1..=w - 2);
                let hr = r0 + rng.gen_range(1..=h - 1 - hh);
                let hc = c0 + rng.gen_range(1..=w - 1 - hw);
                paint_rect(&mut g, hr, hc, hh, hw, 0);
            }
            2 => {
                // scattered single pixels
                for _ in 0..rng.gen_range(1..=4usize) {
                    let r = rng.gen_range(0..height);
                    let c = rng.gen_range(0..width);
                    g.set(r, c, id);
                }
            }
            _ => {
                // random 4-connected walk blob
                let mut r = rng.gen_range(0..height) as i64;
                let mut c = rng.gen_range(0..width) as i64;
                for _ in 0..rng.gen_range(4..=40usize) {
                    g.set(r as usize, c as usize, id);
                    let (dr, dc) = [(0, 1), (0, -1), (1, 0), (-1, 0)][rng.gen_range(0..4usize)];
                    r = (r + dr).clamp(0, height as i64 - 1);
                    c = (c + dc).clamp(0, width as i64 - 1);
                }
            }
        }
    }
    let (im, _) = InstanceMap::compact_from(g);
    im
}

/// Read this process's peak resident set size in bytes (Linux).
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}
