//! Instance rasters to georeferenced polygons and back.
//!
//! Rings are traced along pixel edges, so every vertex lies on the
//! pixel-corner lattice and rasterizing the traced polygons with the
//! pixel-center rule reproduces the input raster exactly.

use std::collections::HashMap;

use crate::error::Result;
use crate::geo::GeoTransform;
use crate::geojson::{Feature, FeatureCollection, Ring};
use crate::grid::InstanceMap;
use crate::groundtruth::{rasterize_features, Rasterized};

const DIR_RIGHT: u8 = 0; // +col
const DIR_DOWN: u8 = 1; // +row
const DIR_LEFT: u8 = 2; // -col
const DIR_UP: u8 = 3; // -row

#[derive(Debug, Clone, Copy)]
struct Edge {
    r: u32,
    c: u32,
    dir: u8,
}

impl Edge {
    fn end(&self) -> (u32, u32) {
        match self.dir {
            DIR_RIGHT => (self.r, self.c + 1),
            DIR_DOWN => (self.r + 1, self.c),
            DIR_LEFT => (self.r, self.c - 1),
            _ => (self.r - 1, self.c),
        }
    }
}

/// One traced polygon of an instance: an exterior ring and its holes, as
/// open corner-lattice vertex lists in (row, col) pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedPolygon {
    pub exterior: Vec<(usize, usize)>,
    pub holes: Vec<Vec<(usize, usize)>>,
}

/// Trace the boundary of every instance. Returns, per id 1..N in order, the
/// polygons covering that instance's pixel set.
pub fn trace_instance_polygons(im: &InstanceMap) -> Vec<Vec<TracedPolygon>> {
    let n = im.n_instances() as usize;
    let mut per_id: Vec<Vec<Edge>> = vec![Vec::new(); n + 1];
    let g = im.grid();
    let (w, h) = (im.width(), im.height());
    for r in 0..h {
        for c in 0..w {
            let id = g.at(r, c);
            if id == 0 {
                continue;
            }
            let edges = &mut per_id[id as usize];
            let (ru, cu) = (r as u32, c as u32);
            if r == 0 || g.at(r - 1, c) != id {
                edges.push(Edge {
                    r: ru,
                    c: cu,
                    dir: DIR_RIGHT,
                });
            }
            if c + 1 == w || g.at(r, c + 1) != id {
                edges.push(Edge {
                    r: ru,
                    c: cu + 1,
                    dir: DIR_DOWN,
                });
            }
            if r + 1 == h || g.at(r + 1, c) != id {
                edges.push(Edge {
                    r: ru + 1,
                    c: cu + 1,
                    dir: DIR_LEFT,
                });
            }
            if c == 0 || g.at(r, c - 1) != id {
                edges.push(Edge {
                    r: ru + 1,
                    c: cu,
                    dir: DIR_UP,
                });
            }
        }
    }
    (1..=n)
        .map(|id| group_rings(chain_rings(&per_id[id])))
        .collect()
}

/// Follow boundary edges into closed rings. At a corner shared by two
/// diagonal pixels the walk prefers the turn that hugs the current pixel
/// block (right turn, then straight, then left turn).
fn chain_rings(edges: &[Edge]) -> Vec<Vec<(usize, usize)>> {
    let mut by_corner: HashMap<(u32, u32), [Option<usize>; 4]> = HashMap::new();
    for (i, e) in edges.iter().enumerate() {
        by_corner.entry((e.r, e.c)).or_default()[e.dir as usize] = Some(i);
    }
    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut corners: Vec<(u32, u32)> = Vec::new();
        let mut dirs: Vec<u8> = Vec::new();
        let mut idx = start;
        loop {
            used[idx] = true;
            let e = edges[idx];
            corners.push((e.r, e.c));
            dirs.push(e.dir);
            let end = e.end();
            let slots = by_corner.get(&end).copied().unwrap_or_default();
            let prefs = [(e.dir + 1) % 4, e.dir, (e.dir + 3) % 4];
            let next = prefs
                .iter()
                .find_map(|&d| slots[d as usize].filter(|&i| !used[i]));
            match next {
                Some(i) => idx = i,
                None => {
                    debug_assert_eq!(end, (edges[start].r, edges[start].c));
                    break;
                }
            }
        }
        // Drop collinear intermediate corners.
        let n = corners.len();
        let ring: Vec<(usize, usize)> = (0..n)
            .filter(|&i| dirs[i] != dirs[(i + n - 1) % n])
            .map(|i| (corners[i].0 as usize, corners[i].1 as usize))
            .collect();
        rings.push(ring);
    }
    rings
}

/// Signed area in pixel coordinates (x = col, y = row); positive rings
/// enclose instance pixels, negative rings are hole boundaries.
fn pixel_shoelace(ring: &[(usize, usize)]) -> i64 {
    let n = ring.len();
    let mut sum = 0i64;
    for i in 0..n {
        let (r1, c1) = ring[i];
        let (r2, c2) = ring[(i + 1) % n];
        sum += c1 as i64 * r2 as i64 - c2 as i64 * r1 as i64;
    }
    sum
}

/// Even-odd test of the pixel center (row + 0.5, col + 0.5) against a
/// corner-lattice ring; exact in integers because all edges are axis-aligned.
fn ring_contains_pixel(ring: &[(usize, usize)], row: usize, col: usize) -> bool {
    let n = ring.len();
    let mut crossings = 0;
    for i in 0..n {
        let (r1, c1) = ring[i];
        let (r2, c2) = ring[(i + 1) % n];
        if c1 == c2 {
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            if lo <= row && row < hi && c1 > col {
                crossings += 1;
            }
        }
    }
    crossings % 2 == 1
}

fn group_rings(rings: Vec<Vec<(usize, usize)>>) -> Vec<TracedPolygon> {
    let mut polygons: Vec<TracedPolygon> = Vec::new();
    let mut holes: Vec<Vec<(usize, usize)>> = Vec::new();
    for ring in rings {
        if pixel_shoelace(&ring) > 0 {
            polygons.push(TracedPolygon {
                exterior: ring,
                holes: Vec::new(),
            });
        } else {
            holes.push(ring);
        }
    }
    for hole in holes {
        // The lexicographically smallest corner of a hole ring has the hole
        // region at its lower right; that pixel decides the owning exterior.
        let &(r, c) = hole.iter().min().expect("rings are non-empty");
        let owner = if polygons.len() == 1 {
            0
        } else {
            polygons
                .iter()
                .position(|p| ring_contains_pixel(&p.exterior, r, c))
                .expect("hole ring lies inside one exterior ring of its instance")
        };
        polygons[owner].holes.push(hole);
    }
    polygons
}

fn ring_to_world(ring: &[(usize, usize)], gt: &GeoTransform) -> Ring {
    ring.iter()
        .map(|&(r, c)| gt.corner_to_world(r, c))
        .collect()
}

fn world_shoelace(ring: &Ring) -> f64 {
    let n = ring.len();
    let mut sum = 0.0;
    for i in 0..n {
        let (x1, y1) = ring[i];
        let (x2, y2) = ring[(i + 1) % n];
        sum += x1 * y2 - x2 * y1;
    }
    0.5 * sum
}

fn oriented(mut ring: Ring, counterclockwise: bool) -> Ring {
    if (world_shoelace(&ring) > 0.0) != counterclockwise {
        ring.reverse();
    }
    ring
}

/// Convert an instance map into one polygon feature per instance id.
///
/// Exterior rings are counterclockwise and holes clockwise in world
/// coordinates; properties carry the id, the pixel count and the metric area.
pub fn instances_to_features(im: &InstanceMap, gt: &GeoTransform) -> FeatureCollection {
    let areas = im.areas();
    let features = trace_instance_polygons(im)
        .into_iter()
        .enumerate()
        .map(|(i, polys)| {
            let id = i as u32 + 1;
            let polygons = polys
                .iter()
                .map(|p| {
                    let mut rings = Vec::with_capacity(1 + p.holes.len());
                    rings.push(oriented(ring_to_world(&p.exterior, gt), true));
                    for hole in &p.holes {
                        rings.push(oriented(ring_to_world(hole, gt), false));
                    }
                    rings
                })
                .collect();
            let area_px = areas[id as usize];
            let mut f = Feature::polygon(u64::from(id), Vec::new());
            f.polygons = polygons;
            f.area_px = Some(area_px);
            f.area_m2 = Some(area_px as f64 * gt.pixel_area());
            f
        })
        .collect();
    FeatureCollection::new(features)
}

/// Rasterize a feature collection; the single rasterization rule for the
/// whole crate lives in [`rasterize_features`].
pub fn features_to_instances(
    fc: &FeatureCollection,
    gt: &GeoTransform,
    width: usize,
    height: usize,
) -> Result<Rasterized> {
    rasterize_features(fc, gt, width, height)
}
