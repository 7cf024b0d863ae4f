//! Box-free instance extraction from 3-class semantic maps: strip the border
//! class, label the isolated interiors, then grow every component back by one
//! pixel without merging neighbors.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ClassMap, Grid, InstanceMap, CLASS_INTERIOR};

/// Connectivity used for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Resolution rule when a grown pixel touches several instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConflictRule {
    #[default]
    MinId,
    MaxId,
}

#[derive(Debug, Clone, Copy)]
pub struct InstancerConfig {
    pub connectivity: Connectivity,
    pub fill_holes: bool,
    /// When set, border restoration only claims pixels the semantic map
    /// classifies as interior or border.
    pub restrict_growth_to_semantic: bool,
    pub conflict_rule: ConflictRule,
    pub min_component_area: usize,
}

impl Default for InstancerConfig {
    fn default() -> Self {
        InstancerConfig {
            connectivity: Connectivity::Eight,
            fill_holes: true,
            restrict_growth_to_semantic: false,
            conflict_rule: ConflictRule::MinId,
            min_component_area: 1,
        }
    }
}

/// Keep only the interior class: border and background both map to 0, which
/// leaves previously touching objects at least 2 pixels apart.
pub fn strip_borders(cm: &ClassMap) -> BinaryMask {
    let values = cm
        .grid()
        .as_slice()
        .iter()
        .map(|&v| u8::from(v == CLASS_INTERIOR))
        .collect();
    BinaryMask::new(Grid::from_vec(cm.width(), cm.height(), values))
        .expect("constructed values are 0/1")
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // anchor to the smaller root so resolution is order-independent
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

#[derive(Clone, Copy)]
struct Run {
    row: u32,
    start: u32,
    /// exclusive
    end: u32,
    label: u32,
}

/// Find horizontal runs of pixels matching `pred` and union-find them into
/// components under the given connectivity. Returns the runs with resolved
/// root labels and the number of runs (labels are root run indices).
fn label_runs<F: Fn(usize, usize) -> bool>(
    width: usize,
    height: usize,
    connectivity: Connectivity,
    pred: F,
) -> (Vec<Run>, UnionFind) {
    let mut uf = UnionFind::new();
    let mut runs: Vec<Run> = Vec::new();
    let mut prev_row_start = 0usize;
    let mut prev_row_end = 0usize;
    let reach = match connectivity {
        Connectivity::Four => 0u32,
        Connectivity::Eight => 1u32,
    };
    for r in 0..height {
        let row_start = runs.len();
        let mut c = 0usize;
        while c < width {
            if pred(r, c) {
                let start = c;
                while c < width && pred(r, c) {
                    c += 1;
                }
                let label = uf.make();
                runs.push(Run {
                    row: r as u32,
                    start: start as u32,
                    end: c as u32,
                    label,
                });
            } else {
                c += 1;
            }
        }
        // union with overlapping runs of the previous row (two-pointer merge;
        // both rows are sorted by start)
        let mut j = prev_row_start;
        for i in row_start..runs.len() {
            let cur = runs[i];
            while j < prev_row_end && runs[j].end + reach <= cur.start {
                j += 1;
            }
            let mut k = j;
            while k < prev_row_end && runs[k].start < cur.end + reach {
                uf.union(cur.label, runs[k].label);
                k += 1;
            }
        }
        prev_row_start = row_start;
        prev_row_end = runs.len();
    }
    (runs, uf)
}

/// Label connected components of the mask with ids 1..N assigned in
/// row-major order of each component's first pixel. With `fill_holes`,
/// background regions not connected to the image border are absorbed into
/// the enclosing component; components smaller than `min_component_area`
/// (measured after filling) are dropped and ids recompacted.
pub fn label_components(mask: &BinaryMask, cfg: &InstancerConfig) -> InstanceMap {
    let (width, height) = (mask.width(), mask.height());
    let g = mask.grid();
    let (runs, mut uf) = label_runs(width, height, cfg.connectivity, |r, c| g.at(r, c) == 1);

    // Runs are created row-major, so the first run of each root fixes the
    // component id.
    let mut root_id: Vec<u32> = vec![0; runs.len()];
    let mut n: u32 = 0;
    let mut labels: Grid<u32> = Grid::new(width, height, 0);
    let mut resolved: Vec<u32> = Vec::with_capacity(runs.len());
    for run in &runs {
        let root = uf.find(run.label);
        resolved.push(root);
        if root_id[root as usize] == 0 {
            n += 1;
            root_id[root as usize] = n;
        }
    }
    for (run, &root) in runs.iter().zip(&resolved) {
        let id = root_id[root as usize];
        let row = run.row as usize;
        let slice = &mut labels.as_mut_slice()
            [row * width + run.start as usize..row * width + run.end as usize];
        slice.fill(id);
    }

    if cfg.fill_holes && n > 0 {
        fill_holes(&mut labels, cfg.connectivity);
    }

    if cfg.min_component_area > 1 && n > 0 {
        let mut areas = vec![0usize; n as usize + 1];
        for &v in labels.as_slice() {
            areas[v as usize] += 1;
        }
        if areas[1..].iter().any(|&a| a < cfg.min_component_area) {
            for v in labels.as_mut_slice() {
                if *v != 0 && areas[*v as usize] < cfg.min_component_area {
                    *v = 0;
                }
            }
            let (im, _) = InstanceMap::compact_from(labels);
            return im;
        }
    }

    InstanceMap::from_parts(labels, n)
}

/// Absorb enclosed background into the enclosing component. Background
/// connectivity is the complement of the foreground connectivity (holes of
/// 8-connected components are 4-connected regions and vice versa); a hole
/// region adjacent to more than one component joins the smallest id.
fn fill_holes(labels: &mut Grid<u32>, connectivity: Connectivity) {
    let (width, height) = (labels.width(), labels.height());
    let bg_conn = match connectivity {
        Connectivity::Four => Connectivity::Eight,
        Connectivity::Eight => Connectivity::Four,
    };
    let (runs, mut uf) = label_runs(width, height, bg_conn, |r, c| labels.at(r, c) == 0);

    // roots touching the image border are outside, not holes
    let mut outside: Vec<bool> = vec![false; runs.len()];
    let mut resolved: Vec<u32> = Vec::with_capacity(runs.len());
    for run in &runs {
        resolved.push(uf.find(run.label));
    }
    for (run, &root) in runs.iter().zip(&resolved) {
        if run.row == 0
            || run.row as usize == height - 1
            || run.start == 0
            || run.end as usize == width
        {
            outside[root as usize] = true;
        }
    }

    // smallest 8-adjacent component id per hole root
    let mut absorb: Vec<u32> = vec![u32::MAX; runs.len()];
    for (run, &root) in runs.iter().zip(&resolved) {
        if outside[root as usize] {
            continue;
        }
        let row = run.row as usize;
        let (start, end) = (run.start as usize, run.end as usize);
        let c_lo = start.saturating_sub(1);
        let c_hi = (end + 1).min(width);
        let slot = &mut absorb[root as usize];
        let mut scan = |r: usize, lo: usize, hi: usize| {
            for c in lo..hi {
                let v = labels.at(r, c);
                if v != 0 && v < *slot {
                    *slot = v;
                }
            }
        };
        if row > 0 {
            scan(row - 1, c_lo, c_hi);
        }
        if row + 1 < height {
            scan(row + 1, c_lo, c_hi);
        }
        scan(row, c_lo, start);
        scan(row, end, c_hi);
    }

    for (run, &root) in runs.iter().zip(&resolved) {
        if outside[root as usize] {
            continue;
        }
        let id = absorb[root as usize];
        debug_assert_ne!(id, u32::MAX, "hole region must touch a component");
        if id == u32::MAX {
            continue;
        }
        let row = run.row as usize;
        let slice = &mut labels.as_mut_slice()
            [row * width + run.start as usize..row * width + run.end as usize];
        slice.fill(id);
    }
}

/// Grow every instance by exactly one 8-neighbor dilation step into
/// background pixels. Nonzero pixels never change and no instances merge;
/// pixels reachable from several instances go to the conflict-rule winner.
/// With `restrict_growth_to_semantic` and a semantic map, only pixels
/// classified interior or border may be claimed.
pub fn restore_borders(
    im: &InstanceMap,
    cm: Option<&ClassMap>,
    cfg: &InstancerConfig,
) -> Result<InstanceMap> {
    let (width, height) = (im.width(), im.height());
    if let Some(cm) = cm {
        if cm.width() != width || cm.height() != height {
            return Err(Error::validation(format!(
                "semantic map is {}x{} but instance map is {}x{}",
                cm.width(),
                cm.height(),
                width,
                height
            )));
        }
    }
    let restrict = cfg.restrict_growth_to_semantic;
    let src = im.grid();
    let mut out: Grid<u32> = Grid::new(width, height, 0);

    out.as_mut_slice()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(r, out_row)| {
            let cur = src.row(r);
            let above = if r > 0 { Some(src.row(r - 1)) } else { None };
            let below = if r + 1 < height {
                Some(src.row(r + 1))
            } else {
                None
            };
            for c in 0..width {
                let v = cur[c];
                if v != 0 {
                    out_row[c] = v;
                    continue;
                }
                if restrict {
                    if let Some(cm) = cm {
                        if cm.at(r, c) == 0 {
                            continue;
                        }
                    }
                }
                let c_lo = c.saturating_sub(1);
                let c_hi = (c + 2).min(width);
                let mut pick = 0u32;
                let mut consider = |row: &[u32]| {
                    for &n in &row[c_lo..c_hi] {
                        if n == 0 {
                            continue;
                        }
                        let better = match cfg.conflict_rule {
                            ConflictRule::MinId => pick == 0 || n < pick,
                            ConflictRule::MaxId => n > pick,
                        };
                        if better {
                            pick = n;
                        }
                    }
                };
                if let Some(above) = above {
                    consider(above);
                }
                consider(cur);
                if let Some(below) = below {
                    consider(below);
                }
                out_row[c] = pick;
            }
        });

    Ok(InstanceMap::from_parts(out, im.n_instances()))
}

/// Full pipeline: strip borders, label components, restore the 1-pixel
/// border.
pub fn semantic_to_instances(cm: &ClassMap, cfg: &InstancerConfig) -> InstanceMap {
    let mask = strip_borders(cm);
    let labeled = label_components(&mask, cfg);
    restore_borders(&labeled, Some(cm), cfg).expect("dimensions match by construction")
}
