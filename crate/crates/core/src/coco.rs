//! COCO-format instance annotations for generated sample tiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, InstanceMap};
use crate::io;
use crate::sampler::SampleManifest;
use crate::vectorize::trace_instance_polygons;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// Exterior-ring polygons, interleaved x,y vertices on the pixel-edge
    /// lattice of the tile (x = col, y = row).
    pub segmentation: Vec<Vec<u32>>,
    /// [x_min, y_min, width, height] in tile pixels.
    pub bbox: [u32; 4],
    /// Exact pixel count of the instance in the tile.
    pub area: u64,
    pub iscrowd: u8,
    /// Nonstandard extension: present and true when the instance is cut off
    /// by the tile edge.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clipped: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

/// Build the COCO document for a sample manifest by re-reading each tile's
/// instance raster and tracing its polygons.
pub fn coco_export(manifest: &SampleManifest) -> Result<CocoDataset> {
    let mut images = Vec::with_capacity(manifest.tiles.len());
    let mut annotations = Vec::new();
    let mut next_annotation = 1u64;
    for tile in &manifest.tiles {
        let image_id = tile.index as u64 + 1;
        images.push(CocoImage {
            id: image_id,
            file_name: tile.image.clone(),
            width: manifest.tile_size as u32,
            height: manifest.tile_size as u32,
        });
        let path = manifest.out_dir.join(&tile.instances);
        let grid16 = io::read_gray16_png(&path)?;
        let ids = Grid::from_vec(
            grid16.width(),
            grid16.height(),
            grid16.as_slice().iter().map(|&v| v as u32).collect(),
        );
        let im = InstanceMap::new(ids)
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        if im.n_instances() != tile.n_instances {
            return Err(Error::validation(format!(
                "{}: manifest declares {} instances but tile holds {}",
                path.display(),
                tile.n_instances,
                im.n_instances()
            )));
        }
        let polygons = trace_instance_polygons(&im);
        let areas = im.areas();
        let bboxes = tight_bboxes(&im);
        for (i, polys) in polygons.iter().enumerate() {
            let local_id = i as u32 + 1;
            let segmentation = polys
                .iter()
                .map(|p| {
                    p.exterior
                        .iter()
                        .flat_map(|&(r, c)| [c as u32, r as u32])
                        .collect()
                })
                .collect();
            annotations.push(CocoAnnotation {
                id: next_annotation,
                image_id,
                category_id: 1,
                segmentation,
                bbox: bboxes[local_id as usize],
                area: areas[local_id as usize],
                iscrowd: 0,
                clipped: tile.clipped_ids.contains(&local_id).then_some(true),
            });
            next_annotation += 1;
        }
    }
    Ok(CocoDataset {
        images,
        annotations,
        categories: vec![CocoCategory {
            id: 1,
            name: "vehicle".to_string(),
        }],
    })
}

/// Tight pixel bounds per id as [x_min, y_min, width, height].
fn tight_bboxes(im: &InstanceMap) -> Vec<[u32; 4]> {
    let n = im.n_instances() as usize;
    let mut min_r = vec![u32::MAX; n + 1];
    let mut min_c = vec![u32::MAX; n + 1];
    let mut max_r = vec![0u32; n + 1];
    let mut max_c = vec![0u32; n + 1];
    for r in 0..im.height() {
        for c in 0..im.width() {
            let id = im.at(r, c) as usize;
            if id == 0 {
                continue;
            }
            min_r[id] = min_r[id].min(r as u32);
            min_c[id] = min_c[id].min(c as u32);
            max_r[id] = max_r[id].max(r as u32);
            max_c[id] = max_c[id].max(c as u32);
        }
    }
    (0..=n)
        .map(|id| {
            if id == 0 || min_r[id] == u32::MAX {
                [0, 0, 0, 0]
            } else {
                [
                    min_c[id],
                    min_r[id],
                    max_c[id] - min_c[id] + 1,
                    max_r[id] - min_r[id] + 1,
                ]
            }
        })
        .collect()
}
