//! Vector feature model and GeoJSON (RFC 7946) interchange.
//!
//! Features carry polygon rings in world coordinates. Written coordinates are
//! rounded to 9 decimal places; serde's shortest float encoding then trims
//! trailing zeros.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A polygon ring: (x, y) world-coordinate vertices. A ring may be stored
/// explicitly closed (first == last) or open; both are treated as closed.
pub type Ring = Vec<(f64, f64)>;

/// One vector object: an id, a class label, and one or more polygons, each a
/// list of rings whose first entry is the exterior and the rest are holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub id: u64,
    pub class_label: String,
    pub polygons: Vec<Vec<Ring>>,
    pub area_px: Option<u64>,
    pub area_m2: Option<f64>,
}

impl Feature {
    pub fn polygon(id: u64, rings: Vec<Ring>) -> Self {
        Feature {
            id,
            class_label: "vehicle".to_string(),
            polygons: vec![rings],
            area_px: None,
            area_m2: None,
        }
    }

    /// All rings across all polygons; even-odd rasterization treats them
    /// uniformly.
    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        self.polygons.iter().flatten()
    }

    /// True when no polygon has an exterior ring with at least 3 distinct
    /// vertices.
    pub fn is_degenerate(&self) -> bool {
        !self
            .polygons
            .iter()
            .any(|rings| rings.first().is_some_and(|r| distinct_vertices(r) >= 3))
    }
}

pub fn distinct_vertices(ring: &Ring) -> usize {
    let mut seen: Vec<(u64, u64)> = ring
        .iter()
        .map(|&(x, y)| (x.to_bits(), y.to_bits()))
        .collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureCollection {
    pub features: Vec<Feature>,
}

impl FeatureCollection {
    pub fn new(features: Vec<Feature>) -> Self {
        FeatureCollection { features }
    }

    pub fn validate_unique_ids(&self) -> Result<()> {
        let mut ids: Vec<u64> = self.features.iter().map(|f| f.id).collect();
        ids.sort_unstable();
        if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!(
                "duplicate feature id {} in collection",
                dup[0]
            )));
        }
        Ok(())
    }
}

/// Sample-point inputs: world coordinates plus an optional label each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    pub points: Vec<(f64, f64)>,
    pub labels: Vec<Option<String>>,
}

impl PointSet {
    pub fn from_points(points: Vec<(f64, f64)>) -> Self {
        let labels = vec![None; points.len()];
        PointSet { points, labels }
    }
}

pub(crate) fn round9(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

// --- GeoJSON wire types ---

#[derive(Serialize, Deserialize)]
struct GjCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<GjFeature>,
}

#[derive(Serialize, Deserialize)]
struct GjFeature {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    properties: Option<serde_json::Value>,
    geometry: GjGeometry,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type")]
enum GjGeometry {
    Polygon {
        coordinates: Vec<Vec<[f64; 2]>>,
    },
    MultiPolygon {
        coordinates: Vec<Vec<Vec<[f64; 2]>>>,
    },
    Point {
        coordinates: [f64; 2],
    },
    MultiPoint {
        coordinates: Vec<[f64; 2]>,
    },
}

#[derive(Serialize)]
struct GjPropsOut {
    id: u64,
    class: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    area_px: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    area_m2: Option<f64>,
}

fn ring_out(ring: &Ring) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = ring.iter().map(|&(x, y)| [round9(x), round9(y)]).collect();
    // GeoJSON rings are explicitly closed.
    if out.first() != out.last() {
        if let Some(&first) = out.first() {
            out.push(first);
        }
    }
    out
}

fn ring_in(coords: Vec<[f64; 2]>) -> Ring {
    coords.into_iter().map(|[x, y]| (x, y)).collect()
}

pub fn write_feature_collection(path: &Path, fc: &FeatureCollection) -> Result<()> {
    fc.validate_unique_ids()?;
    let features = fc
        .features
        .iter()
        .map(|f| {
            let geometry = if f.polygons.len() == 1 {
                GjGeometry::Polygon {
                    coordinates: f.polygons[0].iter().map(ring_out).collect(),
                }
            } else {
                GjGeometry::MultiPolygon {
                    coordinates: f
                        .polygons
                        .iter()
                        .map(|rings| rings.iter().map(ring_out).collect())
                        .collect(),
                }
            };
            let props = GjPropsOut {
                id: f.id,
                class: f.class_label.clone(),
                area_px: f.area_px,
                area_m2: f.area_m2.map(round9),
            };
            GjFeature {
                kind: "Feature".to_string(),
                properties: Some(serde_json::to_value(props).expect("serializable")),
                geometry,
            }
        })
        .collect();
    let doc = GjCollection {
        kind: "FeatureCollection".to_string(),
        features,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_collection(path: &Path) -> Result<GjCollection> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: GjCollection = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if doc.kind != "FeatureCollection" {
        return Err(Error::validation(format!(
            "{}: expected a FeatureCollection, found {:?}",
            path.display(),
            doc.kind
        )));
    }
    Ok(doc)
}

pub fn read_feature_collection(path: &Path) -> Result<FeatureCollection> {
    let doc = parse_collection(path)?;
    let mut features = Vec::with_capacity(doc.features.len());
    for (i, gj) in doc.features.into_iter().enumerate() {
        let props = gj.properties.unwrap_or(serde_json::Value::Null);
        let id = props.get("id").and_then(|v| v.as_u64()).ok_or_else(|| {
            Error::validation(format!(
                "{}: feature {i} has no integer `id` property",
                path.display()
            ))
        })?;
        let class_label = props
            .get("class")
            .and_then(|v| v.as_str())
            .unwrap_or("vehicle")
            .to_string();
        let area_px = props.get("area_px").and_then(|v| v.as_u64());
        let area_m2 = props.get("area_m2").and_then(|v| v.as_f64());
        let polygons = match gj.geometry {
            GjGeometry::Polygon { coordinates } => {
                vec![coordinates.into_iter().map(ring_in).collect()]
            }
            GjGeometry::MultiPolygon { coordinates } => coordinates
                .into_iter()
                .map(|rings| rings.into_iter().map(ring_in).collect())
                .collect(),
            _ => {
                return Err(Error::validation(format!(
                    "{}: feature {i} (id {id}) must have Polygon or MultiPolygon geometry",
                    path.display()
                )))
            }
        };
        features.push(Feature {
            id,
            class_label,
            polygons,
            area_px,
            area_m2,
        });
    }
    let fc = FeatureCollection { features };
    fc.validate_unique_ids()?;
    Ok(fc)
}

pub fn read_point_set(path: &Path) -> Result<PointSet> {
    let doc = parse_collection(path)?;
    let mut set = PointSet::default();
    for (i, gj) in doc.features.into_iter().enumerate() {
        let label = gj
            .properties
            .as_ref()
            .and_then(|p| p.get("label"))
            .and_then(|v| v.as_str())
            .map(str::to_string);
        match gj.geometry {
            GjGeometry::Point {
                coordinates: [x, y],
            } => {
                set.points.push((x, y));
                set.labels.push(label);
            }
            GjGeometry::MultiPoint { coordinates } => {
                for [x, y] in coordinates {
                    set.points.push((x, y));
                    set.labels.push(label.clone());
                }
            }
            _ => {
                return Err(Error::validation(format!(
                    "{}: feature {i} must have Point or MultiPoint geometry",
                    path.display()
                )))
            }
        }
    }
    for &(x, y) in &set.points {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::validation("point coordinates must be finite"));
        }
    }
    Ok(set)
}

pub fn write_point_set(path: &Path, points: &PointSet) -> Result<()> {
    let features = points
        .points
        .iter()
        .zip(&points.labels)
        .map(|(&(x, y), label)| {
            let properties = label
                .as_ref()
                .map(|l| serde_json::json!({ "label": l }))
                .unwrap_or(serde_json::json!({}));
            GjFeature {
                kind: "Feature".to_string(),
                properties: Some(properties),
                geometry: GjGeometry::Point {
                    coordinates: [round9(x), round9(y)],
                },
            }
        })
        .collect();
    let doc = GjCollection {
        kind: "FeatureCollection".to_string(),
        features,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_ring(x0: f64, y0: f64, x1: f64, y1: f64) -> Ring {
        vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
    }

    #[test]
    fn feature_collection_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fc.geojson");
        let mut f = Feature::polygon(3, vec![rect_ring(0.0, 0.0, 10.0, -5.0)]);
        f.area_px = Some(50);
        let fc = FeatureCollection::new(vec![
            f,
            Feature::polygon(7, vec![rect_ring(20.0, 0.0, 24.0, -4.0)]),
        ]);
        write_feature_collection(&path, &fc).unwrap();
        let back = read_feature_collection(&path).unwrap();
        assert_eq!(back.features.len(), 2);
        assert_eq!(back.features[0].id, 3);
        assert_eq!(back.features[0].class_label, "vehicle");
        assert_eq!(back.features[0].area_px, Some(50));
        // written rings are explicitly closed
        let ring = &back.features[0].polygons[0][0];
        assert_eq!(ring.first(), ring.last());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let fc = FeatureCollection::new(vec![
            Feature::polygon(1, vec![rect_ring(0.0, 0.0, 2.0, -2.0)]),
            Feature::polygon(1, vec![rect_ring(5.0, 0.0, 7.0, -2.0)]),
        ]);
        assert!(fc.validate_unique_ids().is_err());
    }

    #[test]
    fn degenerate_exterior_detected() {
        let line = Feature::polygon(1, vec![vec![(0.0, 0.0), (5.0, 0.0), (0.0, 0.0)]]);
        assert!(line.is_degenerate());
        let tri = Feature::polygon(2, vec![vec![(0.0, 0.0), (5.0, 0.0), (0.0, 5.0)]]);
        assert!(!tri.is_degenerate());
    }

    #[test]
    fn coordinates_round_to_nine_decimals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fc.geojson");
        let f = Feature::polygon(
            1,
            vec![vec![
                (0.1234567894, 0.0),
                (5.0, 0.0000000001),
                (0.0, 5.1000000000004),
            ]],
        );
        write_feature_collection(&path, &FeatureCollection::new(vec![f])).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("0.123456789"), "{text}");
        assert!(!text.contains("0.0000000001"), "{text}");
        assert!(text.contains("5.1"), "{text}");
    }

    #[test]
    fn point_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.geojson");
        let pts = PointSet::from_points(vec![(1.5, -2.5), (100.0, 30.25)]);
        write_point_set(&path, &pts).unwrap();
        let back = read_point_set(&path).unwrap();
        assert_eq!(back.points, pts.points);
    }
}
