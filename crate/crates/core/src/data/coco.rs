use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CategoryMap, DataError, Scene};
use crate::cost::{GroundTruth, Prediction};
use crate::geometry::BBox;

#[derive(Debug, Deserialize, Serialize)]
struct RawDataset {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<RawCategory>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawImage {
    id: u64,
    width: u32,
    height: u32,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawAnnotation {
    #[serde(default)]
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: Vec<f64>,
    #[serde(default)]
    area: Option<f64>,
    #[serde(default, deserialize_with = "crowd_flag")]
    iscrowd: u8,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawCategory {
    id: u64,
    #[serde(default)]
    name: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawResult {
    image_id: u64,
    category_id: u64,
    bbox: Vec<f64>,
    score: f64,
}

/// `iscrowd` shows up as 0/1 or as a boolean depending on the exporter.
fn crowd_flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<u8, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Int(u8),
        Bool(bool),
    }
    Ok(match Flag::deserialize(d)? {
        Flag::Int(v) => v,
        Flag::Bool(b) => u8::from(b),
    })
}

/// Scenes plus the category mapping used to index class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CocoDataset {
    pub scenes: Vec<Scene>,
    pub categories: CategoryMap,
    /// Annotations that became empty after clipping to the image.
    pub dropped_annotations: usize,
}

/// One entry of a COCO results file, with the box in corner form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json_error(path: &Path, e: serde_json::Error) -> DataError {
    let message = e.to_string();
    if let Some(rest) = message.strip_prefix("missing field `") {
        if let Some(end) = rest.find('`') {
            return DataError::MissingField {
                path: path.to_path_buf(),
                field: rest[..end].to_string(),
                line: e.line(),
            };
        }
    }
    DataError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message,
    }
}

fn xywh(bbox: &[f64], context: impl Fn() -> String) -> Result<BBox, DataError> {
    let [x, y, w, h] = bbox else {
        return Err(DataError::BboxLength {
            context: context(),
            len: bbox.len(),
        });
    };
    BBox::from_xywh(*x, *y, *w, *h).map_err(|source| DataError::InvalidBox {
        context: context(),
        source,
    })
}

pub fn load_coco_annotations(path: impl AsRef<Path>) -> Result<CocoDataset, DataError> {
    let path = path.as_ref();
    parse_coco_annotations(&read(path)?, path)
}

/// Parses annotation JSON. `origin` is only used in error messages.
pub fn parse_coco_annotations(text: &str, origin: &Path) -> Result<CocoDataset, DataError> {
    let raw: RawDataset = serde_json::from_str(text).map_err(|e| json_error(origin, e))?;

    let categories = match &raw.categories {
        Some(cats) => CategoryMap::new(cats.iter().map(|c| (c.id, c.name.clone())).collect()),
        None => CategoryMap::new(
            raw.annotations
                .iter()
                .map(|a| (a.category_id, a.category_id.to_string()))
                .collect(),
        ),
    };

    let mut scenes: Vec<Scene> = Vec::with_capacity(raw.images.len());
    let mut slot: HashMap<u64, usize> = HashMap::with_capacity(raw.images.len());
    for img in &raw.images {
        if img.width == 0 || img.height == 0 {
            return Err(DataError::InvalidImage {
                image_id: img.id,
                width: img.width,
                height: img.height,
            });
        }
        slot.insert(img.id, scenes.len());
        scenes.push(Scene {
            image_id: img.id,
            width: img.width,
            height: img.height,
            gts: Vec::new(),
        });
    }

    let mut dropped = 0;
    for ann in &raw.annotations {
        let &s = slot.get(&ann.image_id).ok_or(DataError::UnknownImage {
            annotation_id: ann.id,
            image_id: ann.image_id,
        })?;
        let class_id = categories
            .index_of(ann.category_id)
            .ok_or(DataError::UnknownCategory {
                category_id: ann.category_id,
            })?;
        let bbox = xywh(&ann.bbox, || format!("annotation {}", ann.id))?;
        let scene = &mut scenes[s];
        let clipped = bbox.clip(scene.image_size());
        if clipped.area() <= 0.0 {
            dropped += 1;
            continue;
        }
        scene.gts.push(GroundTruth {
            bbox: clipped,
            class_id,
            is_crowd: ann.iscrowd != 0,
        });
    }
    if dropped > 0 {
        log::warn!(
            "{}: dropped {dropped} zero-area annotations after clipping",
            origin.display()
        );
    }

    Ok(CocoDataset {
        scenes,
        categories,
        dropped_annotations: dropped,
    })
}

/// Writes scenes back out as COCO annotation JSON. Annotation ids are
/// assigned sequentially from 1.
pub fn write_coco_annotations(dataset: &CocoDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut annotations = Vec::new();
    for scene in &dataset.scenes {
        for g in &scene.gts {
            let category_id =
                dataset
                    .categories
                    .category_id(g.class_id)
                    .ok_or(DataError::UnknownCategory {
                        category_id: g.class_id as u64,
                    })?;
            annotations.push(RawAnnotation {
                id: annotations.len() as u64 + 1,
                image_id: scene.image_id,
                category_id,
                bbox: g.bbox.to_xywh().to_vec(),
                area: Some(g.bbox.area()),
                iscrowd: u8::from(g.is_crowd),
            });
        }
    }
    let raw = RawDataset {
        images: dataset
            .scenes
            .iter()
            .map(|s| RawImage {
                id: s.image_id,
                width: s.width,
                height: s.height,
            })
            .collect(),
        annotations,
        categories: Some(
            dataset
                .categories
                .iter()
                .map(|(_, id, name)| RawCategory {
                    id,
                    name: name.to_string(),
                })
                .collect(),
        ),
    };
    write_json(path.as_ref(), &raw)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    let text = serde_json::to_string(value).expect("plain data serializes");
    fs::write(path, text).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>, DataError> {
    let path = path.as_ref();
    parse_results(&read(path)?, path)
}

pub fn parse_results(text: &str, origin: &Path) -> Result<Vec<DetectionRecord>, DataError> {
    let raw: Vec<RawResult> = serde_json::from_str(text).map_err(|e| json_error(origin, e))?;
    raw.iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(DetectionRecord {
                image_id: r.image_id,
                category_id: r.category_id,
                bbox: xywh(&r.bbox, || format!("result {i}"))?,
                score: r.score,
            })
        })
        .collect()
}

pub fn write_results(path: impl AsRef<Path>, records: &[DetectionRecord]) -> Result<(), DataError> {
    let raw: Vec<RawResult> = records
        .iter()
        .map(|r| RawResult {
            image_id: r.image_id,
            category_id: r.category_id,
            bbox: r.bbox.to_xywh().to_vec(),
            score: r.score,
        })
        .collect();
    write_json(path.as_ref(), &raw)
}

/// Groups result records per image. Each record becomes a prediction whose
/// score sits at its category's dense index; all other classes score 0.
pub fn predictions_from_records(
    records: &[DetectionRecord],
    categories: &CategoryMap,
) -> Result<BTreeMap<u64, Vec<Prediction>>, DataError> {
    let mut out: BTreeMap<u64, Vec<Prediction>> = BTreeMap::new();
    for r in records {
        let c = categories
            .index_of(r.category_id)
            .ok_or(DataError::UnknownCategory {
                category_id: r.category_id,
            })?;
        let mut scores = vec![0.0; categories.len()];
        scores[c] = r.score;
        out.entry(r.image_id)
            .or_default()
            .push(Prediction::new(r.bbox, scores));
    }
    Ok(out)
}

pub fn load_predictions(
    path: impl AsRef<Path>,
    categories: &CategoryMap,
) -> Result<BTreeMap<u64, Vec<Prediction>>, DataError> {
    predictions_from_records(&load_results(path)?, categories)
}
