//! Scenes, COCO-format I/O and synthetic prediction sources.

mod coco;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

use crate::cost::GroundTruth;
use crate::geometry::{GeometryError, ImageSize};

pub use coco::{
    load_coco_annotations, load_predictions, load_results, parse_coco_annotations, parse_results,
    predictions_from_records, write_coco_annotations, write_results, CocoDataset, DetectionRecord,
};
pub use synth::{
    derive_seed, random_scene, synthesize_dense_proposals, synthesize_predictions, JitterSpec, SceneSpec,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: missing field `{field}` (line {line})")]
    MissingField {
        path: PathBuf,
        field: String,
        line: usize,
    },
    #[error("annotation {annotation_id} references unknown image_id {image_id}")]
    UnknownImage { annotation_id: u64, image_id: u64 },
    #[error("unknown category_id {category_id}")]
    UnknownCategory { category_id: u64 },
    #[error("{context}: bbox must have 4 values, got {len}")]
    BboxLength { context: String, len: usize },
    #[error("{context}: {source}")]
    InvalidBox {
        context: String,
        #[source]
        source: GeometryError,
    },
    #[error("image {image_id} has non-positive size {width}×{height}")]
    InvalidImage { image_id: u64, width: u32, height: u32 },
    #[error("invalid jitter spec: {0}")]
    InvalidJitter(&'static str),
}

/// Ground-truth objects of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub gts: Vec<GroundTruth>,
}

impl Scene {
    pub fn image_size(&self) -> ImageSize {
        ImageSize::new(f64::from(self.width), f64::from(self.height))
    }

    /// Ground truths that take part in assignment.
    pub fn targets(&self) -> impl Iterator<Item = &GroundTruth> {
        self.gts.iter().filter(|g| !g.is_crowd)
    }
}

/// Dense class index ↔ dataset category id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CategoryMap {
    ids: Vec<u64>,
    names: Vec<String>,
}

impl CategoryMap {
    /// Categories sorted by id; the dense index is the position.
    pub fn new(mut entries: Vec<(u64, String)>) -> Self {
        entries.sort_by_key(|(id, _)| *id);
        entries.dedup_by_key(|(id, _)| *id);
        let (ids, names) = entries.into_iter().unzip();
        Self { ids, names }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, category_id: u64) -> Option<usize> {
        self.ids.binary_search(&category_id).ok()
    }

    pub fn category_id(&self, index: usize) -> Option<u64> {
        self.ids.get(index).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    /// `(dense index, category id, name)` triples.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u64, &str)> {
        self.ids
            .iter()
            .zip(&self.names)
            .enumerate()
            .map(|(i, (id, n))| (i, *id, n.as_str()))
    }
}
