//! Label assignment and matching for object detection.
//!
//! The crate compares two ways of turning ground-truth boxes into training
//! targets for a set of predicted boxes:
//!
//! * optimal one-to-one matching on a detection cost ([`matching`],
//!   [`cost`]), optionally widened to exactly `B` matches per object;
//! * fixed IoU-threshold assignment where many predictions may share one
//!   object ([`assign`]), with a per-object cap that keeps large objects from
//!   dominating the positive set.
//!
//! Around those sit the box geometry ([`geometry`]), the multi-scale initial
//! boxes of a dense first stage ([`anchors`]), greedy NMS ([`nms`]), COCO
//! I/O and synthetic prediction sources ([`data`]) and positive-count
//! statistics ([`stats`]).
//!
//! ```
//! use assignkit::assign::{iou_assign, AssignConfig};
//! use assignkit::cost::GroundTruth;
//! use assignkit::geometry::BBox;
//! use assignkit::matching::Label;
//!
//! let gts = [GroundTruth::new(BBox::new(0.0, 0.0, 100.0, 100.0)?, 0)];
//! let boxes = [
//!     BBox::new(0.0, 0.0, 100.0, 100.0)?,
//!     BBox::new(50.0, 0.0, 150.0, 100.0)?,
//! ];
//! let a = iou_assign(&boxes, &gts, &AssignConfig::naive(0.6));
//! assert_eq!(a.labels(), &[Label::Object(0), Label::Background]);
//! # Ok::<(), assignkit::geometry::GeometryError>(())
//! ```

pub mod anchors;
pub mod assign;
pub mod cost;
pub mod data;
pub mod geometry;
pub mod matching;
pub mod nms;
pub mod stats;

use thiserror::Error;

/// Any error produced by the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Anchor(#[from] anchors::AnchorError),
    #[error(transparent)]
    Cost(#[from] cost::CostError),
    #[error(transparent)]
    Matching(#[from] matching::MatchingError),
    #[error(transparent)]
    Assign(#[from] assign::AssignError),
    #[error(transparent)]
    Data(#[from] data::DataError),
}

/// Runs the code blocks of the guide in `book/` as doctests.
#[cfg(doctest)]
mod booktest {
    macro_rules! booktest {
        ($i:ident) => {
            #[doc = include_str!(concat!("../../../book/src/", stringify!($i), ".md"))]
            mod $i {}
        };
    }
    booktest!(ch01_introduction);
    booktest!(ch02_geometry);
    booktest!(ch03_anchors);
    booktest!(ch04_matching);
    booktest!(ch05_assignment);
    booktest!(ch06_balancing);
    booktest!(ch07_nms);
    booktest!(ch08_cli);
}
