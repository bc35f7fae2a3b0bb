//! Data pipeline for multi-vendor mammography segmentation work: vendor
//! preprocessing, polygon rasterization, annotation-guided intensity
//! augmentation, style post-processing, the full metric suite, nonparametric
//! significance analysis, and test-time-augmentation uncertainty maps.
//!
//! Neural training is out of scope; model predictions and probability maps
//! are consumed as files.

pub mod augment;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod preprocess;
pub mod rasterize;
pub mod report;
pub mod rng;
pub mod stats;
pub mod style;
pub mod uncertainty;

pub use error::{Error, Result};
pub use image::{
    mask_of, AnnotatedSample, BinaryMask, ClassId, FloatImage, GrayImage, LabelMap, Laterality,
    Vendor, ViewPos,
};
pub use rng::{SeededRng, UniformSource};
