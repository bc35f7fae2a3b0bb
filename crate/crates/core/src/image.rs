//! Shared raster types: grayscale images, label maps, binary masks, and the
//! class taxonomy used across the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{check_same_dims, Error, Result};

/// Segmentation classes. Background is index 0 and is excluded from
/// foreground ("Mean") aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
#[serde(rename_all = "lowercase")]
pub enum ClassId {
    Background = 0,
    Nipple = 1,
    Pectoral = 2,
    Fibroglandular = 3,
    Fatty = 4,
}

impl ClassId {
    pub const COUNT: usize = 5;

    /// All classes, background first.
    pub const ALL: [ClassId; 5] = [
        ClassId::Background,
        ClassId::Nipple,
        ClassId::Pectoral,
        ClassId::Fibroglandular,
        ClassId::Fatty,
    ];

    /// The four annotated structures, in report column order.
    pub const FOREGROUND: [ClassId; 4] = [
        ClassId::Nipple,
        ClassId::Pectoral,
        ClassId::Fibroglandular,
        ClassId::Fatty,
    ];

    pub fn from_index(v: u8) -> Result<ClassId> {
        match v {
            0 => Ok(ClassId::Background),
            1 => Ok(ClassId::Nipple),
            2 => Ok(ClassId::Pectoral),
            3 => Ok(ClassId::Fibroglandular),
            4 => Ok(ClassId::Fatty),
            other => Err(Error::invalid(format!("class index {other} out of range 0..=4"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lowercase identifier used in CSV/JSON files.
    pub fn name(self) -> &'static str {
        match self {
            ClassId::Background => "background",
            ClassId::Nipple => "nipple",
            ClassId::Pectoral => "pectoral",
            ClassId::Fibroglandular => "fibroglandular",
            ClassId::Fatty => "fatty",
        }
    }

    /// Column heading used in rendered tables.
    pub fn column_label(self) -> &'static str {
        match self {
            ClassId::Background => "Background",
            ClassId::Nipple => "Nipple",
            ClassId::Pectoral => "Pectoral",
            ClassId::Fibroglandular => "Fib. Tissue",
            ClassId::Fatty => "Fat. Tissue",
        }
    }

    pub fn from_name(s: &str) -> Result<ClassId> {
        match s {
            "background" => Ok(ClassId::Background),
            "nipple" => Ok(ClassId::Nipple),
            "pectoral" => Ok(ClassId::Pectoral),
            "fibroglandular" => Ok(ClassId::Fibroglandular),
            "fatty" => Ok(ClassId::Fatty),
            other => Err(Error::invalid(format!("unknown class name {other:?}"))),
        }
    }
}

/// Equipment vendor tag. Selects the preprocessing pipeline variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Vendor {
    Ge,
    Ims,
    Planmed,
    Hologic,
    Other,
}

impl Vendor {
    pub fn parse(s: &str) -> Result<Vendor> {
        match s.to_ascii_uppercase().as_str() {
            "GE" => Ok(Vendor::Ge),
            "IMS" => Ok(Vendor::Ims),
            "PLANMED" => Ok(Vendor::Planmed),
            "HOLOGIC" => Ok(Vendor::Hologic),
            "OTHER" => Ok(Vendor::Other),
            other => Err(Error::invalid(format!("unknown vendor {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Vendor::Ge => "GE",
            Vendor::Ims => "IMS",
            Vendor::Planmed => "PLANMED",
            Vendor::Hologic => "HOLOGIC",
            Vendor::Other => "OTHER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Left,
    Right,
}

impl Laterality {
    pub fn parse(s: &str) -> Result<Laterality> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Laterality::Left),
            "right" | "r" => Ok(Laterality::Right),
            other => Err(Error::invalid(format!("unknown laterality {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Laterality::Left => "left",
            Laterality::Right => "right",
        }
    }
}

/// Acquisition view position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ViewPos {
    Mlo,
    Cc,
}

impl ViewPos {
    pub fn parse(s: &str) -> Result<ViewPos> {
        match s.to_ascii_uppercase().as_str() {
            "MLO" => Ok(ViewPos::Mlo),
            "CC" => Ok(ViewPos::Cc),
            other => Err(Error::invalid(format!("unknown view {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ViewPos::Mlo => "MLO",
            ViewPos::Cc => "CC",
        }
    }
}

/// Single-channel 8-bit image, row-major, with optional isotropic pixel
/// spacing in meters per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
    spacing_m: Option<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<GrayImage> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
            spacing_m: None,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> GrayImage {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
            spacing_m: None,
        }
    }

    pub fn with_spacing(mut self, spacing_m: Option<f64>) -> GrayImage {
        self.spacing_m = spacing_m;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn spacing_m(&self) -> Option<f64> {
        self.spacing_m
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Mirror about the vertical axis: (x, y) -> (w-1-x, y).
    pub fn flipped_horizontal(&self) -> GrayImage {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.data[y * self.width + x] = self.data[y * self.width + (self.width - 1 - x)];
            }
        }
        out
    }

    /// Export variant with intensities in [0,1], exactly value/255.
    pub fn to_unit_float(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }
}

/// Single-channel floating image with intensities in [0,1]; the model-input
/// export format.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<FloatImage> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(FloatImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Per-pixel class assignment, row-major, dimensions matching its image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<ClassId>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, data: Vec<ClassId>) -> Result<LabelMap> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "label data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(LabelMap {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, cls: ClassId) -> LabelMap {
        LabelMap {
            width,
            height,
            data: vec![cls; width * height],
        }
    }

    pub fn from_indices(width: usize, height: usize, raw: &[u8]) -> Result<LabelMap> {
        let data = raw
            .iter()
            .map(|&v| ClassId::from_index(v))
            .collect::<Result<Vec<_>>>()?;
        LabelMap::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[ClassId] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, cls: ClassId) {
        self.data[y * self.width + x] = cls;
    }

    pub fn flipped_horizontal(&self) -> LabelMap {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.data[y * self.width + x] = self.data[y * self.width + (self.width - 1 - x)];
            }
        }
        out
    }

    /// Pixel count per class.
    pub fn class_counts(&self) -> [usize; ClassId::COUNT] {
        let mut counts = [0usize; ClassId::COUNT];
        for &c in &self.data {
            counts[c.index()] += 1;
        }
        counts
    }
}

/// Row-major boolean mask, dimensions matching its source label map.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<BinaryMask> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> BinaryMask {
        BinaryMask {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

/// True exactly where `labels` equals `cls`.
pub fn mask_of(labels: &LabelMap, cls: ClassId) -> BinaryMask {
    BinaryMask {
        width: labels.width,
        height: labels.height,
        data: labels.data.iter().map(|&c| c == cls).collect(),
    }
}

/// A preprocessed image paired with its annotation and provenance tags.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSample {
    pub image: GrayImage,
    pub labels: LabelMap,
    pub vendor: Vendor,
    pub laterality: Laterality,
    pub view: ViewPos,
}

impl AnnotatedSample {
    pub fn new(
        image: GrayImage,
        labels: LabelMap,
        vendor: Vendor,
        laterality: Laterality,
        view: ViewPos,
    ) -> Result<AnnotatedSample> {
        check_same_dims(image.dims(), labels.dims())?;
        Ok(AnnotatedSample {
            image,
            labels,
            vendor,
            laterality,
            view,
        })
    }
}
