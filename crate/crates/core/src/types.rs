//! Shared domain types: class specifications, label maps and per-pixel
//! probability maps.
//!
//! Maps are stored row-major; probability maps are pixel-major with the class
//! channel innermost (`data[(y * width + x) * num_classes + k]`).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_mismatch, Error, Result};
use crate::linalg::softmax_in_place;

/// Label value marking pixels excluded from losses, priors and metrics.
pub const DEFAULT_IGNORE_ID: u8 = 255;

/// Allowed deviation of a pixel's channel sum from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

/// Class ids are stored in one byte and 255 is reserved for the ignore id.
pub const MAX_CLASSES: usize = 255;

/// Ordered class names plus the ignore label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSpec {
    names: Vec<String>,
    ignore_id: u8,
}

impl ClassSpec {
    pub fn new(names: Vec<String>, ignore_id: u8) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidConfig("class list is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::InvalidConfig("class names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate class name {name:?}")));
            }
        }
        if names.len() > MAX_CLASSES {
            return Err(Error::InvalidConfig(format!("at most {MAX_CLASSES} classes are supported")));
        }
        if (ignore_id as usize) < names.len() {
            return Err(Error::InvalidConfig(format!(
                "ignore id {ignore_id} collides with a class id (num_classes = {})",
                names.len()
            )));
        }
        Ok(Self { names, ignore_id })
    }

    pub fn with_default_ignore<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(names.into_iter().map(Into::into).collect(), DEFAULT_IGNORE_ID)
    }

    /// The 11 CamVid classes.
    pub fn camvid() -> Self {
        Self::with_default_ignore(CAMVID_CLASSES).expect("preset is valid")
    }

    /// The 19 Cityscapes evaluation classes in their canonical train-id order.
    pub fn cityscapes() -> Self {
        Self::with_default_ignore(CITYSCAPES_CLASSES).expect("preset is valid")
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> Option<&str> {
        self.names.get(class).map(String::as_str)
    }

    pub fn ignore_id(&self) -> u8 {
        self.ignore_id
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

pub const CAMVID_CLASSES: [&str; 11] =
    ["sky", "building", "pole", "road", "sidewalk", "tree", "sign", "fence", "car", "pedestrian", "bicyclist"];

pub const CITYSCAPES_CLASSES: [&str; 19] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "sign",
    "tree",
    "terrain",
    "sky",
    "pedestrian",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

/// Dense `height x width` map of class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    ignore_id: u8,
    data: Vec<u8>,
}

impl LabelMap {
    /// Builds a map using [`DEFAULT_IGNORE_ID`].
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        Self::with_ignore_id(height, width, data, DEFAULT_IGNORE_ID)
    }

    pub fn with_ignore_id(height: usize, width: usize, data: Vec<u8>, ignore_id: u8) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidConfig("label map dimensions must be positive".into()));
        }
        if data.len() != height * width {
            return Err(shape_mismatch(
                format!("{} pixels ({height}x{width})", height * width),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { height, width, ignore_id, data })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ignore_id(&self) -> u8 {
        self.ignore_id
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn is_ignored(&self, pixel: usize) -> bool {
        self.data[pixel] == self.ignore_id
    }

    /// Class id at `pixel`, or `None` for ignore pixels.
    pub fn class_at(&self, pixel: usize) -> Option<usize> {
        let v = self.data[pixel];
        (v != self.ignore_id).then_some(v as usize)
    }

    /// Checks every value is a class id of `spec` or the ignore id.
    pub fn validate(&self, spec: &ClassSpec) -> Result<()> {
        let c = spec.num_classes();
        for &v in &self.data {
            if v != self.ignore_id && (v as usize) >= c {
                return Err(Error::InvalidClass(v as usize));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(shape_mismatch(format!("{height}x{width}"), format!("{}x{}", self.height, self.width)));
        }
        Ok(())
    }
}

/// Dense `height x width x num_classes` map of per-pixel class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    num_classes: usize,
    data: Vec<f64>,
}

impl ProbMap {
    /// Builds a validated probability map (see [`validate_probmap`]).
    pub fn new(height: usize, width: usize, num_classes: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || num_classes == 0 {
            return Err(Error::InvalidConfig("probability map dimensions must be positive".into()));
        }
        if num_classes > MAX_CLASSES {
            return Err(Error::InvalidConfig(format!("at most {MAX_CLASSES} classes are supported")));
        }
        let expected = height * width * num_classes;
        if data.len() != expected {
            return Err(shape_mismatch(
                format!("{expected} values ({height}x{width}x{num_classes})"),
                format!("{} values", data.len()),
            ));
        }
        validate_probmap(&data, num_classes)?;
        Ok(Self { height, width, num_classes, data })
    }

    /// Applies a per-pixel softmax to raw scores.
    pub fn from_logits(height: usize, width: usize, num_classes: usize, mut logits: Vec<f64>) -> Result<Self> {
        if num_classes == 0 || logits.len() != height * width * num_classes {
            return Err(shape_mismatch(format!("{height}x{width}x{num_classes}"), format!("{} values", logits.len())));
        }
        for px in logits.chunks_exact_mut(num_classes) {
            softmax_in_place(px);
        }
        Self::new(height, width, num_classes, logits)
    }

    pub fn uniform(height: usize, width: usize, num_classes: usize) -> Result<Self> {
        let v = 1.0 / num_classes as f64;
        Self::new(height, width, num_classes, vec![v; height * width * num_classes])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        let c = self.num_classes;
        &self.data[index * c..(index + 1) * c]
    }

    pub fn pixels(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.num_classes)
    }

    /// Checks `labels` has this map's resolution and only ids below `num_classes`.
    pub(crate) fn check_labels(&self, labels: &LabelMap) -> Result<()> {
        labels.same_shape(self.height, self.width)?;
        for px in 0..labels.len() {
            if let Some(k) = labels.class_at(px) {
                if k >= self.num_classes {
                    return Err(Error::InvalidClass(k));
                }
            }
        }
        Ok(())
    }
}

/// Checks every entry is finite and in `[0, 1]` and every pixel's channels
/// sum to 1 within [`PROB_SUM_TOLERANCE`].
pub fn validate_probmap(data: &[f64], num_classes: usize) -> Result<()> {
    if num_classes == 0 || !data.len().is_multiple_of(num_classes) {
        return Err(shape_mismatch(format!("a multiple of {num_classes} values"), format!("{} values", data.len())));
    }
    for (pixel, px) in data.chunks_exact(num_classes).enumerate() {
        let mut sum = 0.0;
        for (channel, &value) in px.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRange { pixel, channel, value });
            }
            sum += value;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::NotNormalized { pixel, sum });
        }
    }
    Ok(())
}

/// Length-`C` indicator vector for `label`.
pub fn one_hot(label: usize, spec: &ClassSpec) -> Result<Vec<f64>> {
    if label >= spec.num_classes() {
        return Err(Error::InvalidClass(label));
    }
    let mut v = vec![0.0; spec.num_classes()];
    v[label] = 1.0;
    Ok(v)
}
