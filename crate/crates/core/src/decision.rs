//! Pixel-wise decision rules and spatial class priors.
//!
//! The Bayes rule picks `argmax_k p(k | x)`. The maximum-likelihood rule picks
//! `argmax_k p(k | x) / p(k)`, where `p(k)` is a per-location class prior
//! estimated from training labels. The evidence term `p(x)` is constant per
//! pixel and never materialized. Ties resolve to the lowest class id.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_mismatch, Error, Result};
use crate::linalg::argmax;
use crate::metrics::{ConfusionMatrix, EvalReport, GroupSpec};
use crate::types::{LabelMap, ProbMap};

pub const DEFAULT_SIGMA: f64 = 40.0;
pub const DEFAULT_FLOOR: f64 = 1e-5;

/// Per-location class priors, `height x width x num_classes`, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorsMap {
    height: usize,
    width: usize,
    num_classes: usize,
    data: Vec<f64>,
    sigma: f64,
    floor: f64,
}

impl PriorsMap {
    /// Wraps precomputed priors; every entry must lie in `[floor, 1]`.
    pub fn new(
        height: usize,
        width: usize,
        num_classes: usize,
        data: Vec<f64>,
        sigma: f64,
        floor: f64,
    ) -> Result<Self> {
        if !(floor > 0.0 && floor <= 1.0) {
            return Err(Error::DomainError(format!("prior floor must lie in (0, 1], got {floor}")));
        }
        if !(sigma >= 0.0) {
            return Err(Error::NegativeSigma(sigma));
        }
        let expected = height * width * num_classes;
        if data.len() != expected || expected == 0 {
            return Err(shape_mismatch(
                format!("{expected} values ({height}x{width}x{num_classes})"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(&v) = data.iter().find(|v| !(**v >= floor && **v <= 1.0)) {
            return Err(Error::DomainError(format!("prior value {v} outside [{floor}, 1]")));
        }
        Ok(Self { height, width, num_classes, data, sigma, floor })
    }

    /// Equal priors `1/C` everywhere.
    pub fn uniform(height: usize, width: usize, num_classes: usize) -> Result<Self> {
        let v = 1.0 / num_classes as f64;
        Self::new(height, width, num_classes, vec![v; height * width * num_classes], 0.0, v)
    }

    /// Assembles priors from per-class planes, clamping each entry below at `floor`.
    pub fn from_channels(height: usize, width: usize, channels: &[Vec<f64>], sigma: f64, floor: f64) -> Result<Self> {
        let c = channels.len();
        let n = height * width;
        if let Some(ch) = channels.iter().find(|ch| ch.len() != n) {
            return Err(shape_mismatch(format!("{n} values per channel"), ch.len()));
        }
        let mut data = vec![0.0; n * c];
        for (k, ch) in channels.iter().enumerate() {
            for (px, &v) in ch.iter().enumerate() {
                data[px * c + k] = v.clamp(floor, 1.0);
            }
        }
        Self::new(height, width, c, data, sigma, floor)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        let c = self.num_classes;
        &self.data[index * c..(index + 1) * c]
    }

    /// Copy with one entry replaced. The value must stay within `[floor, 1]`.
    pub fn with_value(&self, pixel: usize, class: usize, value: f64) -> Result<Self> {
        let mut data = self.data.clone();
        data[pixel * self.num_classes + class] = value;
        Self::new(self.height, self.width, self.num_classes, data, self.sigma, self.floor)
    }
}

/// Per-location class counts accumulated over label maps. Merging is
/// associative, so maps may be counted in parallel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorCounts {
    height: usize,
    width: usize,
    num_classes: usize,
    counts: Vec<u32>,
    valid: Vec<u32>,
    maps: usize,
}

impl PriorCounts {
    pub fn new(height: usize, width: usize, num_classes: usize) -> Self {
        Self {
            height,
            width,
            num_classes,
            counts: vec![0; height * width * num_classes],
            valid: vec![0; height * width],
            maps: 0,
        }
    }

    pub fn maps(&self) -> usize {
        self.maps
    }

    pub fn add(&mut self, labels: &LabelMap) -> Result<()> {
        labels.same_shape(self.height, self.width)?;
        let c = self.num_classes;
        if let Some(k) = (0..labels.len()).filter_map(|px| labels.class_at(px)).find(|&k| k >= c) {
            return Err(Error::InvalidClass(k));
        }
        for px in 0..labels.len() {
            if let Some(k) = labels.class_at(px) {
                self.counts[px * c + k] += 1;
                self.valid[px] += 1;
            }
        }
        self.maps += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &PriorCounts) -> Result<()> {
        if (other.height, other.width, other.num_classes) != (self.height, self.width, self.num_classes) {
            return Err(shape_mismatch(
                format!("{}x{}x{}", self.height, self.width, self.num_classes),
                format!("{}x{}x{}", other.height, other.width, other.num_classes),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.valid.iter_mut().zip(&other.valid) {
            *a += b;
        }
        self.maps += other.maps;
        Ok(())
    }

    /// Raw per-location class frequencies as one plane per class. Locations
    /// never labeled with a class get `1/C` in every channel.
    pub fn frequencies(&self) -> Result<Vec<Vec<f64>>> {
        if self.maps == 0 {
            return Err(Error::EmptyInput);
        }
        let c = self.num_classes;
        let n = self.height * self.width;
        let uniform = 1.0 / c as f64;
        let mut planes = vec![vec![0.0; n]; c];
        for px in 0..n {
            let total = self.valid[px];
            for (k, plane) in planes.iter_mut().enumerate() {
                plane[px] = if total == 0 { uniform } else { self.counts[px * c + k] as f64 / total as f64 };
            }
        }
        Ok(planes)
    }

    /// Smooths every plane with [`gaussian_smooth`] and applies the floor.
    pub fn finish(&self, sigma: f64, floor: f64) -> Result<PriorsMap> {
        let planes = self
            .frequencies()?
            .into_iter()
            .map(|p| gaussian_smooth(&p, self.height, self.width, sigma))
            .collect::<Result<Vec<_>>>()?;
        PriorsMap::from_channels(self.height, self.width, &planes, sigma, floor)
    }
}

/// Pixel-wise class priors from a set of training label maps.
pub fn estimate_priors(labels: &[LabelMap], num_classes: usize, sigma: f64, floor: f64) -> Result<PriorsMap> {
    let first = labels.first().ok_or(Error::EmptyInput)?;
    let mut counts = PriorCounts::new(first.height(), first.width(), num_classes);
    for map in labels {
        counts.add(map)?;
    }
    counts.finish(sigma, floor)
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`; `[1.0]` for sigma 0.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(vec![1.0]);
    }
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| {
            let x = i as f64;
            libm::exp(-x * x / (2.0 * sigma * sigma))
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    Ok(taps)
}

/// Mirror index into `0..len` without repeating the edge sample
/// (`... 2 1 | 0 1 2 ... n-1 | n-2 ...`).
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable Gaussian blur of a row-major `height x width` field with
/// reflect padding. Sigma 0 returns the input unchanged.
pub fn gaussian_smooth(field: &[f64], height: usize, width: usize, sigma: f64) -> Result<Vec<f64>> {
    if field.len() != height * width {
        return Err(shape_mismatch(format!("{height}x{width}"), format!("{} values", field.len())));
    }
    let kernel = gaussian_kernel(sigma)?;
    if kernel.len() == 1 {
        return Ok(field.to_vec());
    }
    let radius = (kernel.len() / 2) as isize;

    let mut rows = vec![0.0; field.len()];
    for y in 0..height {
        let src = &field[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (t, &w) in kernel.iter().enumerate() {
                acc += w * src[reflect_index(x as isize + t as isize - radius, width)];
            }
            rows[y * width + x] = acc;
        }
    }

    let mut out = vec![0.0; field.len()];
    for y in 0..height {
        for (t, &w) in kernel.iter().enumerate() {
            let sy = reflect_index(y as isize + t as isize - radius, height);
            let src = &rows[sy * width..(sy + 1) * width];
            for (o, &s) in out[y * width..(y + 1) * width].iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }
    Ok(out)
}

fn labels_from(height: usize, width: usize, ids: Vec<u8>) -> LabelMap {
    LabelMap::new(height, width, ids).expect("dimensions come from a validated map")
}

/// `argmax_k p[k]` per pixel.
pub fn decide_bayes(p: &ProbMap) -> LabelMap {
    let ids = p.pixels().map(|px| argmax(px.iter().copied()) as u8).collect();
    labels_from(p.height(), p.width(), ids)
}

/// `argmax_k p[k] / prior[k]` per pixel.
pub fn decide_ml(p: &ProbMap, priors: &PriorsMap) -> Result<LabelMap> {
    if (p.height(), p.width(), p.num_classes()) != (priors.height, priors.width, priors.num_classes) {
        return Err(shape_mismatch(
            format!("{}x{}x{}", p.height(), p.width(), p.num_classes()),
            format!("priors {}x{}x{}", priors.height, priors.width, priors.num_classes),
        ));
    }
    let ids = p
        .pixels()
        .zip(priors.data.chunks_exact(priors.num_classes))
        .map(|(px, pr)| argmax(px.iter().zip(pr).map(|(&pk, &qk)| pk / qk)) as u8)
        .collect();
    Ok(labels_from(p.height(), p.width(), ids))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionRule {
    Bayes,
    MaximumLikelihood(PriorsMap),
}

impl DecisionRule {
    pub fn decide(&self, p: &ProbMap) -> Result<LabelMap> {
        match self {
            DecisionRule::Bayes => Ok(decide_bayes(p)),
            DecisionRule::MaximumLikelihood(priors) => decide_ml(p, priors),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DecisionRule::Bayes => "bayes",
            DecisionRule::MaximumLikelihood(_) => "ml",
        }
    }
}

/// Side-by-side evaluation of the Bayes and ML rules on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleComparison {
    pub bayes: EvalReport,
    pub ml: EvalReport,
    /// Number of pixels where the two rules pick different classes.
    pub disagreement: usize,
}

pub fn compare_rules(p: &ProbMap, priors: &PriorsMap, gt: &LabelMap, groups: &GroupSpec) -> Result<RuleComparison> {
    let bayes = decide_bayes(p);
    let ml = decide_ml(p, priors)?;
    let disagreement = bayes.data().iter().zip(ml.data()).filter(|(a, b)| a != b).count();
    let c = p.num_classes();
    Ok(RuleComparison {
        bayes: EvalReport::from_confusion(ConfusionMatrix::from_maps(c, &bayes, gt)?, groups),
        ml: EvalReport::from_confusion(ConfusionMatrix::from_maps(c, &ml, gt)?, groups),
        disagreement,
    })
}
