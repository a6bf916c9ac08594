//! Cross-entropy, frequency-weighted cross-entropy and the importance-aware
//! loss (IAL), with gradients with respect to pre-softmax logits.
//!
//! The IAL combines per-group cross-entropy terms `I_1 .. I_L` (groups ordered
//! by ascending importance) with dynamic weights `f_t` that measure how far
//! the ground-truth channel `p'` sits from a per-class target:
//!
//! ```text
//! f_t   = mean over contributing pixels of [ (m_t[y] + lambda)^0.5 * (p' - m_t[y]) ]^2
//! total = I_1 + (f_1 + alpha) * I_2 + (f_2 + alpha) * (f_3 + alpha) * I_3
//! ```
//!
//! Group `l` (0-based) is scaled by the product of `l` consecutive level
//! factors, so three groups use three target vectors. `I_l` and `f_t` are
//! means rather than sums so that `lambda` and `alpha` do not depend on the
//! image resolution.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;
use crate::metrics::GroupSpec;
use crate::types::{LabelMap, ProbMap};

/// Lower clamp applied to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;
pub const DEFAULT_SMOOTHING: f64 = 1.02;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 1.0;

fn neg_log(p: f64) -> f64 {
    -libm::log(p.max(LOG_CLAMP))
}

/// Class weights `w[k] = 1 / ln(a + f[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyWeights {
    frequencies: Vec<f64>,
    smoothing: f64,
    weights: Vec<f64>,
}

impl FrequencyWeights {
    pub fn new(frequencies: Vec<f64>, smoothing: f64) -> Result<Self> {
        if !(smoothing > 1.0) || !smoothing.is_finite() {
            return Err(Error::DomainError(format!("smoothing constant must exceed 1, got {smoothing}")));
        }
        if let Some(&f) = frequencies.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::DomainError(format!("class frequency {f} outside [0, 1]")));
        }
        let weights = frequencies.iter().map(|&f| 1.0 / libm::log(smoothing + f)).collect();
        Ok(Self { frequencies, smoothing, weights })
    }

    /// Pixel frequency of each class over the non-ignored pixels of `labels`.
    pub fn from_label_maps<'a>(
        labels: impl IntoIterator<Item = &'a LabelMap>,
        num_classes: usize,
        smoothing: f64,
    ) -> Result<Self> {
        let mut counts = vec![0u64; num_classes];
        for map in labels {
            for px in 0..map.len() {
                if let Some(k) = map.class_at(px) {
                    *counts.get_mut(k).ok_or(Error::InvalidClass(k))? += 1;
                }
            }
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyInput);
        }
        let freqs = counts.iter().map(|&n| n as f64 / total as f64).collect();
        Self::new(freqs, smoothing)
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Mean of `-w[y] ln p[y]` over non-ignored pixels (`w = 1` when `weights` is
/// `None`). Returns 0 when every pixel is ignored.
pub fn cross_entropy(p: &ProbMap, gt: &LabelMap, weights: Option<&FrequencyWeights>) -> Result<f64> {
    p.check_labels(gt)?;
    check_weights(p, weights)?;
    let mut sum = CompensatedSum::default();
    let mut n = 0usize;
    for px in 0..gt.len() {
        if let Some(y) = gt.class_at(px) {
            let w = weights.map_or(1.0, |w| w.weights[y]);
            sum.add(w * neg_log(p.pixel(px)[y]));
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum.value() / n as f64 })
}

/// Gradient of [`cross_entropy`] with respect to the logits behind `p`.
pub fn cross_entropy_gradient(p: &ProbMap, gt: &LabelMap, weights: Option<&FrequencyWeights>) -> Result<Vec<f64>> {
    p.check_labels(gt)?;
    check_weights(p, weights)?;
    let c = p.num_classes();
    let n = (0..gt.len()).filter(|&px| !gt.is_ignored(px)).count();
    let mut grad = vec![0.0; p.data().len()];
    for px in 0..gt.len() {
        if let Some(y) = gt.class_at(px) {
            let scale = weights.map_or(1.0, |w| w.weights[y]) / n as f64;
            write_softmax_grad(&mut grad[px * c..(px + 1) * c], p.pixel(px), y, scale);
        }
    }
    Ok(grad)
}

fn check_weights(p: &ProbMap, weights: Option<&FrequencyWeights>) -> Result<()> {
    match weights {
        Some(w) if w.weights.len() != p.num_classes() => {
            Err(Error::DimensionMismatch(format!("{} class weights for {} classes", w.weights.len(), p.num_classes())))
        }
        _ => Ok(()),
    }
}

fn write_softmax_grad(out: &mut [f64], probs: &[f64], target: usize, scale: f64) {
    for (k, (o, &pk)) in out.iter_mut().zip(probs).enumerate() {
        let indicator = if k == target { 1.0 } else { 0.0 };
        *o = scale * (pk - indicator);
    }
}

/// Per-class target for one dynamic-weight level; `None` masks the class out.
pub type TargetVector = Vec<Option<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceConfig {
    groups: GroupSpec,
    targets: Vec<TargetVector>,
    lambda: f64,
    alpha: f64,
}

/// Number of dynamic-weight levels needed for `groups` importance groups.
pub fn level_count(groups: usize) -> usize {
    groups * groups.saturating_sub(1) / 2
}

fn levels_of_group(group: usize) -> core::ops::Range<usize> {
    level_count(group)..level_count(group + 1)
}

impl ImportanceConfig {
    /// Builds the default target vectors for up to three groups:
    ///
    /// - `m_1`: 1 on `G2 ∪ G3`, 0 on `G1`;
    /// - `m_2`: 1 on `G3`, 0 on `G2`, masked on `G1`;
    /// - `m_3`: 1 on `G3`, masked elsewhere.
    ///
    /// With two groups only `m_1` (1 on `G2`, 0 on `G1`) is used; a single
    /// group reduces the loss to plain cross-entropy.
    pub fn new(groups: GroupSpec, lambda: f64, alpha: f64) -> Result<Self> {
        let c = groups.num_classes();
        let member = |g: usize| -> Vec<bool> {
            let mut v = vec![false; c];
            if let Some(group) = groups.groups().get(g) {
                for &k in &group.classes {
                    v[k] = true;
                }
            }
            v
        };
        let targets = match groups.len() {
            0 => return Err(Error::InvalidConfig("at least one importance group is required".into())),
            1 => Vec::new(),
            2 => {
                let g2 = member(1);
                vec![(0..c).map(|k| Some(if g2[k] { 1.0 } else { 0.0 })).collect()]
            }
            3 => {
                let (g2, g3) = (member(1), member(2));
                let m1 = (0..c).map(|k| Some(if g2[k] || g3[k] { 1.0 } else { 0.0 })).collect();
                let m2 = (0..c)
                    .map(|k| {
                        if g3[k] {
                            Some(1.0)
                        } else if g2[k] {
                            Some(0.0)
                        } else {
                            None
                        }
                    })
                    .collect();
                let m3 = (0..c).map(|k| g3[k].then_some(1.0)).collect();
                vec![m1, m2, m3]
            }
            n => {
                return Err(Error::InvalidConfig(format!(
                    "default targets are defined for at most 3 groups, got {n}; supply explicit targets"
                )))
            }
        };
        Self::with_targets(groups, targets, lambda, alpha)
    }

    pub fn with_defaults(groups: GroupSpec) -> Result<Self> {
        Self::new(groups, DEFAULT_LAMBDA, DEFAULT_ALPHA)
    }

    /// Uses explicit per-level targets; `L` groups need `L(L-1)/2` levels.
    pub fn with_targets(groups: GroupSpec, targets: Vec<TargetVector>, lambda: f64, alpha: f64) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidConfig("at least one importance group is required".into()));
        }
        let needed = level_count(groups.len());
        if targets.len() != needed {
            return Err(Error::InvalidConfig(format!(
                "{} groups need {needed} target vectors, got {}",
                groups.len(),
                targets.len()
            )));
        }
        for (t, m) in targets.iter().enumerate() {
            if m.len() != groups.num_classes() {
                return Err(Error::DimensionMismatch(format!(
                    "target vector {} has {} entries for {} classes",
                    t + 1,
                    m.len(),
                    groups.num_classes()
                )));
            }
            if let Some(v) = m.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidConfig(format!("target value {v} outside [0, 1]")));
            }
        }
        if !lambda.is_finite() || lambda < 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and non-negative and alpha finite (lambda = {lambda}, alpha = {alpha})"
            )));
        }
        Ok(Self { groups, targets, lambda, alpha })
    }

    pub fn groups(&self) -> &GroupSpec {
        &self.groups
    }

    pub fn targets(&self) -> &[TargetVector] {
        &self.targets
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Effective scale of each group's loss term for the given dynamic weights.
    pub fn group_multipliers(&self, dynamic_weights: &[f64]) -> Vec<f64> {
        (0..self.groups.len()).map(|g| levels_of_group(g).map(|t| dynamic_weights[t] + self.alpha).product()).collect()
    }
}

/// Dynamic weight `f_t` for one target vector; 0 when no pixel contributes.
pub fn dynamic_weight(p: &ProbMap, gt: &LabelMap, target: &[Option<f64>], lambda: f64) -> Result<f64> {
    p.check_labels(gt)?;
    if target.len() != p.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "target vector has {} entries for {} classes",
            target.len(),
            p.num_classes()
        )));
    }
    let mut sum = CompensatedSum::default();
    let mut n = 0usize;
    for px in 0..gt.len() {
        let Some(y) = gt.class_at(px) else { continue };
        let Some(m) = target[y] else { continue };
        let d = libm::sqrt(m + lambda) * (p.pixel(px)[y] - m);
        sum.add(d * d);
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum.value() / n as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IalBreakdown {
    /// Mean cross-entropy per group, `I_1 .. I_L`.
    pub group_losses: Vec<f64>,
    /// Dynamic weights `f_1 .. f_T`.
    pub dynamic_weights: Vec<f64>,
    pub alpha: f64,
    pub total: f64,
}

impl IalBreakdown {
    /// Recomputes the total from the stored terms.
    pub fn recombine(&self) -> f64 {
        combine(&self.group_losses, &self.dynamic_weights, self.alpha)
    }
}

fn combine(group_losses: &[f64], dynamic_weights: &[f64], alpha: f64) -> f64 {
    group_losses
        .iter()
        .enumerate()
        .map(|(g, &loss)| {
            let scale: f64 = levels_of_group(g).map(|t| dynamic_weights[t] + alpha).product();
            scale * loss
        })
        .sum()
}

struct GroupedPixels {
    assignment: Vec<usize>,
    counts: Vec<usize>,
}

fn group_pixels(p: &ProbMap, gt: &LabelMap, cfg: &ImportanceConfig) -> Result<GroupedPixels> {
    p.check_labels(gt)?;
    if cfg.groups.num_classes() != p.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "importance config covers {} classes, probability map has {}",
            cfg.groups.num_classes(),
            p.num_classes()
        )));
    }
    let owner: Vec<Option<usize>> = (0..p.num_classes()).map(|k| cfg.groups.group_of(k)).collect();
    let mut assignment = vec![usize::MAX; gt.len()];
    let mut counts = vec![0usize; cfg.groups.len()];
    for (px, slot) in assignment.iter_mut().enumerate() {
        if let Some(y) = gt.class_at(px) {
            let g = owner[y].ok_or(Error::UngroupedClass(y))?;
            *slot = g;
            counts[g] += 1;
        }
    }
    Ok(GroupedPixels { assignment, counts })
}

fn group_losses(p: &ProbMap, gt: &LabelMap, grouped: &GroupedPixels) -> Vec<f64> {
    let mut sums = vec![CompensatedSum::default(); grouped.counts.len()];
    for (px, &g) in grouped.assignment.iter().enumerate() {
        if g != usize::MAX {
            let y = gt.data()[px] as usize;
            sums[g].add(neg_log(p.pixel(px)[y]));
        }
    }
    sums.iter().zip(&grouped.counts).map(|(s, &n)| if n == 0 { 0.0 } else { s.value() / n as f64 }).collect()
}

/// Evaluates the importance-aware loss and returns every term.
pub fn ial(p: &ProbMap, gt: &LabelMap, cfg: &ImportanceConfig) -> Result<IalBreakdown> {
    let grouped = group_pixels(p, gt, cfg)?;
    let losses = group_losses(p, gt, &grouped);
    let dynamic_weights =
        cfg.targets.iter().map(|m| dynamic_weight(p, gt, m, cfg.lambda)).collect::<Result<Vec<_>>>()?;
    let total = combine(&losses, &dynamic_weights, cfg.alpha);
    Ok(IalBreakdown { group_losses: losses, dynamic_weights, alpha: cfg.alpha, total })
}

/// The IAL total with the dynamic weights held at `dynamic_weights`. This is
/// the objective whose logit gradient [`ial_gradient`] returns.
pub fn ial_frozen_objective(
    p: &ProbMap,
    gt: &LabelMap,
    cfg: &ImportanceConfig,
    dynamic_weights: &[f64],
) -> Result<f64> {
    if dynamic_weights.len() != cfg.targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} dynamic weights for {} levels",
            dynamic_weights.len(),
            cfg.targets.len()
        )));
    }
    let grouped = group_pixels(p, gt, cfg)?;
    Ok(combine(&group_losses(p, gt, &grouped), dynamic_weights, cfg.alpha))
}

/// Gradient of the IAL total with respect to the logits behind `p`, treating
/// the dynamic weights as constants. Each non-ignored pixel receives
/// `multiplier / group_pixel_count * (p - one_hot(y))`.
pub fn ial_gradient(p: &ProbMap, gt: &LabelMap, cfg: &ImportanceConfig) -> Result<Vec<f64>> {
    let breakdown = ial(p, gt, cfg)?;
    let grouped = group_pixels(p, gt, cfg)?;
    let multipliers = cfg.group_multipliers(&breakdown.dynamic_weights);
    let c = p.num_classes();
    let mut grad = vec![0.0; p.data().len()];
    for (px, &g) in grouped.assignment.iter().enumerate() {
        if g == usize::MAX {
            continue;
        }
        let y = gt.data()[px] as usize;
        let scale = multipliers[g] / grouped.counts[g] as f64;
        write_softmax_grad(&mut grad[px * c..(px + 1) * c], p.pixel(px), y, scale);
    }
    Ok(grad)
}

/// Outcome of comparing an analytic logit gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub entries: usize,
}

/// Compares `analytic` with central differences of `objective` evaluated on
/// `softmax(logits)`. Relative error per entry is
/// `|a - n| / max(|a|, |n|)`, taken as 0 when both are below 1e-12.
pub fn check_logit_gradient(
    logits: &[f64],
    height: usize,
    width: usize,
    num_classes: usize,
    analytic: &[f64],
    step: f64,
    objective: impl Fn(&ProbMap) -> Result<f64>,
) -> Result<GradCheck> {
    if analytic.len() != logits.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gradient entries for {} logits",
            analytic.len(),
            logits.len()
        )));
    }
    let eval = |z: Vec<f64>| ProbMap::from_logits(height, width, num_classes, z).and_then(|p| objective(&p));
    let mut out = GradCheck { max_abs_error: 0.0, max_rel_error: 0.0, entries: logits.len() };
    for i in 0..logits.len() {
        let mut plus = logits.to_vec();
        plus[i] += step;
        let mut minus = logits.to_vec();
        minus[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let abs = (analytic[i] - numeric).abs();
        let scale = analytic[i].abs().max(numeric.abs());
        let rel = if scale < 1e-12 { 0.0 } else { abs / scale };
        out.max_abs_error = out.max_abs_error.max(abs);
        out.max_rel_error = out.max_rel_error.max(rel);
    }
    Ok(out)
}
