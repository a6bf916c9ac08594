//! Confusion-matrix accumulation and precision / recall / IoU reporting.
//!
//! Metrics whose denominator is zero are `None` rather than `0.0` or NaN and
//! are left out of every mean.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::types::{ClassSpec, LabelMap};

/// `counts[g * C + p]` = number of pixels with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::DimensionMismatch(format!(
                "{num_classes} classes need {} counts, got {}",
                num_classes * num_classes,
                counts.len()
            )));
        }
        Ok(Self { num_classes, counts })
    }

    /// Builds a matrix from a single prediction / ground-truth pair.
    pub fn from_maps(num_classes: usize, pred: &LabelMap, gt: &LabelMap) -> Result<Self> {
        let mut cm = Self::new(num_classes);
        cm.accumulate(pred, gt)?;
        Ok(cm)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds every pixel whose ground truth is not the ignore id. The matrix is
    /// left untouched when an error is returned.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        pred.same_shape(gt.height(), gt.width())?;
        let c = self.num_classes;
        for px in 0..gt.len() {
            let Some(g) = gt.class_at(px) else { continue };
            if g >= c {
                return Err(Error::InvalidClass(g));
            }
            let p = pred.data()[px] as usize;
            if pred.is_ignored(px) || p >= c {
                return Err(Error::InvalidClass(p));
            }
        }
        for px in 0..gt.len() {
            if let Some(g) = gt.class_at(px) {
                self.counts[g * c + pred.data()[px] as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "cannot merge {}-class and {}-class confusion matrices",
                self.num_classes, other.num_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub iou: Option<f64>,
    /// Ground-truth pixel count.
    pub support: u64,
}

impl ClassMetrics {
    pub fn is_fully_defined(&self) -> bool {
        self.precision.is_some() && self.recall.is_some() && self.iou.is_some()
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let c = cm.num_classes();
    (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let predicted: u64 = (0..c).map(|g| cm.get(g, k)).sum();
            let actual: u64 = (0..c).map(|p| cm.get(k, p)).sum();
            let fp = predicted - tp;
            let fn_ = actual - tp;
            ClassMetrics {
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                iou: ratio(tp, tp + fp + fn_),
                support: actual,
            }
        })
        .collect()
}

/// IoU implied by a precision / recall pair: `1 / (1/P + 1/R - 1)`.
pub fn iou_from_pr(precision: f64, recall: f64) -> Result<f64> {
    for (name, v) in [("precision", precision), ("recall", recall)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::DomainError(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(1.0 / (1.0 / precision + 1.0 / recall - 1.0))
}

/// An importance group: a name and its member class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    pub classes: Vec<usize>,
}

/// Disjoint class groups ordered by ascending importance (`G1` first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    num_classes: usize,
    groups: Vec<Group>,
}

impl GroupSpec {
    pub fn new(num_classes: usize, groups: Vec<Group>) -> Result<Self> {
        let mut owner = vec![None::<usize>; num_classes];
        for (gi, g) in groups.iter().enumerate() {
            for &k in &g.classes {
                let slot = owner.get_mut(k).ok_or(Error::InvalidClass(k))?;
                if let Some(prev) = *slot {
                    return Err(Error::InvalidConfig(format!(
                        "class {k} appears in both {:?} and {:?}",
                        groups[prev].name, g.name
                    )));
                }
                *slot = Some(gi);
            }
        }
        Ok(Self { num_classes, groups })
    }

    /// Builds groups from class names resolved against `spec`.
    pub fn from_names(spec: &ClassSpec, groups: &[(&str, &[&str])]) -> Result<Self> {
        let mut out = Vec::with_capacity(groups.len());
        for (name, members) in groups {
            let classes = members
                .iter()
                .map(|m| spec.class_id(m).ok_or_else(|| Error::InvalidConfig(format!("unknown class name {m:?}"))))
                .collect::<Result<Vec<_>>>()?;
            out.push(Group { name: String::from(*name), classes });
        }
        Self::new(spec.num_classes(), out)
    }

    /// A single group holding every class.
    pub fn single(num_classes: usize) -> Self {
        Self { num_classes, groups: vec![Group { name: "all".into(), classes: (0..num_classes).collect() }] }
    }

    /// CamVid importance ranking.
    pub fn camvid() -> Self {
        Self::from_names(
            &ClassSpec::camvid(),
            &[
                ("G1", &["sky", "building", "tree"]),
                ("G2", &["pole", "road", "sidewalk", "fence"]),
                ("G3", &["sign", "car", "pedestrian", "bicyclist"]),
            ],
        )
        .expect("preset is valid")
    }

    /// Cityscapes importance ranking.
    pub fn cityscapes() -> Self {
        Self::from_names(
            &ClassSpec::cityscapes(),
            &[
                ("G1", &["road", "building", "wall", "tree", "terrain", "sky"]),
                ("G2", &["car", "sidewalk", "fence", "pole", "pedestrian"]),
                ("G3", &["sign", "rider", "truck", "bus", "train", "motorcycle", "bicycle", "traffic light"]),
            ],
        )
        .expect("preset is valid")
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Index of the group containing `class`.
    pub fn group_of(&self, class: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.classes.contains(&class))
    }

    /// Per-class group index, failing on the first class no group covers.
    pub fn assignment(&self) -> Result<Vec<usize>> {
        let mut out = vec![usize::MAX; self.num_classes];
        for (gi, g) in self.groups.iter().enumerate() {
            for &k in &g.classes {
                out[k] = gi;
            }
        }
        match out.iter().position(|&g| g == usize::MAX) {
            Some(k) => Err(Error::UngroupedClass(k)),
            None => Ok(out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub name: String,
    pub means: MeanMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub overall: MeanMetrics,
    pub groups: Vec<GroupSummary>,
    /// Classes with at least one undefined metric.
    pub excluded: Vec<usize>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn means(metrics: &[ClassMetrics], classes: impl Iterator<Item = usize> + Clone) -> MeanMetrics {
    let pick = |f: fn(&ClassMetrics) -> Option<f64>| mean_of(classes.clone().filter_map(|k| metrics.get(k)).map(f));
    MeanMetrics { precision: pick(|m| m.precision), recall: pick(|m| m.recall), iou: pick(|m| m.iou) }
}

/// Unweighted class means overall and per group; undefined values are skipped.
pub fn summarize(metrics: &[ClassMetrics], groups: &GroupSpec) -> Summary {
    Summary {
        overall: means(metrics, 0..metrics.len()),
        groups: groups
            .groups()
            .iter()
            .map(|g| GroupSummary { name: g.name.clone(), means: means(metrics, g.classes.iter().copied()) })
            .collect(),
        excluded: metrics.iter().enumerate().filter(|(_, m)| !m.is_fully_defined()).map(|(k, _)| k).collect(),
    }
}

/// Confusion matrix, per-class metrics and summary for one labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub classes: Vec<ClassMetrics>,
    pub summary: Summary,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix, groups: &GroupSpec) -> Self {
        let classes = class_metrics(&confusion);
        let summary = summarize(&classes, groups);
        Self { confusion, classes, summary }
    }
}

pub fn evaluate(num_classes: usize, pred: &LabelMap, gt: &LabelMap, groups: &GroupSpec) -> Result<EvalReport> {
    let cm = ConfusionMatrix::from_maps(num_classes, pred, gt)?;
    Ok(EvalReport::from_confusion(cm, groups))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(data: &[u8]) -> LabelMap {
        LabelMap::new(1, data.len(), data.to_vec()).unwrap()
    }

    #[test]
    fn accumulate_hand_count() {
        let cm = ConfusionMatrix::from_maps(2, &lm(&[0, 1, 1, 1]), &lm(&[0, 0, 1, 1])).unwrap();
        assert_eq!(cm.counts(), &[1, 1, 0, 2]);
    }

    #[test]
    fn accumulate_skips_ignore() {
        let cm = ConfusionMatrix::from_maps(2, &lm(&[1, 0]), &lm(&[255, 0])).unwrap();
        assert_eq!(cm.counts(), &[1, 0, 0, 0]);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn accumulate_rejects_bad_inputs_without_mutating() {
        let mut cm = ConfusionMatrix::new(2);
        assert!(matches!(cm.accumulate(&lm(&[0, 1]), &lm(&[0, 1, 1])), Err(Error::ShapeMismatch { .. })));
        assert_eq!(cm.accumulate(&lm(&[0, 2]), &lm(&[0, 1])), Err(Error::InvalidClass(2)));
        assert_eq!(cm.accumulate(&lm(&[0, 255]), &lm(&[0, 1])), Err(Error::InvalidClass(255)));
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let m = lm(&[0, 2, 1, 1, 2, 0]);
        let cm = ConfusionMatrix::from_maps(3, &m, &m).unwrap();
        for g in 0..3 {
            for p in 0..3 {
                if g != p {
                    assert_eq!(cm.get(g, p), 0);
                }
            }
        }
        for m in class_metrics(&cm) {
            assert_eq!((m.precision, m.recall, m.iou), (Some(1.0), Some(1.0), Some(1.0)));
        }
    }

    #[test]
    fn class_metrics_hand_values() {
        let cm = ConfusionMatrix::from_counts(2, vec![1, 1, 0, 2]).unwrap();
        let m = class_metrics(&cm);
        assert_eq!(m[0].precision, Some(1.0));
        assert_eq!(m[0].recall, Some(0.5));
        assert_eq!(m[0].iou, Some(0.5));
        assert!((m[1].precision.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m[1].recall, Some(1.0));
        assert!((m[1].iou.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((m[0].support, m[1].support), (2, 2));
    }

    #[test]
    fn absent_class_is_undefined() {
        let cm = ConfusionMatrix::from_counts(3, vec![2, 0, 0, 0, 3, 0, 0, 0, 0]).unwrap();
        let m = class_metrics(&cm)[2];
        assert_eq!((m.precision, m.recall, m.iou), (None, None, None));
    }

    #[test]
    fn iou_from_pr_examples() {
        assert!((iou_from_pr(0.888, 0.459).unwrap() - 0.4339).abs() < 5e-5);
        assert!((iou_from_pr(0.777, 0.904).unwrap() - 0.7178).abs() < 5e-5);
        assert_eq!(iou_from_pr(1.0, 1.0).unwrap(), 1.0);
        assert!(iou_from_pr(0.0, 0.5).is_err());
        assert!(iou_from_pr(0.5, -1.0).is_err());
        assert!(iou_from_pr(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn summarize_examples() {
        let metrics = [
            ClassMetrics { precision: Some(1.0), recall: Some(0.8), iou: Some(0.5), support: 1 },
            ClassMetrics { precision: Some(1.0), recall: Some(0.9), iou: Some(2.0 / 3.0), support: 1 },
        ];
        let groups = GroupSpec::new(2, vec![Group { name: "G1".into(), classes: vec![0, 1] }]).unwrap();
        let s = summarize(&metrics, &groups);
        assert!((s.overall.recall.unwrap() - 0.85).abs() < 1e-12);
        assert!((s.overall.iou.unwrap() - 0.583_333_333_333_333_4).abs() < 1e-12);
        assert!((s.groups[0].means.recall.unwrap() - 0.85).abs() < 1e-12);
        assert!(s.excluded.is_empty());
    }

    #[test]
    fn summarize_group_and_exclusions() {
        let cm = ConfusionMatrix::from_counts(3, vec![1, 1, 0, 0, 2, 0, 0, 0, 0]).unwrap();
        let metrics = class_metrics(&cm);
        let groups = GroupSpec::new(
            3,
            vec![Group { name: "G1".into(), classes: vec![0] }, Group { name: "G3".into(), classes: vec![1] }],
        )
        .unwrap();
        let s = summarize(&metrics, &groups);
        assert_eq!(s.groups[1].means.recall, Some(1.0));
        assert_eq!(s.excluded, vec![2]);
        assert!((s.overall.recall.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn group_spec_validation() {
        assert!(GroupSpec::new(2, vec![Group { name: "a".into(), classes: vec![2] }]).is_err());
        assert!(GroupSpec::new(
            3,
            vec![Group { name: "a".into(), classes: vec![0, 1] }, Group { name: "b".into(), classes: vec![1] },]
        )
        .is_err());
        let partial = GroupSpec::new(3, vec![Group { name: "a".into(), classes: vec![0, 1] }]).unwrap();
        assert_eq!(partial.assignment(), Err(Error::UngroupedClass(2)));
    }

    #[test]
    fn presets_cover_all_classes() {
        assert_eq!(GroupSpec::camvid().assignment().unwrap().len(), 11);
        assert_eq!(GroupSpec::cityscapes().assignment().unwrap().len(), 19);
        let cs = ClassSpec::cityscapes();
        let g = GroupSpec::cityscapes();
        assert_eq!(g.group_of(cs.class_id("rider").unwrap()), Some(2));
        assert_eq!(g.group_of(cs.class_id("road").unwrap()), Some(0));
    }
}
