//! Implementation-independent oracles for the numerical kernels.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segrecall_core::decision::{decide_bayes, decide_ml, gaussian_smooth, PriorsMap};
use segrecall_core::gcn::{
    build_graph, classify_features, gcn_forward, ClassifierMatrix, FeatureMap, GcnWeights, GraphSpec,
};
use segrecall_core::linalg::Matrix;
use segrecall_core::losses::{ial, ial_gradient, ImportanceConfig};
use segrecall_core::metrics::{class_metrics, ConfusionMatrix, Group, GroupSpec};
use segrecall_core::{LabelMap, ProbMap};

fn random_labels(rng: &mut impl Rng, h: usize, w: usize, c: usize, ignore: bool) -> LabelMap {
    let data =
        (0..h * w).map(|_| if ignore && rng.random_bool(0.1) { 255 } else { rng.random_range(0..c) as u8 }).collect();
    LabelMap::new(h, w, data).unwrap()
}

fn random_logits(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Precision / recall / IoU via direct pixel counting per class.
fn naive_metrics(pred: &LabelMap, gt: &LabelMap, c: usize) -> Vec<(Option<f64>, Option<f64>, Option<f64>)> {
    let mut out = Vec::new();
    for k in 0..c {
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for y in 0..gt.height() {
            for x in 0..gt.width() {
                let g = gt.get(y, x);
                if g == 255 {
                    continue;
                }
                let p = pred.get(y, x);
                match (g as usize == k, p as usize == k) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fneg += 1,
                    (false, false) => {}
                }
            }
        }
        let div = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        out.push((div(tp, tp + fp), div(tp, tp + fneg), div(tp, tp + fp + fneg)));
    }
    out
}

#[test]
fn metrics_match_triple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let c = rng.random_range(2..=5);
        let gt = random_labels(&mut rng, 16, 16, c, true);
        let pred = random_labels(&mut rng, 16, 16, c, false);
        let got = class_metrics(&ConfusionMatrix::from_maps(c, &pred, &gt).unwrap());
        let want = naive_metrics(&pred, &gt, c);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((g.precision, g.recall, g.iou), *w);
        }
    }
}

/// Dense 2-D convolution with an explicit outer-product kernel and mirror
/// padding computed independently of the library helper.
fn dense_gaussian(field: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = taps.iter().sum();
    let mirror = |i: i64, n: usize| -> usize {
        let n = n as i64;
        let mut i = i;
        while i < 0 || i >= n {
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * (n - 1) - i;
            }
        }
        i as usize
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let wgt = taps[(dy + r) as usize] * taps[(dx + r) as usize] / (norm * norm);
                    acc += wgt * field[mirror(y as i64 + dy, h) * w + mirror(x as i64 + dx, w)];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[test]
fn separable_smoothing_matches_dense_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for sigma in [0.5, 1.0, 2.0, 3.0] {
        let field: Vec<f64> = (0..49).map(|_| rng.random::<f64>()).collect();
        let got = gaussian_smooth(&field, 7, 7, sigma).unwrap();
        let want = dense_gaussian(&field, 7, 7, sigma);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "sigma {sigma}: {a} vs {b}");
        }
    }
}

/// Frozen-weight IAL evaluated directly from logits, group by group.
fn frozen_ial_from_logits(logits: &[f64], labels: &[u8], c: usize, group_of: &[usize], multipliers: &[f64]) -> f64 {
    let groups = multipliers.len();
    let mut sums = vec![0.0; groups];
    let mut counts = vec![0usize; groups];
    for (px, &y) in labels.iter().enumerate() {
        if y == 255 {
            continue;
        }
        let z = &logits[px * c..(px + 1) * c];
        let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
        let g = group_of[y as usize];
        sums[g] += lse - z[y as usize];
        counts[g] += 1;
    }
    (0..groups).filter(|&g| counts[g] > 0).map(|g| multipliers[g] * sums[g] / counts[g] as f64).sum()
}

fn dynamic_weight_oracle(p: &[f64], labels: &[u8], c: usize, target: &[Option<f64>], lambda: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for (px, &y) in labels.iter().enumerate() {
        if y == 255 {
            continue;
        }
        if let Some(m) = target[y as usize] {
            let d = (m + lambda).sqrt() * (p[px * c + y as usize] - m);
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn four_class_groups() -> GroupSpec {
    GroupSpec::new(
        4,
        vec![
            Group { name: "G1".into(), classes: vec![0] },
            Group { name: "G2".into(), classes: vec![1, 3] },
            Group { name: "G3".into(), classes: vec![2] },
        ],
    )
    .unwrap()
}

#[test]
fn ial_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = ImportanceConfig::with_defaults(four_class_groups()).unwrap();
    let group_of = [0usize, 1, 2, 1];
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (h, w, c) = (4, 4, 4);
        let logits = random_logits(&mut rng, h * w * c);
        let gt = random_labels(&mut rng, h, w, c, true);
        let p = ProbMap::from_logits(h, w, c, logits.clone()).unwrap();

        let f: Vec<f64> =
            cfg.targets().iter().map(|m| dynamic_weight_oracle(p.data(), gt.data(), c, m, cfg.lambda())).collect();
        let breakdown = ial(&p, &gt, &cfg).unwrap();
        for (a, b) in f.iter().zip(&breakdown.dynamic_weights) {
            assert!((a - b).abs() < 1e-12);
        }
        let a = cfg.alpha();
        let multipliers = [1.0, f[0] + a, (f[1] + a) * (f[2] + a)];

        let analytic = ial_gradient(&p, &gt, &cfg).unwrap();
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus[i] += step;
            let mut minus = logits.clone();
            minus[i] -= step;
            let numeric = (frozen_ial_from_logits(&plus, gt.data(), c, &group_of, &multipliers)
                - frozen_ial_from_logits(&minus, gt.data(), c, &group_of, &multipliers))
                / (2.0 * step);
            let scale = analytic[i].abs().max(numeric.abs());
            if scale > 1e-12 {
                worst = worst.max((analytic[i] - numeric).abs() / scale);
            }
        }
    }
    assert!(worst < 1e-5, "max relative error {worst}");
}

#[test]
fn ial_total_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = ImportanceConfig::with_defaults(four_class_groups()).unwrap();
    let group_of = [0usize, 1, 2, 1];
    for _ in 0..20 {
        let logits = random_logits(&mut rng, 6 * 5 * 4);
        let gt = random_labels(&mut rng, 6, 5, 4, true);
        let p = ProbMap::from_logits(6, 5, 4, logits.clone()).unwrap();
        let f: Vec<f64> =
            cfg.targets().iter().map(|m| dynamic_weight_oracle(p.data(), gt.data(), 4, m, cfg.lambda())).collect();
        let multipliers = [1.0, f[0] + 1.0, (f[1] + 1.0) * (f[2] + 1.0)];
        let want = frozen_ial_from_logits(&logits, gt.data(), 4, &group_of, &multipliers);
        let got = ial(&p, &gt, &cfg).unwrap();
        assert!((got.total - want).abs() < 1e-12);
        assert!((got.recombine() - got.total).abs() < 1e-12);
    }
}

fn dense_forward(a: &[Vec<f64>], h: &[Vec<f64>], ws: &[Vec<Vec<f64>>], slope: f64) -> Vec<Vec<f64>> {
    let mul = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..x.len()).map(|i| (0..y[0].len()).map(|j| (0..y.len()).map(|k| x[i][k] * y[k][j]).sum()).collect()).collect()
    };
    let mut x = h.to_vec();
    for (l, w) in ws.iter().enumerate() {
        x = mul(&mul(a, &x), w);
        if l + 1 < ws.len() {
            for row in &mut x {
                for v in row {
                    if *v < 0.0 {
                        *v *= slope;
                    }
                }
            }
        }
    }
    x
}

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Vec<Vec<f64>> {
    (0..r).map(|_| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn gcn_forward_matches_dense_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let groups = GroupSpec::new(
        3,
        vec![
            Group { name: "G1".into(), classes: vec![2] },
            Group { name: "G2".into(), classes: vec![0] },
            Group { name: "G3".into(), classes: vec![1] },
        ],
    )
    .unwrap();
    let g = build_graph(&groups).unwrap();
    let a: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            let row: Vec<f64> = (0..3).map(|j| g.edge(i, j)).collect();
            let s: f64 = row.iter().sum();
            row.iter().map(|v| v / s).collect()
        })
        .collect();
    let h = random_matrix(&mut rng, 3, 4);
    let ws = vec![random_matrix(&mut rng, 4, 5), random_matrix(&mut rng, 5, 2)];
    let weights = GcnWeights::new(ws.iter().map(|w| Matrix::from_rows(w).unwrap()).collect(), 0.01).unwrap();
    let got = gcn_forward(&Matrix::from_rows(&h).unwrap(), &g, &weights).unwrap();
    let want = dense_forward(&a, &h, &ws, 0.01);
    for i in 0..3 {
        for j in 0..2 {
            assert!((got.get(i, j) - want[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn classify_matches_per_pixel_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let feats: Vec<f64> = (0..2 * 2 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cls = random_matrix(&mut rng, 3, 4);
    let p = classify_features(
        &FeatureMap::new(2, 2, 4, feats.clone()).unwrap(),
        &ClassifierMatrix::new(Matrix::from_rows(&cls).unwrap()),
    )
    .unwrap();
    for px in 0..4 {
        let f = &feats[px * 4..(px + 1) * 4];
        let scores: Vec<f64> = cls.iter().map(|r| r.iter().zip(f).map(|(a, b)| a * b).sum()).collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        for k in 0..3 {
            assert!((p.pixel(px)[k] - scores[k].exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn rule_disagreement_matches_pixel_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (h, w, c) = (8, 8, 3);
    let p = ProbMap::from_logits(h, w, c, random_logits(&mut rng, h * w * c)).unwrap();
    let priors: Vec<f64> = (0..h * w).flat_map(|_| [0.7, 0.25, 0.05]).collect();
    let priors = PriorsMap::new(h, w, c, priors, 0.0, 1e-5).unwrap();
    let gt = random_labels(&mut rng, h, w, c, true);

    let mut expected = 0;
    for px in 0..h * w {
        let probs = p.pixel(px);
        let pr = priors.pixel(px);
        let best = |score: &dyn Fn(usize) -> f64| {
            let mut b = 0;
            for k in 1..c {
                if score(k) > score(b) {
                    b = k;
                }
            }
            b
        };
        if best(&|k| probs[k]) != best(&|k| probs[k] / pr[k]) {
            expected += 1;
        }
    }
    let cmp = segrecall_core::decision::compare_rules(&p, &priors, &gt, &GroupSpec::single(c)).unwrap();
    assert_eq!(cmp.disagreement, expected);
    assert!(expected > 0, "fixture should exercise the priors");
    assert_eq!(decide_bayes(&p).data().len(), h * w);
    assert_eq!(decide_ml(&p, &priors).unwrap().data().len(), h * w);
}

#[test]
fn graph_from_json_like_adjacency_keeps_weights() {
    let g = GraphSpec::new(2, vec![0.0, 2.0, 0.0, 0.0], true).unwrap();
    assert_eq!(g.adjacency(), &[1.0, 2.0, 0.0, 1.0]);
}
