#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use segrecall_core::archcalc::{param_count, receptive_field, LayerSpec};
use segrecall_core::decision::{decide_bayes, decide_ml, estimate_priors, PriorCounts, PriorsMap};
use segrecall_core::gcn::{gcn_forward, normalize_adjacency, GcnWeights, GraphSpec};
use segrecall_core::linalg::Matrix;
use segrecall_core::losses::{cross_entropy, FrequencyWeights};
use segrecall_core::metrics::{class_metrics, iou_from_pr, ConfusionMatrix};
use segrecall_core::types::{one_hot, validate_probmap, ClassSpec};
use segrecall_core::{LabelMap, ProbMap};

fn label_map(h: usize, w: usize, c: usize, ignore: bool) -> impl Strategy<Value = LabelMap> {
    let value = if ignore { prop_oneof![9 => 0..c as u8, 1 => Just(255u8)].boxed() } else { (0..c as u8).boxed() };
    proptest::collection::vec(value, h * w).prop_map(move |d| LabelMap::new(h, w, d).unwrap())
}

fn prob_map(h: usize, w: usize, c: usize) -> impl Strategy<Value = ProbMap> {
    proptest::collection::vec(-4.0f64..4.0, h * w * c).prop_map(move |z| ProbMap::from_logits(h, w, c, z).unwrap())
}

proptest! {
    #[test]
    fn one_hot_has_single_unit_entry(c in 1usize..40, k in 0usize..40) {
        prop_assume!(k < c);
        let spec = ClassSpec::with_default_ignore((0..c).map(|i| format!("c{i}"))).unwrap();
        let v = one_hot(k, &spec).unwrap();
        prop_assert_eq!(v.iter().sum::<f64>(), 1.0);
        prop_assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn accumulate_is_additive(
        (a_gt, a_pred, b_gt, b_pred) in (2usize..5).prop_flat_map(|c| (
            label_map(4, 6, c, true), label_map(4, 6, c, false),
            label_map(4, 6, c, true), label_map(4, 6, c, false),
        ))
    ) {
        let c = 5;
        let mut split = ConfusionMatrix::from_maps(c, &a_pred, &a_gt).unwrap();
        split.merge(&ConfusionMatrix::from_maps(c, &b_pred, &b_gt).unwrap()).unwrap();
        let cat = |x: &LabelMap, y: &LabelMap| {
            let mut d = x.data().to_vec();
            d.extend_from_slice(y.data());
            LabelMap::new(8, 6, d).unwrap()
        };
        let joint = ConfusionMatrix::from_maps(c, &cat(&a_pred, &b_pred), &cat(&a_gt, &b_gt)).unwrap();
        prop_assert_eq!(split, joint);
    }

    #[test]
    fn iou_identity_and_bounds(
        (gt, pred) in (2usize..6).prop_flat_map(|c| (label_map(8, 8, c, true), label_map(8, 8, c, false)))
    ) {
        let cm = ConfusionMatrix::from_maps(6, &pred, &gt).unwrap();
        for m in class_metrics(&cm) {
            if let (Some(p), Some(r), Some(i)) = (m.precision, m.recall, m.iou) {
                prop_assert!(i <= p + 1e-15 && i <= r + 1e-15);
                if p > 0.0 && r > 0.0 {
                    prop_assert!((iou_from_pr(p, r).unwrap() - i).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn class_permutation_permutes_metrics(
        (gt, pred, perm) in (2usize..5).prop_flat_map(|c| (
            label_map(6, 6, c, true),
            label_map(6, 6, c, false),
            Just((0..c).collect::<Vec<_>>()).prop_shuffle(),
        ))
    ) {
        let c = perm.len();
        let relabel = |m: &LabelMap| {
            let d = m.data().iter().map(|&v| if v == 255 { 255 } else { perm[v as usize] as u8 }).collect();
            LabelMap::new(6, 6, d).unwrap()
        };
        let before = class_metrics(&ConfusionMatrix::from_maps(c, &pred, &gt).unwrap());
        let after = class_metrics(&ConfusionMatrix::from_maps(c, &relabel(&pred), &relabel(&gt)).unwrap());
        for k in 0..c {
            prop_assert_eq!(before[k], after[perm[k]]);
        }
    }

    #[test]
    fn cross_entropy_non_negative((p, gt) in (2usize..5).prop_flat_map(|c| (prob_map(3, 3, c), label_map(3, 3, c, true)))) {
        prop_assert!(cross_entropy(&p, &gt, None).unwrap() >= 0.0);
    }

    #[test]
    fn frequency_weights_decrease(f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
        prop_assume!(f1 < f2);
        let w = FrequencyWeights::new(vec![f1, f2], 1.02).unwrap();
        prop_assert!(w.weights()[0] > w.weights()[1]);
    }

    #[test]
    fn uniform_priors_reproduce_bayes(p in (2usize..6).prop_flat_map(|c| prob_map(5, 5, c))) {
        let pr = PriorsMap::uniform(5, 5, p.num_classes()).unwrap();
        prop_assert_eq!(decide_ml(&p, &pr).unwrap(), decide_bayes(&p));
    }

    #[test]
    fn ml_is_invariant_to_per_pixel_prior_scaling(
        (p, raw) in (2usize..5).prop_flat_map(|c| (prob_map(3, 3, c), proptest::collection::vec(0.05f64..0.5, 9 * c))),
        scale in 0.5f64..2.0,
    ) {
        let c = p.num_classes();
        let pr = PriorsMap::new(3, 3, c, raw.clone(), 0.0, 1e-5).unwrap();
        let scaled = PriorsMap::new(3, 3, c, raw.iter().map(|v| v * scale).collect(), 0.0, 1e-5).unwrap();
        prop_assert_eq!(decide_ml(&p, &pr).unwrap(), decide_ml(&p, &scaled).unwrap());
    }

    #[test]
    fn priors_sum_to_one_without_smoothing(
        maps in (2usize..5).prop_flat_map(|c| proptest::collection::vec(label_map(4, 5, c, true), 1..6))
    ) {
        let mut counts = PriorCounts::new(4, 5, 5);
        for m in &maps { counts.add(m).unwrap(); }
        let planes = counts.frequencies().unwrap();
        for px in 0..20 {
            let s: f64 = planes.iter().map(|p| p[px]).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
        // flooring only raises entries
        let pr = estimate_priors(&maps, 5, 0.0, 1e-5).unwrap();
        for px in 0..20 {
            for (k, plane) in planes.iter().enumerate() {
                prop_assert_eq!(pr.pixel(px)[k], plane[px].max(1e-5));
            }
        }
    }

    #[test]
    fn prior_counts_merge_matches_sequential(
        maps in proptest::collection::vec(label_map(3, 3, 3, true), 2..6)
    ) {
        let mut seq = PriorCounts::new(3, 3, 3);
        for m in &maps { seq.add(m).unwrap(); }
        let (left, right) = maps.split_at(maps.len() / 2);
        let mut a = PriorCounts::new(3, 3, 3);
        for m in left { a.add(m).unwrap(); }
        let mut b = PriorCounts::new(3, 3, 3);
        for m in right { b.add(m).unwrap(); }
        a.merge(&b).unwrap();
        prop_assert_eq!(a, seq);
    }

    #[test]
    fn row_stochastic_rows_sum_to_one(n in 1usize..8, seed in proptest::collection::vec(0.0f64..3.0, 64)) {
        let g = GraphSpec::new(n, seed[..n * n].to_vec(), true).unwrap();
        let a = normalize_adjacency(&g).unwrap();
        for i in 0..n {
            prop_assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gcn_is_exactly_permutation_equivariant(
        adj in proptest::collection::vec(prop_oneof![Just(0.0f64), 0.0f64..2.0], 25),
        h in proptest::collection::vec(-3.0f64..3.0, 15),
        w0 in proptest::collection::vec(-1.0f64..1.0, 12),
        w1 in proptest::collection::vec(-1.0f64..1.0, 8),
        perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
        symmetric in any::<bool>(),
    ) {
        use segrecall_core::gcn::Normalization;
        let norm = if symmetric { Normalization::Symmetric } else { Normalization::RowStochastic };
        let g = GraphSpec::new(5, adj, true).unwrap().with_normalization(norm);
        let w = GcnWeights::new(vec![Matrix::new(3, 4, w0).unwrap(), Matrix::new(4, 2, w1).unwrap()], 0.01).unwrap();
        let h = Matrix::new(5, 3, h).unwrap();
        let mut hp = Matrix::zeros(5, 3);
        for i in 0..5 {
            for c in 0..3 {
                hp.set(perm[i], c, h.get(i, c));
            }
        }
        let out = gcn_forward(&h, &g, &w).unwrap();
        let outp = gcn_forward(&hp, &g.permuted(&perm).unwrap(), &w).unwrap();
        for i in 0..5 {
            for c in 0..2 {
                prop_assert_eq!(out.get(i, c).to_bits(), outp.get(perm[i], c).to_bits());
            }
        }
    }

    #[test]
    fn receptive_field_monotone_in_kernel_and_dilation(
        ks in proptest::collection::vec(1usize..8, 1..5),
        ds in proptest::collection::vec(1usize..4, 5),
        ss in proptest::collection::vec(1usize..3, 5),
        which in 0usize..5,
    ) {
        let chain: Vec<_> = ks.iter().enumerate().map(|(i, &k)| LayerSpec::conv(k, ss[i], ds[i], 4, 4)).collect();
        let base = receptive_field(&chain).unwrap();
        let i = which % chain.len();
        let mut bigger_k = chain.clone();
        bigger_k[i].kernel = (bigger_k[i].kernel.0 + 1, bigger_k[i].kernel.1 + 1);
        let mut bigger_d = chain.clone();
        bigger_d[i].dilation += 1;
        let rk = receptive_field(&bigger_k).unwrap();
        let rd = receptive_field(&bigger_d).unwrap();
        prop_assert!(rk.0 >= base.0 && rk.1 >= base.1);
        prop_assert!(rd.0 >= base.0 && rd.1 >= base.1);
    }

    #[test]
    fn factorized_pair_vs_square(k in 2usize..12, d in 1usize..4, c in 1usize..64) {
        let pair = [LayerSpec::factorized(k, d, c, c)];
        let square = [LayerSpec::conv(k, 1, d, c, c)];
        prop_assert_eq!(receptive_field(&pair).unwrap(), receptive_field(&square).unwrap());
        let (fp, sq) = (param_count(&pair, false).unwrap(), param_count(&square, false).unwrap());
        // 2k < k^2 only from k = 3; at k = 2 both are 4 C^2
        if k == 2 {
            prop_assert_eq!(fp, sq);
        } else {
            prop_assert!(fp < sq);
        }
    }

    #[test]
    fn normalized_probmaps_validate(p in (1usize..6).prop_flat_map(|c| prob_map(2, 3, c))) {
        prop_assert!(validate_probmap(p.data(), p.num_classes()).is_ok());
    }
}

#[test]
fn identity_gcn_reduces_to_softmax_of_one_hot_scores() {
    use segrecall_core::gcn::{gcn_classify, FeatureMap};
    let c = 4;
    let g = GraphSpec::new(c, Matrix::identity(c).into_data(), true).unwrap();
    let w = GcnWeights::new(vec![Matrix::identity(c), Matrix::identity(c)], 0.01).unwrap();
    let feats = vec![0.0, 3.0, 1.0, -1.0];
    let p = gcn_classify(&FeatureMap::new(1, 1, c, feats.clone()).unwrap(), &g, &w).unwrap();
    let z: f64 = feats.iter().map(|v: &f64| v.exp()).sum();
    for k in 0..c {
        assert!((p.pixel(0)[k] - feats[k].exp() / z).abs() < 1e-15);
    }
    let ident = gcn_forward(&Matrix::identity(c), &g, &w).unwrap();
    assert_eq!(ident, Matrix::identity(c));
}
