use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use bourne::encoders::{gcn_propagation, hgnn_propagation, PropLayer};
use bourne::graph::{build_graph, dual_transform, incidence, AttributedGraph, Pattern};
use bourne::injection::{anomaly_correlation, inject, InjectionConfig};
use bourne::metrics::{evaluate, roc_auc, roc_curve, trapezoid, EvalReport, Task};
use bourne::nn::Parameter;
use bourne::scoring::{node_score, ScoreWeights};
use bourne::synth::{erdos_renyi, SynthConfig};

fn graph_strategy() -> impl Strategy<Value = AttributedGraph> {
    (2usize..30).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 1..80),
            prop::collection::vec(-3.0f32..3.0, n * 3),
        )
            .prop_filter_map("needs an edge", |(n, raw, feats)| {
                let pairs: BTreeSet<(usize, usize)> = raw
                    .into_iter()
                    .filter(|(a, b)| a != b)
                    .map(|(a, b)| (a.min(b), a.max(b)))
                    .collect();
                if pairs.is_empty() {
                    return None;
                }
                let pairs: Vec<_> = pairs.into_iter().collect();
                build_graph(&pairs, Array2::from_shape_vec((n, 3), feats).unwrap()).ok()
            })
    })
}

fn permute_pattern(p: &Pattern, perm: &[usize]) -> Pattern {
    let mut rows = vec![Vec::new(); p.nrows()];
    for i in 0..p.nrows() {
        rows[perm[i]] = p.row(i).iter().map(|&j| perm[j]).collect();
    }
    Pattern::from_rows(p.ncols(), rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_degrees_and_incidence(g in graph_strategy()) {
        let inc = incidence(&g).0;
        prop_assert_eq!(inc.nrows(), g.num_nodes());
        prop_assert_eq!(inc.ncols(), g.num_edges());
        prop_assert!(inc.col_sums().iter().all(|&c| c == 2));
        let degrees: Vec<usize> = (0..g.num_nodes()).map(|v| g.degree(v)).collect();
        prop_assert_eq!(inc.row_sums(), degrees);
        prop_assert_eq!(g.adjacency().nnz(), 2 * g.num_edges());
        for (e, &(a, b)) in g.edges().iter().enumerate() {
            prop_assert!(a < b);
            prop_assert_eq!(g.edge_id(b, a), Some(e));
        }
    }

    #[test]
    fn dual_incidence_is_transpose(g in graph_strategy()) {
        let dual = dual_transform(&g).unwrap();
        prop_assert_eq!(dual.num_dual_nodes(), g.num_edges());
        prop_assert_eq!(dual.num_hyperedges(), g.num_nodes());
        prop_assert_eq!(dual.incidence, incidence(&g).0.transpose());
    }

    #[test]
    fn gcn_layer_is_permutation_equivariant(g in graph_strategy(), seed in any::<u64>()) {
        let n = g.num_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let adj = g.adjacency();
        let x = g.features().mapv(f64::from);
        let mut px = Array2::zeros(x.raw_dim());
        for (i, &pi) in perm.iter().enumerate() {
            px.row_mut(pi).assign(&x.row(i));
        }
        let layer = PropLayer {
            weight: Parameter::new("w", Array2::from_shape_fn((3, 2), |(i, j)| (i as f64 - j as f64) * 0.3 + 0.1)),
            slope: Parameter::scalar("a", 0.25),
        };
        let out = layer.forward(&gcn_propagation::<f64>(&adj).unwrap(), x.view()).unwrap().0;
        let pout = layer.forward(&gcn_propagation::<f64>(&permute_pattern(&adj, &perm)).unwrap(), px.view()).unwrap().0;
        for (i, &pi) in perm.iter().enumerate() {
            for (a, b) in out.row(i).iter().zip(pout.row(pi)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hgnn_operator_is_symmetric_with_unit_spectrum_bound(g in graph_strategy()) {
        let q = hgnn_propagation::<f64>(&dual_transform(&g).unwrap().incidence).unwrap().to_dense();
        let n = q.nrows();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((q[[i, j]] - q[[j, i]]).abs() < 1e-12);
            }
        }
        // Rayleigh quotient on the all-ones vector never exceeds 1.
        let ones = Array1::<f64>::ones(n);
        prop_assert!(ones.dot(&q.dot(&ones)) <= n as f64 + 1e-9);
    }

    #[test]
    fn score_is_scale_invariant_and_bounded(
        t in prop::collection::vec(-5.0f64..5.0, 8),
        p in prop::collection::vec(-5.0f64..5.0, 8),
        c in prop::collection::vec(-5.0f64..5.0, 8),
        k in 0.01f64..100.0,
        alpha in 0.0f64..=1.0,
        beta in 0.0f64..=1.0,
    ) {
        let w = ScoreWeights { alpha, beta };
        let (t, p, c) = (Array1::from(t), Array1::from(p), Array1::from(c));
        let s = node_score(t.view(), p.view(), c.view(), &w);
        let scaled = &t * k;
        let s2 = node_score(scaled.view(), (&p * 2.0).view(), c.view(), &w);
        prop_assert!((s - s2).abs() < 1e-9);
        prop_assert!((0.0..=w.max_score()).contains(&s));
    }

    #[test]
    fn auc_is_invariant_to_monotone_transforms(
        raw in prop::collection::vec((0u32..20, any::<bool>()), 2..60),
    ) {
        let scores: Vec<f64> = raw.iter().map(|r| f64::from(r.0)).collect();
        let labels: Vec<u8> = raw.iter().map(|r| u8::from(r.1)).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let auc = roc_auc(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (s * 0.37).exp() - 4.0).collect();
        prop_assert_eq!(auc, roc_auc(&warped, &labels).unwrap());
        prop_assert!((trapezoid(&roc_curve(&scores, &labels).unwrap()) - auc).abs() < 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((roc_auc(&flipped, &labels).unwrap() - (1.0 - auc)).abs() < 1e-12);
    }

    #[test]
    fn eval_report_roundtrips(
        raw in prop::collection::vec((prop::option::of(-1.0f64..1.0), any::<bool>()), 2..40),
    ) {
        let scores: Vec<Option<f64>> = raw.iter().map(|r| r.0).collect();
        let labels: Vec<u8> = raw.iter().map(|r| u8::from(r.1)).collect();
        let scored: Vec<u8> = raw.iter().filter(|r| r.0.is_some()).map(|r| u8::from(r.1)).collect();
        prop_assume!(scored.contains(&0) && scored.contains(&1));
        let r = evaluate(Task::Node, &scores, &labels, None, serde_json::json!({})).unwrap();
        prop_assert_eq!(r.num_scored + r.num_skipped, scores.len());
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn injection_invariants(seed in any::<u64>(), clique_size in 2usize..6, clique_count in 1usize..4) {
        let base = erdos_renyi(&SynthConfig {
            num_nodes: 120,
            edge_prob: 0.05,
            feature_dim: 8,
            seed,
            ..Default::default()
        })
        .unwrap();
        let cfg = InjectionConfig { clique_size, clique_count, candidate_pool: 10, attr_edge_count: 2, seed };
        let (g, report) = inject(&base, &cfg).unwrap();
        g.validate().unwrap();
        prop_assert_eq!(g.num_nodes(), base.num_nodes());
        prop_assert_eq!(g.num_edges(), base.num_edges() + report.structural_edges + report.attributive_edges);
        let labels = g.node_labels().unwrap();
        prop_assert_eq!(labels.iter().filter(|&&y| y == 1).count(), 2 * clique_size * clique_count);
        prop_assert_eq!(report.structural_nodes.len(), clique_size * clique_count);
        prop_assert!(report.structural_nodes.iter().all(|v| !report.attributive_nodes.contains(v)));
        for &e in &report.injected_edge_ids {
            prop_assert_eq!(g.edge_labels().unwrap()[e], 1);
        }
        let c = anomaly_correlation(&g).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert_eq!(report.anomaly_correlation, Some(c));
        let (again, report2) = inject(&base, &cfg).unwrap();
        prop_assert_eq!(&again, &g);
        prop_assert_eq!(report2, report);
    }
}
