mod common;

use hlhg_core::fixtures::{eight_node_edge_lists, eight_node_graphs};
use hlhg_core::model::{forward, Params};
use hlhg_core::tensor::masked_softmax_cross_entropy;
use hlhg_core::{normalize_adjacency, propagate_orders, DenseMatrix, EdgeList, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn features(n: usize, d: usize, seed: u64) -> DenseMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

#[test]
fn propagation_within_tolerance_on_all_fixtures() {
    let mut worst: f64 = 0.0;
    for (name, edges) in eight_node_edge_lists() {
        let g = normalize_adjacency(&EdgeList::new(edges.clone()), 8).unwrap();
        let a = common::normalized_adjacency(8, &edges);
        let x = features(8, 3, 1);
        for (k, got) in propagate_orders(&g, &x, 4).unwrap().iter().enumerate() {
            let expect = common::matmul(&common::power(&a, k + 1), &common::to_mat(&x));
            let err = common::relative_error(&common::to_mat(got), &expect);
            assert!(err <= 1e-6, "{name} k={}: {err}", k + 1);
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn forward_matches_dense_oracle() {
    let labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
    let labels_opt: Vec<Option<usize>> = labels.iter().copied().map(Some).collect();
    let mask: Vec<usize> = (0..8).collect();
    for ((name, g), (_, edges)) in eight_node_graphs().into_iter().zip(eight_node_edge_lists()) {
        let a = common::normalized_adjacency(8, &edges);
        // Input narrower and wider than the hidden layer, so both
        // multiplication orders run.
        for d in [3, 12] {
            let x = features(8, d, d as u64);
            let xm = common::to_mat(&x);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut configs = vec![ModelConfig::gcn(d, 4, 3)];
            configs.extend((1..=4).map(|p| ModelConfig::hlhg(p, d, 4, 3)));
            configs.extend((2..=3).map(|p| ModelConfig::concat(p, d, 4, 3)));
            for cfg in configs {
                let params = Params::<f64>::init(&cfg, &mut rng).unwrap();
                let (logits, _) = forward(&params, &g, &x, &cfg, &mut rng, false).unwrap();
                let w1: Vec<_> = params.layer1.iter().map(common::to_mat).collect();
                let w2: Vec<_> = params.layer2.iter().map(common::to_mat).collect();
                let expect = match cfg.variant {
                    hlhg_core::Variant::Hlhg => {
                        common::hlhg_forward(&a, &xm, &w1[0], &w2[0], cfg.order_p)
                    }
                    hlhg_core::Variant::GcnBaseline => common::gcn_forward(&a, &xm, &w1[0], &w2[0]),
                    hlhg_core::Variant::ConcatBaseline => common::concat_forward(&a, &xm, &w1, &w2),
                };
                let got = common::to_mat(&logits);
                let err = common::relative_error(&got, &expect);
                assert!(
                    err <= 1e-12,
                    "{name} d={d} {} p={}: {err}",
                    cfg.variant,
                    cfg.order_p
                );

                let (loss, _) = masked_softmax_cross_entropy(&logits, &labels_opt, &mask).unwrap();
                let oracle_loss = common::cross_entropy(&expect, &labels, &mask);
                assert!((loss - oracle_loss).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn single_precision_forward_tracks_oracle() {
    let (_, edges) = &eight_node_edge_lists()[1];
    let g = normalize_adjacency(&EdgeList::new(edges.clone()), 8).unwrap();
    let a = common::normalized_adjacency(8, edges);
    let x = features(8, 6, 2);
    let cfg = ModelConfig::hlhg(3, 6, 4, 3);
    let params = Params::<f64>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let p32 = params.cast::<f32>();
    let (logits, _) = forward(
        &p32,
        &g,
        &x.cast::<f32>(),
        &cfg,
        &mut ChaCha8Rng::seed_from_u64(0),
        false,
    )
    .unwrap();
    // The oracle runs on the rounded weights and inputs.
    let w1 = common::to_mat(&p32.layer1[0].cast());
    let w2 = common::to_mat(&p32.layer2[0].cast());
    let expect = common::hlhg_forward(&a, &common::to_mat(&x.cast::<f32>().cast()), &w1, &w2, 3);
    assert!(common::relative_error(&common::to_mat(&logits.cast()), &expect) <= 1e-5);
}
