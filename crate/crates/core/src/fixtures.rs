//! Small bundled graphs and a synthetic dataset generator.
//!
//! The fixed graphs back the gradient suite and the structural tests; the
//! planted-partition generator produces citation-like data (homophilous
//! edges, sparse class-correlated bag-of-words features) at any size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Splits};
use crate::error::Result;
use crate::graph::{normalize_adjacency, EdgeList, SparseGraph};
use crate::tensor::DenseMatrix;

/// Three nodes on a path, two classes, one node per split.
pub fn minimal_dataset() -> Dataset {
    let features = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]);
    Dataset::new(
        "minimal",
        &vec![(0, 1), (1, 2)].into(),
        features,
        vec![Some(0), Some(1), Some(0)],
        2,
        Splits {
            train: vec![0],
            val: vec![1],
            test: vec![2],
        },
    )
    .expect("minimal fixture is valid")
}

/// Named 8-node edge lists used by the gradient suite.
pub fn eight_node_edge_lists() -> Vec<(&'static str, Vec<(usize, usize)>)> {
    vec![
        (
            "ring-with-chords",
            vec![
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 6),
                (6, 7),
                (7, 0),
                (0, 4),
                (2, 6),
            ],
        ),
        (
            "two-communities",
            vec![
                (0, 1),
                (0, 2),
                (1, 2),
                (1, 3),
                (2, 3),
                (4, 5),
                (4, 6),
                (5, 7),
                (6, 7),
                (3, 4),
            ],
        ),
        (
            "star-and-path",
            vec![(0, 1), (0, 2), (0, 3), (0, 4), (4, 5), (5, 6), (6, 7)],
        ),
    ]
}

pub fn eight_node_graphs() -> Vec<(&'static str, SparseGraph)> {
    eight_node_edge_lists()
        .into_iter()
        .map(|(name, edges)| (name, normalize_adjacency(&EdgeList::new(edges), 8).unwrap()))
        .collect()
}

/// Six nodes: a triangle, a pendant path and an isolated node.
pub fn six_node_edges() -> Vec<(usize, usize)> {
    vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]
}

/// Parameters of [`planted_partition`].
#[derive(Debug, Clone)]
pub struct PlantedPartition {
    pub nodes: usize,
    pub classes: usize,
    pub feature_dim: usize,
    /// Expected undirected edges per node.
    pub avg_degree: f64,
    /// Probability that an edge stays inside its class.
    pub homophily: f64,
    /// Active features per node.
    pub words_per_node: usize,
    /// Probability that an active feature comes from the class's own block.
    pub feature_signal: f64,
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            nodes: 600,
            classes: 4,
            feature_dim: 200,
            avg_degree: 4.0,
            homophily: 0.8,
            words_per_node: 12,
            feature_signal: 0.3,
            train_per_class: 20,
            val: 100,
            test: 200,
            seed: 7,
        }
    }
}

/// Synthetic homophilous graph with sparse binary features.
pub fn planted_partition(spec: &PlantedPartition) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.nodes;
    let c = spec.classes;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let mut by_class = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }

    let edge_count = (spec.avg_degree * n as f64 / 2.0).round() as usize;
    let mut edges = Vec::with_capacity(edge_count);
    while edges.len() < edge_count {
        let u = rng.random_range(0..n);
        let v = if rng.random::<f64>() < spec.homophily {
            let peers = &by_class[labels[u]];
            peers[rng.random_range(0..peers.len())]
        } else {
            rng.random_range(0..n)
        };
        if u != v {
            edges.push((u, v));
        }
    }

    let block = (spec.feature_dim / c).max(1);
    let mut features = DenseMatrix::zeros(n, spec.feature_dim);
    for (i, &l) in labels.iter().enumerate() {
        for _ in 0..spec.words_per_node {
            let f = if rng.random::<f64>() < spec.feature_signal {
                (l * block + rng.random_range(0..block)).min(spec.feature_dim - 1)
            } else {
                rng.random_range(0..spec.feature_dim)
            };
            features.set(i, f, 1.0);
        }
    }

    let mut splits = Splits::default();
    let mut taken = vec![0usize; c];
    let mut rest = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if taken[l] < spec.train_per_class {
            taken[l] += 1;
            splits.train.push(i);
        } else {
            rest.push(i);
        }
    }
    splits.val = rest.iter().copied().take(spec.val).collect();
    splits.test = rest
        .iter()
        .copied()
        .skip(spec.val)
        .take(spec.test)
        .collect();

    Dataset::new(
        format!("planted-{n}x{c}"),
        &EdgeList::new(edges),
        features,
        labels.into_iter().map(Some).collect(),
        c,
        splits,
    )
}
