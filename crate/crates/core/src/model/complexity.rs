//! Parameter and multiply-add accounting.

use serde::{Deserialize, Serialize};

use crate::model::config::{ModelConfig, Variant};
use crate::model::network::Factorization;

/// Trainable scalars. Independent of `p` for the shared-weight variants.
pub fn count_parameters(config: &ModelConfig) -> usize {
    let (r0, r1, c, p) = (
        config.input_dim,
        config.hidden_units,
        config.num_classes,
        config.order_p,
    );
    match config.variant {
        Variant::Hlhg | Variant::GcnBaseline => r0 * r1 + r1 * c,
        Variant::ConcatBaseline => p * r0 * r1 + p * (p * r1) * c,
    }
}

/// Cost of one graph-convolution layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub input_width: usize,
    pub output_width: usize,
    pub order: usize,
    /// Sparse multiply-adds actually issued: `m` per propagated column per hop.
    pub propagation: u64,
    /// Dense multiply-adds of the weight products.
    pub matmul: u64,
    /// Big-O style term `r_out · p · m · r_in`.
    pub complexity_term: u64,
    pub parameters: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub variant: Variant,
    pub nodes: usize,
    pub nonzeros: usize,
    pub layers: Vec<LayerCost>,
    pub parameters: u64,
    /// Sum of propagation and matmul work over both layers.
    pub flops_estimate: u64,
}

fn shared_layer(r_in: usize, r_out: usize, p: usize, n: usize, m: usize) -> LayerCost {
    let (r_in64, r_out64, p64, n64, m64) =
        (r_in as u64, r_out as u64, p as u64, n as u64, m as u64);
    let (propagation, matmul) = match Factorization::choose(r_in, r_out) {
        Factorization::WeightFirst => (p64 * m64 * r_out64, n64 * r_in64 * r_out64),
        Factorization::PropagateFirst => (p64 * m64 * r_in64, p64 * n64 * r_in64 * r_out64),
    };
    LayerCost {
        input_width: r_in,
        output_width: r_out,
        order: p,
        propagation,
        matmul,
        complexity_term: r_out64 * p64 * m64 * r_in64,
        parameters: r_in64 * r_out64,
    }
}

fn concat_layer(r_in: usize, r_out: usize, p: usize, n: usize, m: usize) -> LayerCost {
    let (r_in64, r_out64, p64, n64, m64) =
        (r_in as u64, r_out as u64, p as u64, n as u64, m as u64);
    LayerCost {
        input_width: r_in,
        output_width: r_out * p,
        order: p,
        propagation: p64 * m64 * r_in64,
        matmul: p64 * n64 * r_in64 * r_out64,
        complexity_term: r_out64 * p64 * m64 * r_in64,
        parameters: p64 * r_in64 * r_out64,
    }
}

/// Per-layer cost on a graph with `n` nodes and `m` stored non-zeros of `Â`.
pub fn estimate_flops(config: &ModelConfig, n: usize, m: usize) -> ComplexityReport {
    let (r0, r1, c, p) = (
        config.input_dim,
        config.hidden_units,
        config.num_classes,
        config.order_p,
    );
    let layers = match config.variant {
        Variant::Hlhg | Variant::GcnBaseline => {
            vec![shared_layer(r0, r1, p, n, m), shared_layer(r1, c, p, n, m)]
        }
        Variant::ConcatBaseline => {
            // Output blocks are summed, so layer 2 contributes C columns.
            let mut l2 = concat_layer(p * r1, c, p, n, m);
            l2.output_width = c;
            vec![concat_layer(r0, r1, p, n, m), l2]
        }
    };
    let flops_estimate = layers.iter().map(|l| l.propagation + l.matmul).sum();
    ComplexityReport {
        variant: config.variant,
        nodes: n,
        nonzeros: m,
        parameters: count_parameters(config) as u64,
        layers,
        flops_estimate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cora_and_citeseer_counts() {
        assert_eq!(count_parameters(&ModelConfig::gcn(1433, 16, 7)), 23_040);
        assert_eq!(count_parameters(&ModelConfig::hlhg(3, 3703, 8, 6)), 29_672);
        assert_eq!(
            count_parameters(&ModelConfig::hlhg(2, 1433, 16, 7)),
            count_parameters(&ModelConfig::gcn(1433, 16, 7))
        );
        assert_eq!(
            count_parameters(&ModelConfig::concat(2, 10, 4, 3)),
            2 * 10 * 4 + 2 * 8 * 3
        );
    }

    #[test]
    fn first_layer_terms() {
        let m = 13_264;
        let gcn = estimate_flops(&ModelConfig::gcn(1433, 16, 7), 2708, m);
        assert_eq!(gcn.layers[0].complexity_term, 16 * m as u64 * 1433);
        let h2 = estimate_flops(&ModelConfig::hlhg(2, 1433, 16, 7), 2708, m);
        assert_eq!(h2.layers[0].complexity_term, 16 * 2 * m as u64 * 1433);
        assert_eq!(h2.layers[0].parameters, 16 * 1433);
    }

    #[test]
    fn doubling_order_doubles_propagation() {
        for (r0, r1) in [(500, 16), (8, 16)] {
            let a = estimate_flops(&ModelConfig::hlhg(2, r0, r1, 3), 100, 400);
            let b = estimate_flops(&ModelConfig::hlhg(4, r0, r1, 3), 100, 400);
            for (la, lb) in a.layers.iter().zip(&b.layers) {
                assert_eq!(lb.propagation, 2 * la.propagation);
                assert_eq!(lb.complexity_term, 2 * la.complexity_term);
            }
        }
    }
}
