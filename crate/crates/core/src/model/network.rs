//! Forward and backward passes for HLHG and the two baselines.
//!
//! All three variants are two graph-convolution layers with ReLU in between
//! and dropout on each layer's input (shared by every branch of the layer).
//! Layer `l` of HLHG computes `max_k Â^k H W_l` for `k = 1..=p` with a single
//! `W_l`; the GCN baseline is the `p = 1` case written out directly; the
//! concat baseline keeps one weight per order and concatenates the branches.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{propagate_orders, spmm, SparseGraph};
use crate::model::config::{ModelConfig, Variant};
use crate::scalar::Scalar;
use crate::tensor::{
    argmax_rows, dropout, dropout_backward, fusion_max, fusion_max_backward, glorot_init, matmul,
    matmul_nt, matmul_tn, relu, relu_backward, DenseMatrix, DropoutMask, MaxSelectionMask,
};

/// Trainable weights. Shared-weight variants hold exactly one matrix per
/// layer; the concat baseline holds `p` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T: Scalar = f32> {
    pub layer1: Vec<DenseMatrix<T>>,
    pub layer2: Vec<DenseMatrix<T>>,
}

impl<T: Scalar> Params<T> {
    /// Glorot-initialized weights for `config`.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (r0, r1, c) = (config.input_dim, config.hidden_units, config.num_classes);
        Ok(match config.variant {
            Variant::Hlhg | Variant::GcnBaseline => Self {
                layer1: vec![glorot_init(r0, r1, rng)],
                layer2: vec![glorot_init(r1, c, rng)],
            },
            Variant::ConcatBaseline => {
                let p = config.order_p;
                let layer1 = (0..p).map(|_| glorot_init(r0, r1, rng)).collect();
                let layer2 = (0..p).map(|_| glorot_init(p * r1, c, rng)).collect();
                Self { layer1, layer2 }
            }
        })
    }

    /// Zero matrices shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        let z = |v: &Vec<DenseMatrix<T>>| {
            v.iter()
                .map(|m| DenseMatrix::zeros(m.rows(), m.cols()))
                .collect()
        };
        Self {
            layer1: z(&self.layer1),
            layer2: z(&self.layer2),
        }
    }

    pub fn matrices(&self) -> impl Iterator<Item = &DenseMatrix<T>> {
        self.layer1.iter().chain(&self.layer2)
    }

    pub fn matrices_mut(&mut self) -> impl Iterator<Item = &mut DenseMatrix<T>> {
        self.layer1.iter_mut().chain(self.layer2.iter_mut())
    }

    pub fn matrix_count(&self) -> usize {
        self.layer1.len() + self.layer2.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices().map(DenseMatrix::len).sum()
    }

    /// Checkpoint names: `W1`/`W2`, or `W1_k`/`W2_k` with 1-based `k` when a
    /// layer has several matrices.
    pub fn named(&self) -> Vec<(String, &DenseMatrix<T>)> {
        fn names<'a, T: Scalar>(
            layer: usize,
            v: &'a [DenseMatrix<T>],
        ) -> impl Iterator<Item = (String, &'a DenseMatrix<T>)> + 'a {
            let single = v.len() == 1;
            v.iter().enumerate().map(move |(k, m)| {
                let name = if single {
                    format!("W{layer}")
                } else {
                    format!("W{layer}_{}", k + 1)
                };
                (name, m)
            })
        }
        names(1, &self.layer1)
            .chain(names(2, &self.layer2))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            layer1: self.layer1.iter().map(DenseMatrix::cast).collect(),
            layer2: self.layer2.iter().map(DenseMatrix::cast).collect(),
        }
    }

    /// Order-sensitive FNV-1a digest of the raw bits of every weight.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for m in self.matrices() {
            for v in m.data() {
                for b in v.as_f64().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Checks shapes against `config`.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let (r0, r1, c, p) = (
            config.input_dim,
            config.hidden_units,
            config.num_classes,
            config.order_p,
        );
        let (count, w2_rows) = match config.variant {
            Variant::ConcatBaseline => (p, p * r1),
            _ => (1, r1),
        };
        let ok = self.layer1.len() == count
            && self.layer2.len() == count
            && self.layer1.iter().all(|w| w.shape() == (r0, r1))
            && self.layer2.iter().all(|w| w.shape() == (w2_rows, c));
        if ok {
            Ok(())
        } else {
            Err(Error::dim(
                "params",
                format!(
                    "{count}x({r0}x{r1}) and {count}x({w2_rows}x{c}) for {}",
                    config.variant
                ),
                format!(
                    "{:?} / {:?}",
                    self.layer1.iter().map(|w| w.shape()).collect::<Vec<_>>(),
                    self.layer2.iter().map(|w| w.shape()).collect::<Vec<_>>()
                ),
            ))
        }
    }
}

/// How a shared-weight branch `Â^k H W` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Factorization {
    /// `Â^k (H W)`: one matmul, propagation at the output width.
    WeightFirst,
    /// `(Â^k H) W`: propagation at the input width, one matmul per branch.
    PropagateFirst,
}

impl Factorization {
    /// Weight-first whenever it narrows the propagated matrix.
    pub(crate) fn choose(input_cols: usize, weight_cols: usize) -> Self {
        if weight_cols < input_cols {
            Factorization::WeightFirst
        } else {
            Factorization::PropagateFirst
        }
    }
}

/// Per-layer intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache<T: Scalar = f32> {
    /// Layer input after dropout.
    pub input: DenseMatrix<T>,
    /// `[Â H, …, Â^p H]` when propagation ran before the weight product.
    pub propagated: Option<Vec<DenseMatrix<T>>>,
    /// Branch outputs before fusion (HLHG only).
    pub branches: Vec<DenseMatrix<T>>,
    pub fusion: Option<MaxSelectionMask>,
}

impl<T: Scalar> LayerCache<T> {
    /// Smallest gap between the winning branch and the runner-up over all
    /// fused entries; infinite without fusion.
    pub fn fusion_margin(&self) -> f64 {
        if self.branches.len() < 2 {
            return f64::INFINITY;
        }
        let mut margin = f64::INFINITY;
        for e in 0..self.branches[0].len() {
            let mut vals: Vec<f64> = self.branches.iter().map(|b| b.data()[e].as_f64()).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            margin = margin.min(vals[0] - vals[1]);
        }
        margin
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar = f32> {
    pub variant: Variant,
    pub order_p: usize,
    pub dropout1: DropoutMask,
    pub dropout2: DropoutMask,
    pub layer1: LayerCache<T>,
    /// Fused first-layer output, the input of the ReLU.
    pub relu_input: DenseMatrix<T>,
    pub layer2: LayerCache<T>,
    pub logits: DenseMatrix<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Smallest fusion gap over both layers.
    pub fn fusion_margin(&self) -> f64 {
        self.layer1.fusion_margin().min(self.layer2.fusion_margin())
    }

    /// Smallest `|x|` at the ReLU input.
    pub fn relu_margin(&self) -> f64 {
        self.relu_input
            .data()
            .iter()
            .map(|v| v.as_f64().abs())
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_input<T: Scalar>(
    graph: &SparseGraph,
    x: &DenseMatrix<T>,
    config: &ModelConfig,
) -> Result<()> {
    if x.rows() != graph.n() {
        return Err(Error::dim(
            "forward",
            format!("{} feature rows", graph.n()),
            x.rows(),
        ));
    }
    if x.cols() != config.input_dim {
        return Err(Error::dim(
            "forward",
            format!("{} feature columns", config.input_dim),
            x.cols(),
        ));
    }
    Ok(())
}

fn require_variant(config: &ModelConfig, expected: Variant, op: &'static str) -> Result<()> {
    if config.variant != expected {
        return Err(Error::Config(format!(
            "{op} called with a {} configuration",
            config.variant
        )));
    }
    Ok(())
}

fn single<'a, T: Scalar>(layer: &'a [DenseMatrix<T>], name: &str) -> Result<&'a DenseMatrix<T>> {
    match layer {
        [w] => Ok(w),
        _ => Err(Error::Input(format!(
            "expected one shared {name} matrix, found {}",
            layer.len()
        ))),
    }
}

/// `Σ_k Â^k G_k` evaluated as `Â(G_1 + Â(G_2 + … Â G_p))`.
fn accumulate_powers<T: Scalar>(
    graph: &SparseGraph,
    grads: &[DenseMatrix<T>],
) -> Result<DenseMatrix<T>> {
    let mut iter = grads.iter().rev();
    let mut acc = iter
        .next()
        .ok_or_else(|| Error::Input("no branch gradients".into()))?
        .clone();
    for g in iter {
        acc = spmm(graph, &acc)?;
        acc.add_assign(g)?;
    }
    spmm(graph, &acc)
}

pub(crate) fn shared_layer_forward<T: Scalar>(
    graph: &SparseGraph,
    input: DenseMatrix<T>,
    weight: &DenseMatrix<T>,
    p: usize,
    factorization: Factorization,
) -> Result<(DenseMatrix<T>, LayerCache<T>)> {
    let (branches, propagated) = match factorization {
        Factorization::WeightFirst => {
            let hw = matmul(&input, weight)?;
            (propagate_orders(graph, &hw, p)?, None)
        }
        Factorization::PropagateFirst => {
            let props = propagate_orders(graph, &input, p)?;
            let branches = props
                .iter()
                .map(|a| matmul(a, weight))
                .collect::<Result<Vec<_>>>()?;
            (branches, Some(props))
        }
    };
    let (fused, mask) = fusion_max(&branches)?;
    Ok((
        fused,
        LayerCache {
            input,
            propagated,
            branches,
            fusion: Some(mask),
        },
    ))
}

/// Returns `(dW, dInput)`; `dInput` only when requested.
pub(crate) fn shared_layer_backward<T: Scalar>(
    graph: &SparseGraph,
    cache: &LayerCache<T>,
    weight: &DenseMatrix<T>,
    upstream: &DenseMatrix<T>,
    p: usize,
    need_input_grad: bool,
) -> Result<(DenseMatrix<T>, Option<DenseMatrix<T>>)> {
    let mask = cache
        .fusion
        .as_ref()
        .ok_or_else(|| Error::Input("layer cache has no fusion mask".into()))?;
    let routed = fusion_max_backward(upstream, mask, p)?;
    match &cache.propagated {
        None => {
            // Â is symmetric, so (Â^k)ᵀ G = Â^k G.
            let s = accumulate_powers(graph, &routed)?;
            let dw = matmul_tn(&cache.input, &s)?;
            let din = need_input_grad.then(|| matmul_nt(&s, weight)).transpose()?;
            Ok((dw, din))
        }
        Some(props) => {
            let mut dw = DenseMatrix::zeros(weight.rows(), weight.cols());
            for (a, g) in props.iter().zip(&routed) {
                dw.add_assign(&matmul_tn(a, g)?)?;
            }
            let din = if need_input_grad {
                let through_w = routed
                    .iter()
                    .map(|g| matmul_nt(g, weight))
                    .collect::<Result<Vec<_>>>()?;
                Some(accumulate_powers(graph, &through_w)?)
            } else {
                None
            };
            Ok((dw, din))
        }
    }
}

/// HLHG forward pass. Returns logits (softmax is left to the loss).
pub fn forward_hlhg<T: Scalar, R: Rng + ?Sized>(
    params: &Params<T>,
    graph: &SparseGraph,
    x: &DenseMatrix<T>,
    config: &ModelConfig,
    rng: &mut R,
    training: bool,
) -> Result<(DenseMatrix<T>, ForwardCache<T>)> {
    require_variant(config, Variant::Hlhg, "forward_hlhg")?;
    check_input(graph, x, config)?;
    let (w1, w2) = (single(&params.layer1, "W1")?, single(&params.layer2, "W2")?);
    let p = config.order_p;

    let (x_d, dropout1) = dropout(x, config.dropout_rate, rng, training)?;
    let f1 = Factorization::choose(x_d.cols(), w1.cols());
    let (h, layer1) = shared_layer_forward(graph, x_d, w1, p, f1)?;

    let (r_d, dropout2) = dropout(&relu(&h), config.dropout_rate, rng, training)?;
    let f2 = Factorization::choose(r_d.cols(), w2.cols());
    let (logits, layer2) = shared_layer_forward(graph, r_d, w2, p, f2)?;

    let cache = ForwardCache {
        variant: Variant::Hlhg,
        order_p: p,
        dropout1,
        dropout2,
        layer1,
        relu_input: h,
        layer2,
        logits: logits.clone(),
    };
    Ok((logits, cache))
}

fn check_cache<T: Scalar>(
    cache: &ForwardCache<T>,
    grad_logits: &DenseMatrix<T>,
    config: &ModelConfig,
) -> Result<()> {
    if cache.variant != config.variant || cache.order_p != config.order_p {
        return Err(Error::Input(format!(
            "cache from a {} p={} forward used with {} p={}",
            cache.variant, cache.order_p, config.variant, config.order_p
        )));
    }
    cache.logits.check_same_shape(grad_logits, "backward")
}

/// Exact gradients of the loss w.r.t. `W1` and `W2`, given `dL/dlogits`.
pub fn backward_hlhg<T: Scalar>(
    cache: &ForwardCache<T>,
    grad_logits: &DenseMatrix<T>,
    params: &Params<T>,
    graph: &SparseGraph,
    config: &ModelConfig,
) -> Result<Params<T>> {
    require_variant(config, Variant::Hlhg, "backward_hlhg")?;
    check_cache(cache, grad_logits, config)?;
    let (w1, w2) = (single(&params.layer1, "W1")?, single(&params.layer2, "W2")?);
    let p = config.order_p;

    let (dw2, d_in2) = shared_layer_backward(graph, &cache.layer2, w2, grad_logits, p, true)?;
    let d_relu = dropout_backward(&d_in2.expect("input gradient requested"), &cache.dropout2)?;
    let dh = relu_backward(&d_relu, &cache.relu_input)?;
    let (dw1, _) = shared_layer_backward(graph, &cache.layer1, w1, &dh, p, false)?;

    Ok(Params {
        layer1: vec![dw1],
        layer2: vec![dw2],
    })
}

/// One plain GCN layer `Â H W`, same product order rule as HLHG.
fn gcn_layer_forward<T: Scalar>(
    graph: &SparseGraph,
    input: DenseMatrix<T>,
    weight: &DenseMatrix<T>,
) -> Result<(DenseMatrix<T>, LayerCache<T>)> {
    let (out, propagated) = match Factorization::choose(input.cols(), weight.cols()) {
        Factorization::WeightFirst => (spmm(graph, &matmul(&input, weight)?)?, None),
        Factorization::PropagateFirst => {
            let ah = spmm(graph, &input)?;
            (matmul(&ah, weight)?, Some(vec![ah]))
        }
    };
    Ok((
        out,
        LayerCache {
            input,
            propagated,
            branches: Vec::new(),
            fusion: None,
        },
    ))
}

fn gcn_layer_backward<T: Scalar>(
    graph: &SparseGraph,
    cache: &LayerCache<T>,
    weight: &DenseMatrix<T>,
    upstream: &DenseMatrix<T>,
    need_input_grad: bool,
) -> Result<(DenseMatrix<T>, Option<DenseMatrix<T>>)> {
    match &cache.propagated {
        None => {
            let s = spmm(graph, upstream)?;
            let dw = matmul_tn(&cache.input, &s)?;
            let din = need_input_grad.then(|| matmul_nt(&s, weight)).transpose()?;
            Ok((dw, din))
        }
        Some(props) => {
            let dw = matmul_tn(&props[0], upstream)?;
            let din = need_input_grad
                .then(|| spmm(graph, &matmul_nt(upstream, weight)?))
                .transpose()?;
            Ok((dw, din))
        }
    }
}

/// `Â · dropout(ReLU(Â · dropout(X) · W1)) · W2`.
pub fn forward_gcn_baseline<T: Scalar, R: Rng + ?Sized>(
    params: &Params<T>,
    graph: &SparseGraph,
    x: &DenseMatrix<T>,
    config: &ModelConfig,
    rng: &mut R,
    training: bool,
) -> Result<(DenseMatrix<T>, ForwardCache<T>)> {
    require_variant(config, Variant::GcnBaseline, "forward_gcn_baseline")?;
    check_input(graph, x, config)?;
    let (w1, w2) = (single(&params.layer1, "W1")?, single(&params.layer2, "W2")?);

    let (x_d, dropout1) = dropout(x, config.dropout_rate, rng, training)?;
    let (h, layer1) = gcn_layer_forward(graph, x_d, w1)?;
    let (r_d, dropout2) = dropout(&relu(&h), config.dropout_rate, rng, training)?;
    let (logits, layer2) = gcn_layer_forward(graph, r_d, w2)?;

    let cache = ForwardCache {
        variant: Variant::GcnBaseline,
        order_p: 1,
        dropout1,
        dropout2,
        layer1,
        relu_input: h,
        layer2,
        logits: logits.clone(),
    };
    Ok((logits, cache))
}

pub fn backward_gcn_baseline<T: Scalar>(
    cache: &ForwardCache<T>,
    grad_logits: &DenseMatrix<T>,
    params: &Params<T>,
    graph: &SparseGraph,
    config: &ModelConfig,
) -> Result<Params<T>> {
    require_variant(config, Variant::GcnBaseline, "backward_gcn_baseline")?;
    check_cache(cache, grad_logits, config)?;
    let (w1, w2) = (single(&params.layer1, "W1")?, single(&params.layer2, "W2")?);

    let (dw2, d_in2) = gcn_layer_backward(graph, &cache.layer2, w2, grad_logits, true)?;
    let d_relu = dropout_backward(&d_in2.expect("input gradient requested"), &cache.dropout2)?;
    let dh = relu_backward(&d_relu, &cache.relu_input)?;
    let (dw1, _) = gcn_layer_backward(graph, &cache.layer1, w1, &dh, false)?;

    Ok(Params {
        layer1: vec![dw1],
        layer2: vec![dw2],
    })
}

/// Per-order products `Â^k H W_k` for the concat baseline.
fn per_order_branches<T: Scalar>(
    graph: &SparseGraph,
    input: &DenseMatrix<T>,
    weights: &[DenseMatrix<T>],
) -> Result<(Vec<DenseMatrix<T>>, Vec<DenseMatrix<T>>)> {
    let props = propagate_orders(graph, input, weights.len())?;
    let branches = props
        .iter()
        .zip(weights)
        .map(|(a, w)| matmul(a, w))
        .collect::<Result<Vec<_>>>()?;
    Ok((props, branches))
}

/// Concat baseline: layer 1 is `[Â H W_1 | … | Â^p H W_p]`; the output
/// layer sums its `p` per-order blocks so the logits keep `C` columns.
pub fn forward_concat_baseline<T: Scalar, R: Rng + ?Sized>(
    params: &Params<T>,
    graph: &SparseGraph,
    x: &DenseMatrix<T>,
    config: &ModelConfig,
    rng: &mut R,
    training: bool,
) -> Result<(DenseMatrix<T>, ForwardCache<T>)> {
    require_variant(config, Variant::ConcatBaseline, "forward_concat_baseline")?;
    check_input(graph, x, config)?;
    params.check_against(config)?;

    let (x_d, dropout1) = dropout(x, config.dropout_rate, rng, training)?;
    let (props1, branches1) = per_order_branches(graph, &x_d, &params.layer1)?;
    let h = DenseMatrix::hconcat(&branches1)?;

    let (r_d, dropout2) = dropout(&relu(&h), config.dropout_rate, rng, training)?;
    let (props2, branches2) = per_order_branches(graph, &r_d, &params.layer2)?;
    let mut logits = branches2[0].clone();
    for b in &branches2[1..] {
        logits.add_assign(b)?;
    }

    let cache = ForwardCache {
        variant: Variant::ConcatBaseline,
        order_p: config.order_p,
        dropout1,
        dropout2,
        layer1: LayerCache {
            input: x_d,
            propagated: Some(props1),
            branches: Vec::new(),
            fusion: None,
        },
        relu_input: h,
        layer2: LayerCache {
            input: r_d,
            propagated: Some(props2),
            branches: Vec::new(),
            fusion: None,
        },
        logits: logits.clone(),
    };
    Ok((logits, cache))
}

pub fn backward_concat_baseline<T: Scalar>(
    cache: &ForwardCache<T>,
    grad_logits: &DenseMatrix<T>,
    params: &Params<T>,
    graph: &SparseGraph,
    config: &ModelConfig,
) -> Result<Params<T>> {
    require_variant(config, Variant::ConcatBaseline, "backward_concat_baseline")?;
    check_cache(cache, grad_logits, config)?;
    let missing = || Error::Input("concat cache lacks propagated inputs".into());
    let props2 = cache.layer2.propagated.as_ref().ok_or_else(missing)?;
    let props1 = cache.layer1.propagated.as_ref().ok_or_else(missing)?;

    // Every output block receives the full upstream gradient.
    let layer2 = props2
        .iter()
        .map(|a| matmul_tn(a, grad_logits))
        .collect::<Result<Vec<_>>>()?;
    let through_w = params
        .layer2
        .iter()
        .map(|w| matmul_nt(grad_logits, w))
        .collect::<Result<Vec<_>>>()?;
    let d_in2 = accumulate_powers(graph, &through_w)?;

    let d_relu = dropout_backward(&d_in2, &cache.dropout2)?;
    let dh = relu_backward(&d_relu, &cache.relu_input)?;
    let layer1 = props1
        .iter()
        .zip(dh.hsplit(config.order_p)?)
        .map(|(a, g)| matmul_tn(a, &g))
        .collect::<Result<Vec<_>>>()?;

    Ok(Params { layer1, layer2 })
}

/// Dispatches to the variant's forward pass.
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    params: &Params<T>,
    graph: &SparseGraph,
    x: &DenseMatrix<T>,
    config: &ModelConfig,
    rng: &mut R,
    training: bool,
) -> Result<(DenseMatrix<T>, ForwardCache<T>)> {
    match config.variant {
        Variant::Hlhg => forward_hlhg(params, graph, x, config, rng, training),
        Variant::GcnBaseline => forward_gcn_baseline(params, graph, x, config, rng, training),
        Variant::ConcatBaseline => forward_concat_baseline(params, graph, x, config, rng, training),
    }
}

/// Dispatches to the variant's backward pass.
pub fn backward<T: Scalar>(
    cache: &ForwardCache<T>,
    grad_logits: &DenseMatrix<T>,
    params: &Params<T>,
    graph: &SparseGraph,
    config: &ModelConfig,
) -> Result<Params<T>> {
    match config.variant {
        Variant::Hlhg => backward_hlhg(cache, grad_logits, params, graph, config),
        Variant::GcnBaseline => backward_gcn_baseline(cache, grad_logits, params, graph, config),
        Variant::ConcatBaseline => {
            backward_concat_baseline(cache, grad_logits, params, graph, config)
        }
    }
}

/// Predicted class per node: argmax of the logits, lowest index on ties.
pub fn predict<T: Scalar>(logits: &DenseMatrix<T>) -> Vec<usize> {
    argmax_rows(logits)
}
