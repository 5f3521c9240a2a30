//! Full-model finite-difference checks on the bundled 8-node graphs.
//!
//! Every variant is checked in `f32` (the training precision) and in `f64`
//! through the same generic code. Check points are drawn at random and
//! rejected when any `±ε` probe flips a max-fusion winner or a ReLU sign,
//! since the loss is not differentiable across those kinks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixtures::eight_node_graphs;
use crate::graph::SparseGraph;
use crate::model::{backward, forward, ForwardCache, ModelConfig, Params};
use crate::scalar::Scalar;
use crate::tensor::{
    finite_difference_check, masked_softmax_cross_entropy, DenseMatrix, MaxSelectionMask,
};

/// Finite-difference steps. The `f32` step is larger because the loss
/// itself carries about 1e-7 relative rounding noise.
pub const EPSILON_F32: f64 = 1e-2;
pub const EPSILON_F64: f64 = 1e-3;
const MAX_ATTEMPTS: u64 = 1_000;

const FEATURES: usize = 5;
const HIDDEN: usize = 4;
const CLASSES: usize = 3;

/// Inputs of one checked problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub graph: SparseGraph,
    pub features: DenseMatrix<f64>,
    pub labels: Vec<Option<usize>>,
    pub mask: Vec<usize>,
}

/// The bundled problems: each 8-node graph with seeded features, three
/// classes and six of the eight nodes in the loss.
pub fn problems() -> Vec<Problem> {
    eight_node_graphs()
        .into_iter()
        .enumerate()
        .map(|(k, (name, graph))| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
            let features =
                DenseMatrix::from_fn(8, FEATURES, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            Problem {
                name: name.to_string(),
                graph,
                features,
                labels: (0..8).map(|i| Some(i % CLASSES)).collect(),
                mask: vec![0, 1, 2, 4, 5, 7],
            }
        })
        .collect()
}

/// Model configurations covered by the suite.
pub fn configs() -> Vec<(&'static str, ModelConfig)> {
    vec![
        ("HLHG-2", ModelConfig::hlhg(2, FEATURES, HIDDEN, CLASSES)),
        ("HLHG-3", ModelConfig::hlhg(3, FEATURES, HIDDEN, CLASSES)),
        ("GCN", ModelConfig::gcn(FEATURES, HIDDEN, CLASSES)),
        (
            "CONCAT-2",
            ModelConfig::concat(2, FEATURES, HIDDEN, CLASSES),
        ),
        (
            "CONCAT-3",
            ModelConfig::concat(3, FEATURES, HIDDEN, CLASSES),
        ),
    ]
}

fn eval<T: Scalar>(
    problem: &Problem,
    x: &DenseMatrix<T>,
    config: &ModelConfig,
    params: &Params<T>,
) -> Result<(f64, DenseMatrix<T>, ForwardCache<T>)> {
    // Dropout is off, so the generator is never drawn from.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, cache) = forward(params, &problem.graph, x, config, &mut rng, false)?;
    let (loss, grad) = masked_softmax_cross_entropy(&logits, &problem.labels, &problem.mask)?;
    Ok((loss, grad, cache))
}

/// Which side of every kink the network sits on.
#[derive(Debug, Clone, PartialEq, Eq)]
struct KinkPattern {
    fusion1: Vec<usize>,
    fusion2: Vec<usize>,
    relu: Vec<bool>,
}

impl KinkPattern {
    fn of<T: Scalar>(cache: &ForwardCache<T>) -> Self {
        let winners = |m: &Option<MaxSelectionMask>| {
            m.as_ref()
                .map(|m| m.indices().collect())
                .unwrap_or_default()
        };
        Self {
            fusion1: winners(&cache.layer1.fusion),
            fusion2: winners(&cache.layer2.fusion),
            relu: cache
                .relu_input
                .data()
                .iter()
                .map(|v| *v > T::zero())
                .collect(),
        }
    }
}

/// Worst errors over every weight matrix of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelErrors {
    /// Scale-floored relative error (the pass/fail metric).
    pub relative: f64,
    /// Unfloored per-coordinate relative error.
    pub coordinate: f64,
}

/// Errors over every weight of `params`, or `None` when some probe crossed
/// a kink.
pub fn model_gradient_error<T: Scalar>(
    problem: &Problem,
    config: &ModelConfig,
    params: &Params<T>,
    epsilon: f64,
) -> Result<Option<ModelErrors>> {
    let x = problem.features.cast::<T>();
    let (_, grad_logits, cache) = eval(problem, &x, config, params)?;
    let grads = backward(&cache, &grad_logits, params, &problem.graph, config)?;
    let pattern = KinkPattern::of(&cache);

    let mut worst = ModelErrors {
        relative: 0.0,
        coordinate: 0.0,
    };
    let mut crossed = false;
    let mut failed = None;
    for idx in 0..params.matrix_count() {
        let analytic = grads.matrices().nth(idx).expect("same layout");
        let base = params.matrices().nth(idx).expect("index in range");
        let check = finite_difference_check(
            |w: &DenseMatrix<T>| {
                let mut probe = params.clone();
                *probe.matrices_mut().nth(idx).expect("index in range") = w.clone();
                match eval(problem, &x, config, &probe) {
                    Ok((loss, _, c)) => {
                        crossed |= KinkPattern::of(&c) != pattern;
                        loss
                    }
                    Err(e) => {
                        failed.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            base,
            analytic,
            epsilon,
        );
        if let Some(e) = failed {
            return Err(e);
        }
        if !(check.max_relative_error <= worst.relative) {
            worst.relative = check.max_relative_error;
        }
        worst.coordinate = worst.coordinate.max(check.max_coordinate_error);
    }
    Ok((!crossed).then_some(worst))
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub problem: String,
    pub model: String,
    pub point: u64,
    /// Seed of the accepted parameter draw.
    pub seed: u64,
    pub error_f32: f64,
    pub error_f64: f64,
    pub coordinate_error_f32: f64,
    pub coordinate_error_f64: f64,
}

/// Draws parameters (in `f64`, cast for the `f32` run) from seeds derived
/// from `point` until both precisions check without crossing a kink.
pub fn check_point(
    problem: &Problem,
    model: &str,
    config: &ModelConfig,
    point: u64,
) -> Result<CaseResult> {
    for attempt in 0..MAX_ATTEMPTS {
        let seed = point * MAX_ATTEMPTS + attempt;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::<f64>::init(config, &mut rng)?;
        let Some(e64) = model_gradient_error(problem, config, &params, EPSILON_F64)? else {
            continue;
        };
        let Some(e32) = model_gradient_error(problem, config, &params.cast::<f32>(), EPSILON_F32)?
        else {
            continue;
        };
        return Ok(CaseResult {
            problem: problem.name.clone(),
            model: model.to_string(),
            point,
            seed,
            error_f32: e32.relative,
            error_f64: e64.relative,
            coordinate_error_f32: e32.coordinate,
            coordinate_error_f64: e64.coordinate,
        });
    }
    Err(Error::Numerical(format!(
        "no kink-free check point for {model} on {}",
        problem.name
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub epsilon_f32: f64,
    pub epsilon_f64: f64,
    pub cases: Vec<CaseResult>,
    pub max_error_f32: f64,
    pub max_error_f64: f64,
}

/// Every problem × configuration × `points` random points, in both
/// precisions.
pub fn run_suite(points: u64) -> Result<SuiteReport> {
    let mut cases = Vec::new();
    for problem in problems() {
        for (model, config) in configs() {
            for point in 0..points {
                cases.push(check_point(&problem, model, &config, point)?);
            }
        }
    }
    let max = |f: fn(&CaseResult) -> f64| {
        cases
            .iter()
            .map(f)
            .fold(0.0, |m, v| if v <= m { m } else { v })
    };
    Ok(SuiteReport {
        epsilon_f32: EPSILON_F32,
        epsilon_f64: EPSILON_F64,
        max_error_f32: max(|c| c.error_f32),
        max_error_f64: max(|c| c.error_f64),
        cases,
    })
}
