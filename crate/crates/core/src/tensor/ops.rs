//! Differentiable primitives with hand-written backward rules.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// `a · b`.
pub fn matmul<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if a.cols() != b.rows() {
        return Err(Error::dim(
            "matmul",
            format!("{} rows on the right", a.cols()),
            b.rows(),
        ));
    }
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        let dst = out.row_mut(i);
        for (k, &aik) in a.row(i).iter().enumerate() {
            // Feature matrices are mostly zeros.
            if aik == T::zero() {
                continue;
            }
            for (o, &bkj) in dst.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b` without forming the transpose.
pub fn matmul_tn<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if a.rows() != b.rows() {
        return Err(Error::dim(
            "matmul_tn",
            format!("{} rows", a.rows()),
            b.rows(),
        ));
    }
    let mut out = DenseMatrix::zeros(a.cols(), b.cols());
    for i in 0..a.rows() {
        let brow = b.row(i);
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == T::zero() {
                continue;
            }
            for (o, &bij) in out.row_mut(k).iter_mut().zip(brow) {
                *o += aik * bij;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without forming the transpose.
pub fn matmul_nt<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if a.cols() != b.cols() {
        return Err(Error::dim(
            "matmul_nt",
            format!("{} cols", a.cols()),
            b.cols(),
        ));
    }
    let mut out = DenseMatrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let arow = a.row(i);
        for k in 0..b.rows() {
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(b.row(k)) {
                acc += x * y;
            }
            out.set(i, k, acc);
        }
    }
    Ok(out)
}

/// Which branch attained the element-wise maximum in [`fusion_max`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxSelectionMask {
    rows: usize,
    cols: usize,
    branches: usize,
    branch_index: Vec<u32>,
}

impl MaxSelectionMask {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn branches(&self) -> usize {
        self.branches
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> usize {
        self.branch_index[i * self.cols + j] as usize
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.branch_index.iter().map(|&b| b as usize)
    }
}

/// Element-wise maximum across congruent branches. Ties go to the lowest
/// branch index.
pub fn fusion_max<T: Scalar>(
    branches: &[DenseMatrix<T>],
) -> Result<(DenseMatrix<T>, MaxSelectionMask)> {
    let first = branches
        .first()
        .ok_or_else(|| Error::Input("fusion_max needs at least one branch".into()))?;
    for b in &branches[1..] {
        first.check_same_shape(b, "fusion_max")?;
    }
    let (rows, cols) = first.shape();
    let mut fused = first.clone();
    let mut branch_index = vec![0u32; rows * cols];
    for (k, b) in branches.iter().enumerate().skip(1) {
        for ((best, idx), &v) in fused
            .data_mut()
            .iter_mut()
            .zip(branch_index.iter_mut())
            .zip(b.data())
        {
            if v > *best {
                *best = v;
                *idx = k as u32;
            }
        }
    }
    let mask = MaxSelectionMask {
        rows,
        cols,
        branches: branches.len(),
        branch_index,
    };
    Ok((fused, mask))
}

/// Routes each upstream entry to the branch that won it; the others get zero.
pub fn fusion_max_backward<T: Scalar>(
    upstream: &DenseMatrix<T>,
    mask: &MaxSelectionMask,
    p: usize,
) -> Result<Vec<DenseMatrix<T>>> {
    if mask.shape() != upstream.shape() {
        return Err(Error::dim(
            "fusion_max_backward",
            format!("{:?}", mask.shape()),
            format!("{:?}", upstream.shape()),
        ));
    }
    if mask.branches != p {
        return Err(Error::dim("fusion_max_backward", mask.branches, p));
    }
    let (rows, cols) = upstream.shape();
    let mut out = vec![DenseMatrix::zeros(rows, cols); p];
    for (e, (&g, &k)) in upstream.data().iter().zip(&mask.branch_index).enumerate() {
        out[k as usize].data_mut()[e] = g;
    }
    Ok(out)
}

pub fn relu<T: Scalar>(h: &DenseMatrix<T>) -> DenseMatrix<T> {
    h.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `upstream` where `input > 0`; zero elsewhere, including at 0.
pub fn relu_backward<T: Scalar>(
    upstream: &DenseMatrix<T>,
    input: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    upstream.check_same_shape(input, "relu_backward")?;
    let mut out = upstream.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(out)
}

/// Keep-mask and survivor scale of one dropout application.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    shape: (usize, usize),
    /// Empty when dropout was the identity.
    keep: Vec<bool>,
    scale: f64,
}

impl DropoutMask {
    pub fn identity(rows: usize, cols: usize) -> Self {
        Self {
            shape: (rows, cols),
            keep: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn keeps(&self, index: usize) -> bool {
        self.keep.is_empty() || self.keep[index]
    }

    pub fn kept_count(&self) -> usize {
        if self.keep.is_empty() {
            self.shape.0 * self.shape.1
        } else {
            self.keep.iter().filter(|&&k| k).count()
        }
    }

    /// Applies the mask and scale; used for both directions.
    pub fn apply<T: Scalar>(&self, h: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if h.shape() != self.shape {
            return Err(Error::dim(
                "dropout",
                format!("{:?}", self.shape),
                format!("{:?}", h.shape()),
            ));
        }
        if self.keep.is_empty() {
            return Ok(h.clone());
        }
        let scale = T::from_f64(self.scale);
        let mut out = h.clone();
        for (v, &k) in out.data_mut().iter_mut().zip(&self.keep) {
            *v = if k { *v * scale } else { T::zero() };
        }
        Ok(out)
    }
}

/// Inverted dropout: entries are zeroed with probability `rate` and
/// survivors scaled by `1/(1−rate)`. Identity (and no RNG draws) when not
/// training or when `rate == 0`.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    h: &DenseMatrix<T>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(DenseMatrix<T>, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Input(format!("dropout rate {rate} outside [0, 1)")));
    }
    let (rows, cols) = h.shape();
    if !training || rate == 0.0 {
        return Ok((h.clone(), DropoutMask::identity(rows, cols)));
    }
    let keep: Vec<bool> = (0..h.len()).map(|_| rng.random::<f64>() >= rate).collect();
    let mask = DropoutMask {
        shape: (rows, cols),
        keep,
        scale: 1.0 / (1.0 - rate),
    };
    let out = mask.apply(h)?;
    Ok((out, mask))
}

pub fn dropout_backward<T: Scalar>(
    upstream: &DenseMatrix<T>,
    mask: &DropoutMask,
) -> Result<DenseMatrix<T>> {
    mask.apply(upstream)
}

/// Row-wise softmax, stabilized by subtracting the row maximum.
pub fn softmax_rows<T: Scalar>(logits: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
    total
}

/// Mean cross-entropy over `mask` rows and its gradient w.r.t. `logits`.
///
/// The gradient is `(softmax − onehot)/|mask|` on masked rows and zero
/// elsewhere. The loss value is accumulated in `f64` from the logits as
/// given; the gradient is computed in `T`.
pub fn masked_softmax_cross_entropy<T: Scalar>(
    logits: &DenseMatrix<T>,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<(f64, DenseMatrix<T>)> {
    let (n, classes) = logits.shape();
    if classes < 2 {
        return Err(Error::Input(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if mask.is_empty() {
        return Err(Error::Input("cross-entropy over an empty mask".into()));
    }
    if labels.len() != n {
        return Err(Error::dim("masked_softmax_cross_entropy", n, labels.len()));
    }
    let inv = T::from_f64(1.0 / mask.len() as f64);
    let mut grad = DenseMatrix::zeros(n, classes);
    let mut loss = 0.0f64;
    for &node in mask {
        if node >= n {
            return Err(Error::Input(format!("mask node {node} outside 0..{n}")));
        }
        let label =
            labels[node].ok_or_else(|| Error::Input(format!("masked node {node} has no label")))?;
        if label >= classes {
            return Err(Error::Input(format!(
                "label {label} of node {node} not below {classes}"
            )));
        }
        let row = logits.row(node);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let total: T = row.iter().map(|&v| (v - max).exp()).sum();
        let max64 = max.as_f64();
        let total64: f64 = row.iter().map(|&v| (v.as_f64() - max64).exp()).sum();
        loss -= (row[label].as_f64() - max64) - total64.ln();

        let g = grad.row_mut(node);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - max).exp() / total * inv;
        }
        g[label] -= inv;
    }
    Ok((loss / mask.len() as f64, grad))
}

/// Row-wise argmax; ties resolve to the lowest column.
pub fn argmax_rows<T: Scalar>(m: &DenseMatrix<T>) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let mut best = 0;
            let row = m.row(i);
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
