use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Moment estimates for one parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    pub step: u64,
    pub m: DenseMatrix<T>,
    pub v: DenseMatrix<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            step: 0,
            m: DenseMatrix::zeros(rows, cols),
            v: DenseMatrix::zeros(rows, cols),
        }
    }

    pub fn for_param(param: &DenseMatrix<T>) -> Self {
        Self::new(param.rows(), param.cols())
    }
}

/// One bias-corrected Adam update with `grad + weight_decay·param` as the
/// effective gradient. Per-element arithmetic runs in `f64`.
pub fn adam_step<T: Scalar>(
    param: &mut DenseMatrix<T>,
    grad: &DenseMatrix<T>,
    state: &mut AdamState<T>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    param.check_same_shape(grad, "adam_step")?;
    if !param.same_shape(&state.m) || !param.same_shape(&state.v) {
        return Err(Error::dim(
            "adam_step",
            format!("{:?}", param.shape()),
            format!("{:?}", state.m.shape()),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);

    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (((w, &g), mi), vi) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        let g = g.as_f64() + weight_decay * w.as_f64();
        let m_new = ADAM_BETA1 * mi.as_f64() + (1.0 - ADAM_BETA1) * g;
        let v_new = ADAM_BETA2 * vi.as_f64() + (1.0 - ADAM_BETA2) * g * g;
        *mi = T::from_f64(m_new);
        *vi = T::from_f64(v_new);
        let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + ADAM_EPSILON);
        *w = T::from_f64(w.as_f64() - update);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = DenseMatrix::<f32>::filled(2, 3, 0.5);
        let g = DenseMatrix::filled(2, 3, 1.0);
        let mut s = AdamState::for_param(&w);
        adam_step(&mut w, &g, &mut s, 0.01, 0.0).unwrap();
        for &v in w.data() {
            assert!(((v as f64 - 0.5) + 0.01).abs() < 1e-6);
        }
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_and_zero_lr_leave_params() {
        let init = DenseMatrix::<f32>::from_rows(&[[0.3, -1.2], [2.0, 0.0]]);
        let mut w = init.clone();
        let mut s = AdamState::for_param(&w);
        adam_step(&mut w, &DenseMatrix::zeros(2, 2), &mut s, 0.01, 0.0).unwrap();
        assert_eq!(w, init);

        let mut s = AdamState::for_param(&w);
        let g = DenseMatrix::from_rows(&[[1.0, -3.0], [0.5, 7.0]]);
        adam_step(&mut w, &g, &mut s, 0.0, 5e-4).unwrap();
        assert_eq!(w, init);
    }

    #[test]
    fn two_steps_match_scalar_oracle() {
        // Independent scalar Adam in f64.
        fn oracle(mut w: f64, g: f64, lr: f64, wd: f64, steps: i32) -> f64 {
            let (mut m, mut v) = (0.0, 0.0);
            for t in 1..=steps {
                let ge = g + wd * w;
                m = 0.9 * m + 0.1 * ge;
                v = 0.999 * v + 0.001 * ge * ge;
                let mh = m / (1.0 - 0.9f64.powi(t));
                let vh = v / (1.0 - 0.999f64.powi(t));
                w -= lr * mh / (vh.sqrt() + 1e-8);
            }
            w
        }
        let mut w = DenseMatrix::<f64>::from_rows(&[[0.7, -0.4, 1.5]]);
        let g = DenseMatrix::from_rows(&[[0.2, -1.3, 0.05]]);
        let init = w.clone();
        let mut s = AdamState::for_param(&w);
        for _ in 0..2 {
            adam_step(&mut w, &g, &mut s, 0.01, 5e-4).unwrap();
        }
        for j in 0..3 {
            let expect = oracle(init.get(0, j), g.get(0, j), 0.01, 5e-4, 2);
            assert!((w.get(0, j) - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut w = DenseMatrix::<f32>::zeros(2, 2);
        let mut s = AdamState::new(2, 2);
        assert!(adam_step(&mut w, &DenseMatrix::zeros(2, 3), &mut s, 0.1, 0.0).is_err());
        let mut s = AdamState::new(3, 2);
        assert!(adam_step(&mut w, &DenseMatrix::zeros(2, 2), &mut s, 0.1, 0.0).is_err());
    }
}
