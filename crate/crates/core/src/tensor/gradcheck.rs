//! Central finite-difference gradient checking.

use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Coordinates are judged against at least this fraction of the largest
/// analytic entry, so entries far below the gradient's scale do not turn
/// rounding noise into large relative errors.
pub const SCALE_FLOOR: f64 = 1e-3;

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max |a − n| / max(|a| + |n|, SCALE_FLOOR·‖a‖∞, 1e-8)`.
    pub max_relative_error: f64,
    /// Same without the scale floor.
    pub max_coordinate_error: f64,
    /// Flat index of the coordinate behind `max_relative_error`.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares `analytic` against central differences of `f` around `param`.
///
/// Each coordinate is perturbed by `±epsilon` in `T`; the difference
/// quotient is formed in `f64` using the step actually representable in `T`.
pub fn finite_difference_check<T, F>(
    mut f: F,
    param: &DenseMatrix<T>,
    analytic: &DenseMatrix<T>,
    epsilon: f64,
) -> GradCheck
where
    T: Scalar,
    F: FnMut(&DenseMatrix<T>) -> f64,
{
    assert!(
        param.same_shape(analytic),
        "gradient shape {:?} does not match parameter {:?}",
        analytic.shape(),
        param.shape()
    );
    let mut probe = param.clone();
    let mut numeric = Vec::with_capacity(param.len());
    for e in 0..param.len() {
        let base = param.data()[e];
        let plus = base + T::from_f64(epsilon);
        let minus = base - T::from_f64(epsilon);
        probe.data_mut()[e] = plus;
        let f_plus = f(&probe);
        probe.data_mut()[e] = minus;
        let f_minus = f(&probe);
        probe.data_mut()[e] = base;
        numeric.push((f_plus - f_minus) / (plus.as_f64() - minus.as_f64()));
    }

    let scale = analytic
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
    let floor = (SCALE_FLOOR * scale).max(1e-8);
    let mut worst = GradCheck {
        max_relative_error: 0.0,
        max_coordinate_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (e, &n) in numeric.iter().enumerate() {
        let a = analytic.data()[e].as_f64();
        let diff = (a - n).abs();
        let sum = a.abs() + n.abs();
        worst.max_coordinate_error = worst.max_coordinate_error.max(diff / sum.max(1e-8));
        // Written so that a NaN difference propagates as a failure.
        let rel = diff / sum.max(floor);
        if !(rel <= worst.max_relative_error) {
            worst.max_relative_error = rel;
            worst.worst_index = e;
            worst.analytic = a;
            worst.numeric = n;
        }
    }
    worst
}
