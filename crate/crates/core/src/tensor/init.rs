use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Glorot/Xavier uniform: i.i.d. `U[−s, s]` with `s = √(6/(rows+cols))`.
pub fn glorot_init<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DenseMatrix<T> {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| {
        T::from_f64((rng.random::<f64>() * 2.0 - 1.0) * s)
    })
}
