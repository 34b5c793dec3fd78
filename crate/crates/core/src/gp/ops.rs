//! Element-wise exponential operators on dense matrices.

use nalgebra::DMatrix;

use super::GpError;

/// `X̂_ij = b^{X_ij}`.
pub fn elementwise_exp(x: &DMatrix<f64>, b: f64) -> DMatrix<f64> {
    x.map(|v| b.powf(v))
}

/// `C_ij = Π_k X̂_kj^{Y_ik}` for positive `X̂` (m×p) and real `Y` (n×m).
pub fn star_product(x_hat: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>, GpError> {
    if y.ncols() != x_hat.nrows() {
        return Err(GpError::DimensionMismatch(format!(
            "Y is {}x{} but X̂ has {} rows",
            y.nrows(),
            y.ncols(),
            x_hat.nrows()
        )));
    }
    Ok(DMatrix::from_fn(y.nrows(), x_hat.ncols(), |i, j| {
        (0..y.ncols()).map(|k| x_hat[(k, j)].powf(y[(i, k)])).product()
    }))
}

/// Largest relative gap between `b^{YX}` and `b^X ⋆ Y`.
///
/// Entries are compared relative to the magnitude of `b^{YX}`, which is the
/// only meaningful scale for values that can span many decades.
pub fn verify_property1(x: &DMatrix<f64>, y: &DMatrix<f64>, b: f64) -> Result<f64, GpError> {
    let lhs = elementwise_exp(&(y * x), b);
    let rhs = star_product(&elementwise_exp(x, b), y)?;
    Ok(lhs
        .iter()
        .zip(rhs.iter())
        .map(|(l, r)| (l - r).abs() / l.abs())
        .fold(0.0, f64::max))
}
