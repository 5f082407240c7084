//! Textbook Cox–de Boor evaluation. Slow on purpose: used as a test oracle
//! and as the full-grid benchmark arm, never on the matrix-form path.

use super::SplineError;

/// `B_{j,k}(x)` on uniform knots `t_i = i·δg`, by direct recursion.
pub fn basis_function(j: i64, k: usize, x: f64, delta_g: f64) -> f64 {
    let t = |i: i64| i as f64 * delta_g;
    if k == 0 {
        return if t(j) <= x && x < t(j + 1) { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    let left = (x - t(j)) / (kf * delta_g) * basis_function(j, k - 1, x, delta_g);
    let right = (t(j + k as i64 + 1) - x) / (kf * delta_g) * basis_function(j + 1, k - 1, x, delta_g);
    left + right
}

/// `Σ_j p_j · B_{j,k}(x)` over the basis functions whose support contains
/// `x`. `coeffs(j)` must return every such `p_j`.
pub fn cox_de_boor(
    x: f64,
    delta_g: f64,
    coeffs: impl Fn(i64) -> Option<f64>,
    k: usize,
) -> Result<f64, SplineError> {
    let loc = super::locate(x, delta_g)?;
    let mut total = 0.0;
    for j in (loc.cell - k as i64)..=loc.cell {
        let p = coeffs(j).ok_or(SplineError::MissingCoefficient(j))?;
        total += p * basis_function(j, k, x, delta_g);
    }
    Ok(total)
}

/// All `n_basis` degree-`k` basis values at position `tau` (in knot units,
/// knots at the integers, basis `j` supported on `[j, j + k + 1)`), given the
/// knot interval `cell` that contains `tau`. Computes the whole Cox–de Boor
/// triangle across the grid, `O(k · n_basis)` per point.
///
/// `out` receives `n_basis` values; `scratch` must hold `n_basis + k + 1`.
pub fn full_grid_basis(
    tau: f64,
    cell: usize,
    n_basis: usize,
    k: usize,
    degree_out: usize,
    out: &mut [f64],
    scratch: &mut [f64],
) {
    let n0 = n_basis + k;
    debug_assert!(scratch.len() >= n0);
    debug_assert!(degree_out <= k);
    for (i, s) in scratch[..n0].iter_mut().enumerate() {
        *s = if i == cell { 1.0 } else { 0.0 };
    }
    for d in 1..=degree_out {
        let df = d as f64;
        for j in 0..(n0 - d) {
            let jf = j as f64;
            scratch[j] = (tau - jf) / df * scratch[j] + (jf + df + 1.0 - tau) / df * scratch[j + 1];
        }
    }
    let n = (n0 - degree_out).min(out.len());
    out[..n].copy_from_slice(&scratch[..n]);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_hat() {
        assert!((basis_function(0, 1, 0.5, 1.0) - 0.5).abs() < 1e-15);
        assert!((basis_function(0, 1, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(basis_function(0, 1, 2.0, 1.0), 0.0);
        let v = cox_de_boor(0.5, 1.0, |j| Some(if j == 0 { 1.0 } else { 0.0 }), 1).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_coefficients_reproduce_constant() {
        for k in 0..6 {
            for &x in &[-3.7, -0.01, 0.0, 0.3, 12.25] {
                let v = cox_de_boor(x, 0.7, |_| Some(-1.5), k).unwrap();
                assert!((v + 1.5).abs() < 1e-12, "k={k} x={x}: {v}");
            }
        }
    }

    #[test]
    fn missing_coefficient_is_reported() {
        let err = cox_de_boor(0.5, 1.0, |j| (j >= 0).then_some(1.0), 2).unwrap_err();
        assert_eq!(err, SplineError::MissingCoefficient(-2));
    }

    #[test]
    fn full_grid_matches_recursion() {
        let k = 3;
        let n_basis = 9;
        let mut out = vec![0.0; n_basis];
        let mut scratch = vec![0.0; n_basis + k + 1];
        for &tau in &[3.0f64, 3.4, 5.9, 8.2, 11.99] {
            let cell = tau.floor() as usize;
            full_grid_basis(tau, cell, n_basis, k, k, &mut out, &mut scratch);
            for (j, v) in out.iter().enumerate() {
                let expected = basis_function(j as i64, k, tau, 1.0);
                assert!((v - expected).abs() < 1e-13, "tau={tau} j={j}");
            }
        }
    }
}
