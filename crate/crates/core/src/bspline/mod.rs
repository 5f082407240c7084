//! Uniform B-splines in matrix form.
//!
//! On a uniform grid with spacing `delta_g`, the degree-`k` spline restricted
//! to one cell is the polynomial `U · M · P`, where `U = (1, u, …, u^k)` is the
//! monomial row at the fractional position `u ∈ [0, 1)`, `M` is the
//! `K × K` basis matrix (`K = k + 1`) and `P` is the window of `K` coefficients
//! that are non-zero on that cell.
//!
//! Knot convention used throughout the crate: knots sit at `t_j = j·δg`, the
//! basis function `B_j` is supported on `[t_j, t_{j+K})`, and cell `g_id`
//! reads the coefficient window `(p_{g_id−k}, …, p_{g_id})` as local
//! `(P_0, …, P_k)`. Cells are half-open, so a point on a knot belongs to the
//! cell on its right.

mod oracle;

use num_rational::Rational64;

pub use oracle::{basis_function, cox_de_boor, full_grid_basis};

/// Largest supported degree. Exact construction stays within `i64`.
pub const MAX_DEGREE: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplineError {
    #[error("unsupported B-spline degree {0} (maximum {MAX_DEGREE})")]
    UnsupportedDegree(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no coefficient for basis index {0}")]
    MissingCoefficient(i64),
}

/// Exact basis matrix of a degree-`k` uniform B-spline segment.
///
/// Row `i` holds the coefficients of `u^i`; column `r` belongs to local
/// coefficient `P_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    degree: usize,
    exact: Vec<Rational64>,
    values: Vec<f64>,
}

impl BasisMatrix {
    pub fn new(degree: usize) -> Result<Self, SplineError> {
        if degree > MAX_DEGREE {
            return Err(SplineError::UnsupportedDegree(degree));
        }
        let order = degree + 1;
        let pieces = segment_polynomials(degree);
        let mut exact = vec![Rational64::from_integer(0); order * order];
        for r in 0..order {
            // Column r multiplies P_r = p_{g_id-k+r}, whose basis function is
            // in its (k - r)-th piece on cell g_id.
            for (i, c) in pieces[degree - r].iter().enumerate() {
                exact[i * order + r] = *c;
            }
        }
        let values = exact
            .iter()
            .map(|q| *q.numer() as f64 / *q.denom() as f64)
            .collect();
        Ok(BasisMatrix {
            degree,
            exact,
            values,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of coefficients per segment, `K = k + 1`.
    pub fn order(&self) -> usize {
        self.degree + 1
    }

    pub fn exact(&self, row: usize, col: usize) -> Rational64 {
        self.exact[row * self.order() + col]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.order() + col]
    }

    /// Row-major float rendering.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Writes `U^(d) · M / scale^d` into `out` without validating `u`.
    ///
    /// `scale` converts derivatives in `u` to derivatives in `x`
    /// (pass `δg`, or `1.0` for derivatives in `u`).
    pub fn basis_row_into(&self, u: f64, derivative: usize, scale: f64, out: &mut [f64]) {
        let order = self.order();
        debug_assert_eq!(out.len(), order);
        out.iter_mut().for_each(|v| *v = 0.0);
        if derivative > self.degree {
            return;
        }
        // Horner-free accumulation: coefficient of row i is i!/(i-d)! u^(i-d).
        let mut power = 1.0;
        for i in derivative..order {
            let falling: f64 = ((i - derivative + 1)..=i).map(|v| v as f64).product();
            let w = falling * power;
            let row = &self.values[i * order..(i + 1) * order];
            for (o, m) in out.iter_mut().zip(row) {
                *o += w * m;
            }
            power *= u;
        }
        if derivative > 0 {
            let s = scale.powi(derivative as i32);
            out.iter_mut().for_each(|v| *v /= s);
        }
    }
}

/// Per-piece monomial coefficients of the cardinal B-spline `N_k` (support
/// `[0, k+1)`): entry `m` is the polynomial in `u` on `[m, m+1)`, built by
/// expanding the Cox–de Boor recursion in exact arithmetic.
fn segment_polynomials(degree: usize) -> Vec<Vec<Rational64>> {
    let zero = Rational64::from_integer(0);
    let mut pieces = vec![vec![Rational64::from_integer(1)]];
    for d in 1..=degree {
        let inv_d = Rational64::new(1, d as i64);
        let mut next = Vec::with_capacity(d + 1);
        for m in 0..=d {
            let mut poly = vec![zero; d + 1];
            // (m + u)/d · N_{d-1}[m](u)
            if m < d {
                let c0 = Rational64::from_integer(m as i64) * inv_d;
                for (i, c) in pieces[m].iter().enumerate() {
                    poly[i] += c0 * c;
                    poly[i + 1] += inv_d * c;
                }
            }
            // (d + 1 − m − u)/d · N_{d-1}[m−1](u)
            if m > 0 {
                let c0 = Rational64::from_integer((d + 1 - m) as i64) * inv_d;
                for (i, c) in pieces[m - 1].iter().enumerate() {
                    poly[i] += c0 * c;
                    poly[i + 1] -= inv_d * c;
                }
            }
            next.push(poly);
        }
        pieces = next;
    }
    pieces
}

pub fn basis_matrix(degree: usize) -> Result<BasisMatrix, SplineError> {
    BasisMatrix::new(degree)
}

/// Cell index and fractional position of a point on the uniform grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentLocation {
    pub cell: i64,
    pub u: f64,
}

pub fn locate(x: f64, delta_g: f64) -> Result<SegmentLocation, SplineError> {
    if !x.is_finite() {
        return Err(SplineError::Domain(format!("non-finite input {x}")));
    }
    if !(delta_g > 0.0) || !delta_g.is_finite() {
        return Err(SplineError::Domain(format!("grid spacing must be positive, got {delta_g}")));
    }
    let t = x / delta_g;
    let cell = t.floor();
    let mut u = t - cell;
    let mut cell = cell as i64;
    // t − floor(t) can round up to 1.0 for tiny negative t.
    if u >= 1.0 {
        u = 0.0;
        cell += 1;
    }
    Ok(SegmentLocation { cell, u })
}

fn check_u(u: f64) -> Result<(), SplineError> {
    if (0.0..1.0).contains(&u) {
        Ok(())
    } else {
        Err(SplineError::Domain(format!("u = {u} outside [0, 1)")))
    }
}

/// `U^(d) · M`: the `K` weights applied to the coefficient window, or their
/// `d`-th derivative in `u`. All zeros once `d` exceeds the degree.
pub fn basis_row(u: f64, m: &BasisMatrix, derivative: usize) -> Result<Vec<f64>, SplineError> {
    check_u(u)?;
    let mut out = vec![0.0; m.order()];
    m.basis_row_into(u, derivative, 1.0, &mut out);
    Ok(out)
}

/// `U^(d) · M · P` for one segment. Derivatives are in `u`; divide by
/// `δg^d` for derivatives in `x`.
pub fn eval_segment(
    u: f64,
    coeffs: &[f64],
    m: &BasisMatrix,
    derivative: usize,
) -> Result<f64, SplineError> {
    if coeffs.len() != m.order() {
        return Err(SplineError::Domain(format!(
            "expected {} coefficients, got {}",
            m.order(),
            coeffs.len()
        )));
    }
    let row = basis_row(u, m, derivative)?;
    Ok(row.iter().zip(coeffs).map(|(w, p)| w * p).sum())
}
