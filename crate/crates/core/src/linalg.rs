//! Dense symmetric linear algebra helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{BssError, Result};

/// First diagonal jitter, relative to `trace / d`.
pub const JITTER_START: f64 = 1e-12;
/// Largest diagonal jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// Lower Cholesky factor of a covariance matrix with escalating diagonal
/// jitter. A zero matrix factors to zero.
pub fn cholesky_with_jitter(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    if d != cov.ncols() {
        return Err(BssError::invalid("covariance matrix must be square"));
    }
    if d == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let trace = cov.trace();
    if !trace.is_finite() || trace < 0.0 {
        return Err(BssError::numerical(format!("covariance trace is {trace}")));
    }
    if cov.iter().all(|&x| x == 0.0) {
        return Ok(DMatrix::zeros(d, d));
    }
    let scale = trace / d as f64;
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let mut jittered = cov.clone();
        for i in 0..d {
            jittered[(i, i)] += rel * scale;
        }
        if let Some(ch) = jittered.cholesky() {
            return Ok(ch.unpack());
        }
        rel *= 10.0;
    }
    Err(BssError::Numerical {
        message: "Cholesky factorization failed after jitter escalation".into(),
        estimate: min_eigenvalue(cov),
        error_bound: JITTER_MAX * scale,
    })
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..500 {
        let w = a.transpose() * (a * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = w / norm;
        if (next - sigma).abs() <= 1e-12 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

/// Serializes a matrix as a list of rows.
pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}
