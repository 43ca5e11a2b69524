//! Dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Pivot below which a scaled column counts as a linear combination of
/// the columns before it (`1 - R²` against them).
const COLLINEAR_TOL: f64 = 1e-9;

/// Split columns of `x` into a linearly independent prefix-greedy set and
/// the columns that are (numerically) combinations of earlier ones.
pub(crate) fn independent_columns(x: &DMatrix<f64>) -> (Vec<usize>, Vec<usize>) {
    let a = x.transpose() * x;
    let p = a.ncols();
    let scale: Vec<f64> = (0..p).map(|j| a[(j, j)].sqrt()).collect();
    let mut keep: Vec<usize> = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    // rows of the incremental Cholesky factor, indexed by position in `keep`
    let mut l: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        if scale[j] == 0.0 || !scale[j].is_finite() {
            dropped.push(j);
            continue;
        }
        let mut row = Vec::with_capacity(keep.len() + 1);
        for (ki, &k) in keep.iter().enumerate() {
            let c = a[(j, k)] / (scale[j] * scale[k]);
            let s: f64 = (0..ki).map(|m| row[m] * l[ki][m]).sum();
            row.push((c - s) / l[ki][ki]);
        }
        let d = 1.0 - row.iter().map(|v| v * v).sum::<f64>();
        if d < COLLINEAR_TOL {
            dropped.push(j);
        } else {
            row.push(d.sqrt());
            l.push(row);
            keep.push(j);
        }
    }
    (keep, dropped)
}

/// Inverse of a symmetric positive-definite matrix.
pub(crate) fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

/// Lower Cholesky factor, adding a small ridge if the matrix is only
/// semi-definite.
pub(crate) fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = a.clone().cholesky() {
        return Ok(c.l());
    }
    let n = a.nrows();
    let base = (a.trace().abs() / n.max(1) as f64).max(f64::MIN_POSITIVE);
    let mut ridge = base * 1e-10;
    for _ in 0..12 {
        let m = a + DMatrix::identity(n, n) * ridge;
        if let Some(c) = m.cholesky() {
            return Ok(c.l());
        }
        ridge *= 10.0;
    }
    Err(Error::Numerical(
        "covariance matrix is not positive semi-definite".into(),
    ))
}

pub(crate) fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `mean + L z`, `z ~ N(0, I)`.
pub(crate) fn mvn_draw<R: Rng + ?Sized>(mean: &DVector<f64>, chol_lower: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    mean + chol_lower * standard_normal_vec(mean.len(), rng)
}

/// Draw from inverse-Wishart(`df`, `scale`) via the Bartlett decomposition
/// of the corresponding Wishart(`df`, `scale⁻¹`).
pub(crate) fn inverse_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if df <= (p as f64) - 1.0 {
        return Err(Error::invalid(format!(
            "inverse-Wishart needs df > p - 1, got df={df}, p={p}"
        )));
    }
    let l = cholesky_lower(&spd_inverse(scale)?)?;
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = l * a;
    let w = &la * la.transpose();
    spd_inverse(&w)
}
