use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, independent_columns, mvn_draw};
use crate::table::DesignMatrix;

/// Least-squares fit of a continuous response.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: DVector<f64>,
    /// Residual variance `RSS / (n - p)`, or the drawn variance after a
    /// posterior draw.
    pub sigma2: f64,
    pub xtx_inv: DMatrix<f64>,
    pub n: usize,
    pub names: Vec<String>,
}

impl LinearFit {
    pub fn df_resid(&self) -> usize {
        self.n - self.coef.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.xtx_inv * self.sigma2
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coef.len())
            .map(|j| (self.xtx_inv[(j, j)] * self.sigma2).max(0.0).sqrt())
            .collect()
    }

    pub fn predict(&self, x: &DesignMatrix) -> DVector<f64> {
        x.matrix() * &self.coef
    }

    /// Large-sample posterior draw: `σ² ~ RSS / χ²(n−p)`, then
    /// `β ~ N(β̂, σ² (XᵀX)⁻¹)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LinearFit> {
        let df = self.df_resid();
        let rss = self.sigma2 * df as f64;
        let chi = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        let sigma2 = rss / chi.sample(rng);
        let coef = if self.coef.len() == 1 {
            let sd = (self.xtx_inv[(0, 0)] * sigma2).sqrt();
            DVector::from_element(1, self.coef[0] + sd * rng.sample::<f64, _>(StandardNormal))
        } else {
            let l = cholesky_lower(&(&self.xtx_inv * sigma2))?;
            mvn_draw(&self.coef, &l, rng)
        };
        Ok(LinearFit {
            coef,
            sigma2,
            xtx_inv: self.xtx_inv.clone(),
            n: self.n,
            names: self.names.clone(),
        })
    }
}

/// Ordinary least squares via the normal equations.
pub fn fit_ols(y: &[f64], x: &DesignMatrix) -> Result<LinearFit> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::invalid(format!("response has {} rows, design has {n}", y.len())));
    }
    if n <= p {
        return Err(Error::TooFewRows { rows: n, params: p });
    }
    let (_, dropped) = independent_columns(x.matrix());
    if !dropped.is_empty() {
        return Err(Error::Collinear(
            dropped.iter().map(|&j| x.names()[j].clone()).collect(),
        ));
    }
    let xm = x.matrix();
    let yv = DVector::from_column_slice(y);
    let xtx = xm.transpose() * xm;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Numerical("XᵀX is not positive definite".into()))?;
    let coef = chol.solve(&(xm.transpose() * &yv));
    let resid = &yv - xm * &coef;
    let rss = resid.norm_squared();
    Ok(LinearFit {
        coef,
        sigma2: rss / (n - p) as f64,
        xtx_inv: chol.inverse(),
        n,
        names: x.names().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::table::INTERCEPT;
    use rand_distr::Normal;

    fn design(xs: &[f64]) -> DesignMatrix {
        let m = DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        DesignMatrix::from_matrix(m, vec![INTERCEPT.into(), "x".into()]).unwrap()
    }

    #[test]
    fn exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let f = fit_ols(&y, &design(&xs)).unwrap();
        assert!((f.coef[1] - 2.0).abs() < 1e-12);
        assert!(f.coef[0].abs() < 1e-12);
        assert!(f.sigma2.abs() < 1e-20);
    }

    #[test]
    fn constant_response() {
        let xs = [1.0, -2.0, 3.0, 7.0];
        let f = fit_ols(&[4.5; 4], &design(&xs)).unwrap();
        assert!((f.coef[0] - 4.5).abs() < 1e-12);
        assert!(f.coef[1].abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let m = DMatrix::from_fn(5, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 3.0 * i as f64,
        });
        let d = DesignMatrix::from_matrix(m, vec![INTERCEPT.into(), "a".into(), "b".into()]).unwrap();
        match fit_ols(&[1.0, 2.0, 3.0, 4.0, 6.0], &d) {
            Err(Error::Collinear(cols)) => assert_eq!(cols, vec!["b".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(
            fit_ols(&[1.0, 2.0], &design(&[1.0, 2.0])),
            Err(Error::TooFewRows { rows: 2, params: 2 })
        ));
    }

    #[test]
    fn simulated_slope_within_four_se() {
        // se(slope) = 1/sqrt(n var(x)) = 0.01 for n = 10000, x ~ N(0,1)
        let mut rng = stream(11);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let noise = Normal::new(0.0, 1.0).unwrap();
        let y: Vec<f64> = xs.iter().map(|x| 1.0 + 3.0 * x + noise.sample(&mut rng)).collect();
        let f = fit_ols(&y, &design(&xs)).unwrap();
        assert!((f.coef[1] - 3.0).abs() < 0.05, "{}", f.coef[1]);
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let mut rng = stream(5);
        let xs: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..100.0)).collect();
        let y: Vec<f64> = xs.iter().map(|x| 0.3 * x + rng.random_range(-5.0..5.0)).collect();
        let d = design(&xs);
        let f = fit_ols(&y, &d).unwrap();
        let r = DVector::from_column_slice(&y) - f.predict(&d);
        let xtr = d.matrix().transpose() * r;
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 100.0;
        assert!(xtr.amax() < 1e-6 * 500.0 * scale);
    }
}
