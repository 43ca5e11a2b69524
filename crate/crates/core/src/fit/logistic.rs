use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, mvn_draw};
use crate::table::DesignMatrix;

const MAX_ITER: usize = 50;
const SCORE_TOL: f64 = 1e-8;
const DEVIANCE_TOL: f64 = 1e-10;
const COEF_LIMIT: f64 = 30.0;
const PROB_EPS: f64 = 1e-10;

/// Multinomial logit fit (binary logit is the two-category case).
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalFit {
    /// `p × J`; column `j` holds log-odds of `categories[j + 1]` against
    /// the baseline `categories[0]`.
    pub coef: DMatrix<f64>,
    /// Categories seen in the fitting data, baseline first.
    pub categories: Vec<u32>,
    pub n_categories: usize,
    /// Inverse observed information for `vec(coef)` (column-major).
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_abs_score: f64,
    /// Set when the fit shows signs of separation or sparse cells.
    pub separation: bool,
    pub warnings: Vec<String>,
    pub names: Vec<String>,
}

impl CategoricalFit {
    /// Row-wise probabilities over `categories`.
    pub fn probabilities(&self, x: &DesignMatrix) -> DMatrix<f64> {
        softmax_rows(&(x.matrix() * &self.coef))
    }

    /// Standard errors of `coef`, in the same layout.
    pub fn std_errors(&self) -> DMatrix<f64> {
        let (p, j) = self.coef.shape();
        DMatrix::from_fn(p, j, |a, b| {
            let i = b * p + a;
            self.covariance[(i, i)].max(0.0).sqrt()
        })
    }

    /// Normal large-sample posterior draw of the coefficients.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CategoricalFit> {
        let l = cholesky_lower(&self.covariance)?;
        let mean = DVector::from_column_slice(self.coef.as_slice());
        let v = mvn_draw(&mean, &l, rng);
        let mut out = self.clone();
        out.coef = DMatrix::from_column_slice(self.coef.nrows(), self.coef.ncols(), v.as_slice());
        Ok(out)
    }
}

fn softmax_rows(eta: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, j) = eta.shape();
    let mut probs = DMatrix::zeros(n, j + 1);
    for i in 0..n {
        let mx = (0..j).map(|c| eta[(i, c)]).fold(0.0f64, f64::max);
        let base = (-mx).exp();
        let mut total = base;
        for c in 0..j {
            let e = (eta[(i, c)] - mx).exp();
            probs[(i, c + 1)] = e;
            total += e;
        }
        probs[(i, 0)] = base / total;
        for c in 0..j {
            probs[(i, c + 1)] /= total;
        }
    }
    probs
}

/// Binary logistic regression; `y` holds category codes, both of which
/// must be present.
pub fn fit_logit(y: &[u32], x: &DesignMatrix) -> Result<CategoricalFit> {
    let mut present: Vec<u32> = y.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() != 2 {
        return Err(Error::invalid(format!(
            "logit needs exactly two observed categories, found {}",
            present.len()
        )));
    }
    let n_categories = present[1] as usize + 1;
    fit_multinomial(y, n_categories, x)
}

/// Multinomial logistic regression with the first level as baseline.
/// Levels absent from `y` get probability zero.
pub fn fit_polyreg(y: &[u32], n_categories: usize, x: &DesignMatrix) -> Result<CategoricalFit> {
    fit_multinomial(y, n_categories, x)
}

fn fit_multinomial(y: &[u32], n_categories: usize, x: &DesignMatrix) -> Result<CategoricalFit> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::invalid(format!("response has {} rows, design has {n}", y.len())));
    }
    let mut seen = vec![false; n_categories];
    for &c in y {
        *seen
            .get_mut(c as usize)
            .ok_or_else(|| Error::invalid(format!("category {c} out of range")))? = true;
    }
    let categories: Vec<u32> = (0..n_categories as u32).filter(|&c| seen[c as usize]).collect();
    if categories.len() < 2 {
        return Err(Error::invalid("need at least two observed categories"));
    }
    let mut slot = vec![usize::MAX; n_categories];
    for (s, &c) in categories.iter().enumerate() {
        slot[c as usize] = s;
    }
    let yk: Vec<usize> = y.iter().map(|&c| slot[c as usize]).collect();
    let j = categories.len() - 1;
    let dim = p * j;
    let xm = x.matrix();

    let deviance = |probs: &DMatrix<f64>| -> f64 {
        -2.0 * yk
            .iter()
            .enumerate()
            .map(|(i, &k)| probs[(i, k)].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
    };
    let score_info = |probs: &DMatrix<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut g = DVector::zeros(dim);
        let mut resid = DMatrix::zeros(n, j);
        for i in 0..n {
            for c in 0..j {
                resid[(i, c)] = f64::from(u8::from(yk[i] == c + 1)) - probs[(i, c + 1)];
            }
        }
        let xtr = xm.transpose() * &resid;
        for c in 0..j {
            for a in 0..p {
                g[c * p + a] = xtr[(a, c)];
            }
        }
        let mut h = DMatrix::zeros(dim, dim);
        let mut wx = xm.clone();
        for c1 in 0..j {
            for c2 in c1..j {
                for i in 0..n {
                    let w = if c1 == c2 {
                        probs[(i, c1 + 1)] * (1.0 - probs[(i, c1 + 1)])
                    } else {
                        -probs[(i, c1 + 1)] * probs[(i, c2 + 1)]
                    };
                    for a in 0..p {
                        wx[(i, a)] = w * xm[(i, a)];
                    }
                }
                let block = xm.transpose() * &wx;
                h.view_mut((c1 * p, c2 * p), (p, p)).copy_from(&block);
                if c1 != c2 {
                    h.view_mut((c2 * p, c1 * p), (p, p)).copy_from(&block.transpose());
                }
            }
        }
        (g, h)
    };

    let mut coef = DMatrix::<f64>::zeros(p, j);
    let mut probs = softmax_rows(&(xm * &coef));
    let mut dev = deviance(&probs);
    let mut converged = false;
    let mut iterations = 0;
    let (mut g, mut h) = score_info(&probs);
    while iterations < MAX_ITER {
        if g.amax() < SCORE_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => {
                let l = cholesky_lower(&h)?;
                let c = nalgebra::Cholesky::new(&l * l.transpose())
                    .ok_or_else(|| Error::Numerical("information matrix is singular".into()))?;
                c.solve(&g)
            }
        };
        let step = DMatrix::from_column_slice(p, j, step.as_slice());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &coef + &step * t;
            let cp = softmax_rows(&(xm * &cand));
            let cd = deviance(&cp);
            if cd.is_finite() && cd <= dev + 1e-12 * dev.abs().max(1.0) {
                accepted = Some((cand, cp, cd));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cp, cd)) = accepted else {
            break;
        };
        let rel = (dev - cd).abs() / (cd.abs() + 0.1);
        coef = cand;
        probs = cp;
        dev = cd;
        (g, h) = score_info(&probs);
        if rel < DEVIANCE_TOL || g.amax() < SCORE_TOL {
            converged = true;
            break;
        }
    }

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("no convergence within {MAX_ITER} iterations"));
    }
    if coef.amax() > COEF_LIMIT {
        warnings.push(format!("coefficient magnitude exceeds {COEF_LIMIT}"));
    }
    if probs.iter().any(|&v| v < PROB_EPS) {
        warnings.push("fitted probabilities numerically 0 or 1".to_string());
    }
    let separation = !warnings.is_empty();
    if separation {
        warnings.push("possible separation / sparse cells".to_string());
    }
    let l = cholesky_lower(&h)?;
    let covariance = nalgebra::Cholesky::new(&l * l.transpose())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical("information matrix is singular".into()))?;
    Ok(CategoricalFit {
        coef,
        categories,
        n_categories,
        covariance,
        iterations,
        converged,
        max_abs_score: g.amax(),
        separation,
        warnings,
        names: x.names().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::table::INTERCEPT;
    use rand_distr::StandardNormal;

    fn design(xs: &[f64]) -> DesignMatrix {
        let m = DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        DesignMatrix::from_matrix(m, vec![INTERCEPT.into(), "x".into()]).unwrap()
    }

    #[test]
    fn balanced_intercept_only_is_zero() {
        let y: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let f = fit_logit(&y, &DesignMatrix::intercept_only(100)).unwrap();
        assert!(f.coef[(0, 0)].abs() < 1e-12);
        assert!(f.converged && !f.separation);
    }

    #[test]
    fn recovers_simulated_coefficients() {
        let mut rng = stream(21);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<u32> = xs
            .iter()
            .map(|x| {
                let p = 1.0 / (1.0 + (-(-1.0 + 2.0 * x)).exp());
                u32::from(rng.random::<f64>() < p)
            })
            .collect();
        let f = fit_logit(&y, &design(&xs)).unwrap();
        let se = f.std_errors();
        assert!((f.coef[(0, 0)] + 1.0).abs() < 4.0 * se[(0, 0)]);
        assert!((f.coef[(1, 0)] - 2.0).abs() < 4.0 * se[(1, 0)]);
        assert!(f.max_abs_score < 1e-6);
        assert!(!f.separation);
    }

    #[test]
    fn separated_data_warns() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 - 19.5).collect();
        let y: Vec<u32> = xs.iter().map(|&x| u32::from(x > 0.0)).collect();
        let f = fit_logit(&y, &design(&xs)).unwrap();
        assert!(f.separation, "{:?}", f.warnings);
    }

    #[test]
    fn sparse_level_in_polyreg_warns() {
        // level 2 occurs only where x = 1, never where x = 0
        let mut y = Vec::new();
        let mut xs = Vec::new();
        for i in 0..300 {
            xs.push(f64::from(u8::from(i % 3 == 0)));
            y.push(if i % 3 == 0 && i % 9 == 0 { 2 } else { (i % 2) as u32 });
        }
        let f = fit_polyreg(&y, 3, &design(&xs)).unwrap();
        assert!(f.separation, "{:?}", f.warnings);
    }

    #[test]
    fn polyreg_probabilities_match_frequencies() {
        let y: Vec<u32> = (0..600).map(|i| [0, 1, 1, 2, 2, 2][i % 6]).collect();
        let f = fit_polyreg(&y, 4, &DesignMatrix::intercept_only(600)).unwrap();
        let p = f.probabilities(&DesignMatrix::intercept_only(1));
        assert_eq!(f.categories, vec![0, 1, 2]);
        for (got, want) in p.row(0).iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 1e-9);
        }
    }
}
