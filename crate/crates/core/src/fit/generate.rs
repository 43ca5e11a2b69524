use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fit::cart::{fit_cart, CartFit};
use crate::fit::logistic::{fit_logit, fit_polyreg, CategoricalFit};
use crate::fit::method::{MethodKind, MethodSpec, Response};
use crate::fit::ols::{fit_ols, LinearFit};
use crate::table::DesignMatrix;

/// Method-specific fitted parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Empirical(Response),
    /// Linear fit; `donors` holds the observed response for rank mapping.
    Linear {
        fit: LinearFit,
        donors: Vec<f64>,
    },
    Categorical(CategoricalFit),
    Cart(CartFit),
}

/// A fitted conditional model together with its optional posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedGenerator {
    pub spec: MethodSpec,
    pub params: Params,
    /// Parameters drawn for one replicate; present only for proper synthesis.
    pub drawn: Option<Params>,
    pub warnings: Vec<String>,
}

impl FittedGenerator {
    /// Fit `spec` to response `y` with design `x`. The design is ignored for
    /// the empirical method.
    pub fn fit(spec: MethodSpec, y: &Response, x: &DesignMatrix) -> Result<FittedGenerator> {
        if y.is_empty() {
            return Err(Error::invalid("cannot fit a model to zero rows"));
        }
        let mut warnings = Vec::new();
        let params = match (spec.kind, y) {
            (MethodKind::Empirical, _) => Params::Empirical(y.clone()),
            (MethodKind::Norm | MethodKind::Normrank, Response::Continuous(v)) => Params::Linear {
                fit: fit_ols(v, x)?,
                donors: v.clone(),
            },
            (MethodKind::Logit, Response::Categorical { codes, .. }) => {
                let f = fit_logit(codes, x)?;
                warnings.extend(f.warnings.iter().cloned());
                Params::Categorical(f)
            }
            (MethodKind::Polyreg, Response::Categorical { codes, n_categories }) => {
                let f = fit_polyreg(codes, *n_categories, x)?;
                warnings.extend(f.warnings.iter().cloned());
                Params::Categorical(f)
            }
            (MethodKind::Cart, _) => Params::Cart(fit_cart(y, x, spec.cart)),
            (kind, _) => {
                return Err(Error::invalid(format!(
                    "method {} does not match the response type",
                    kind.name()
                )))
            }
        };
        Ok(FittedGenerator {
            spec,
            params,
            drawn: None,
            warnings,
        })
    }

    /// Parameters used for generation: the draw when present, else the fit.
    pub fn active(&self) -> &Params {
        self.drawn.as_ref().unwrap_or(&self.params)
    }

    /// Attach a posterior-predictive parameter draw. Parametric methods use
    /// large-sample normal posteriors; CART and empirical refit on a
    /// bootstrap resample of the fitting rows.
    pub fn draw_posterior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<FittedGenerator> {
        if !self.spec.proper {
            return Err(Error::invalid(format!(
                "posterior draw requested for a {} fit without proper synthesis",
                self.spec.kind.name()
            )));
        }
        let drawn = match &self.params {
            Params::Empirical(y) => {
                let rows = bootstrap_rows(y.len(), rng);
                Params::Empirical(y.select(&rows))
            }
            Params::Linear { fit, donors } => Params::Linear {
                fit: fit.draw(rng)?,
                donors: donors.clone(),
            },
            Params::Categorical(f) => Params::Categorical(f.draw(rng)?),
            Params::Cart(f) => {
                let rows = bootstrap_rows(f.y.len(), rng);
                Params::Cart(fit_cart(&f.y.select(&rows), &f.x.select_rows(&rows), f.controls))
            }
        };
        Ok(FittedGenerator {
            drawn: Some(drawn),
            ..self.clone()
        })
    }

    /// Generate one synthetic value per row of `x`.
    pub fn generate<R: Rng + ?Sized>(&self, x: &DesignMatrix, rng: &mut R) -> Response {
        let smoothing = self.spec.smoothing;
        match self.active() {
            Params::Empirical(donors) => empirical_sample(donors, x.nrows(), rng, smoothing),
            Params::Linear { fit, donors } => match self.spec.kind {
                MethodKind::Normrank => Response::Continuous(generate_normrank(fit, x, donors, rng, smoothing)),
                _ => Response::Continuous(generate_norm(fit, x, rng)),
            },
            Params::Categorical(f) => Response::Categorical {
                codes: generate_categorical(f, x, rng),
                n_categories: f.n_categories,
            },
            Params::Cart(f) => cart_generate(f, x, rng, smoothing),
        }
    }
}

fn bootstrap_rows<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// `Xθ + N(0, σ²)` at the fitted (or drawn) parameters.
pub fn generate_norm<R: Rng + ?Sized>(fit: &LinearFit, x: &DesignMatrix, rng: &mut R) -> Vec<f64> {
    let sd = fit.sigma2.max(0.0).sqrt();
    fit.predict(x)
        .iter()
        .map(|&mu| mu + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Generate as [`generate_norm`], then replace the value of rank `r` by the
/// donor quantile at `(r − 0.5)/k`.
pub fn generate_normrank<R: Rng + ?Sized>(
    fit: &LinearFit,
    x: &DesignMatrix,
    donors: &[f64],
    rng: &mut R,
    smoothing: bool,
) -> Vec<f64> {
    assert!(!donors.is_empty(), "normrank needs donors");
    let raw = generate_norm(fit, x, rng);
    let k = raw.len();
    let mut sorted = donors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let mut out = vec![0.0; k];
    for (r, &i) in order.iter().enumerate() {
        out[i] = donor_quantile(&sorted, (r as f64 + 0.5) / k as f64);
    }
    if smoothing {
        smooth(&mut out, bandwidth(&sorted), rng);
    }
    out
}

/// Linear interpolation into sorted donors at 1-based position `p·m + 0.5`.
fn donor_quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    let mut h = (p * m as f64 + 0.5).clamp(1.0, m as f64);
    // k = m lands on whole positions; keep them exact
    if (h - h.round()).abs() < 1e-9 {
        h = h.round();
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo >= m || frac == 0.0 {
        sorted[lo - 1]
    } else {
        sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
    }
}

/// Normal-reference bandwidth `0.9·min(sd, IQR/1.34)·m^(−1/5)` of a donor
/// pool; zero spread terms fall back to the other, both zero gives 0.
pub fn bandwidth(values: &[f64]) -> f64 {
    let m = values.len();
    if m < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (m - 1) as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(m - 1);
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = (q(0.75) - q(0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return 0.0,
    };
    0.9 * spread * (m as f64).powf(-0.2)
}

fn smooth<R: Rng + ?Sized>(values: &mut [f64], h: f64, rng: &mut R) {
    if h > 0.0 {
        for v in values {
            *v += h * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Sample each row's category from its fitted probability vector.
pub fn generate_categorical<R: Rng + ?Sized>(fit: &CategoricalFit, x: &DesignMatrix, rng: &mut R) -> Vec<u32> {
    let probs = fit.probabilities(x);
    (0..x.nrows())
        .map(|i| {
            let row = probs.row(i);
            debug_assert!((row.sum() - 1.0).abs() < 1e-9);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = fit.categories.len() - 1;
            for (j, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            fit.categories[pick]
        })
        .collect()
}

/// Route each row of `x` to its leaf and emit a uniformly drawn donor value.
pub fn cart_generate<R: Rng + ?Sized>(fit: &CartFit, x: &DesignMatrix, rng: &mut R, smoothing: bool) -> Response {
    let leaves: Vec<usize> = (0..x.nrows()).map(|i| fit.leaf_of(x, i)).collect();
    let picks: Vec<usize> = leaves
        .iter()
        .map(|&leaf| *fit.node_donors(leaf).choose(rng).expect("leaves are nonempty"))
        .collect();
    let mut out = fit.y.select(&picks);
    if let (true, Response::Continuous(v)) = (smoothing, &mut out) {
        let Response::Continuous(y) = &fit.y else {
            unreachable!()
        };
        let mut h = vec![f64::NAN; fit.n_nodes()];
        for (val, &leaf) in v.iter_mut().zip(&leaves) {
            if h[leaf].is_nan() {
                let pool: Vec<f64> = fit.node_donors(leaf).iter().map(|&r| y[r]).collect();
                h[leaf] = bandwidth(&pool);
            }
            if h[leaf] > 0.0 {
                *val += h[leaf] * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    out
}

/// With-replacement sample of `k` donor values.
pub fn empirical_sample<R: Rng + ?Sized>(donors: &Response, k: usize, rng: &mut R, smoothing: bool) -> Response {
    assert!(!donors.is_empty(), "empirical sampling needs donors");
    let rows = (0..k).map(|_| rng.random_range(0..donors.len())).collect::<Vec<_>>();
    let mut out = donors.select(&rows);
    if let (true, Response::Continuous(v), Response::Continuous(pool)) = (smoothing, &mut out, donors) {
        smooth(v, bandwidth(pool), rng);
    }
    out
}
