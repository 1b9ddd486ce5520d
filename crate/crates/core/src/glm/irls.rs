use super::{sigmoid, GlmError, LogisticModel};
use crate::preprocess::FeatureMatrix;
use nalgebra::{DMatrix, DVector};

pub const MAX_ITERATIONS: usize = 100;
pub const MAX_HALVINGS: usize = 20;
pub const BETA_TOLERANCE: f64 = 1e-8;
pub const DEVIANCE_TOLERANCE: f64 = 1e-10;
/// Stationarity required before a fit is reported as converged.
pub const SCORE_TOLERANCE: f64 = 1e-6;
/// Smallest admissible Cholesky pivot of the unit-diagonal scaled information.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
pub const SEPARATION_PROB: f64 = 1e-10;
pub const SEPARATION_BETA: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Diagnostic only: added to the information diagonal and recorded on the model.
    pub ridge: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: MAX_ITERATIONS,
            ridge: None,
        }
    }
}

/// ln(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn deviance(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    2.0 * eta
        .iter()
        .zip(y.iter())
        .map(|(&e, &yi)| yi * softplus(-e) + (1.0 - yi) * softplus(e))
        .sum::<f64>()
}

struct Working {
    score: DVector<f64>,
    information: DMatrix<f64>,
    extreme_fit: bool,
}

fn working(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, ridge: Option<f64>) -> Working {
    let eta = x * beta;
    let n = x.nrows();
    let mut resid = DVector::zeros(n);
    let mut sqrt_w = DVector::zeros(n);
    let mut extreme_fit = false;
    for i in 0..n {
        let p = sigmoid(eta[i]);
        resid[i] = y[i] - p;
        // p(1-p) from e^{-|eta|} keeps full precision in the tails.
        let e = (-eta[i].abs()).exp();
        sqrt_w[i] = (e / ((1.0 + e) * (1.0 + e))).sqrt();
        if p < SEPARATION_PROB || p > 1.0 - SEPARATION_PROB {
            extreme_fit = true;
        }
    }
    let mut xw = x.clone();
    for mut col in xw.column_iter_mut() {
        col.component_mul_assign(&sqrt_w);
    }
    let mut information = xw.tr_mul(&xw);
    if let Some(r) = ridge {
        for j in 0..information.ncols() {
            information[(j, j)] += r;
        }
    }
    Working {
        score: x.tr_mul(&resid),
        information,
        extreme_fit,
    }
}

/// Cholesky factor of the information matrix after scaling it to unit
/// diagonal; `None` when a scaled pivot falls below `PIVOT_TOLERANCE`.
pub(super) struct ScaledCholesky {
    scale: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl ScaledCholesky {
    pub(super) fn new(m: &DMatrix<f64>) -> Option<Self> {
        let p = m.ncols();
        let mut scale = DVector::zeros(p);
        for j in 0..p {
            let d = m[(j, j)];
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            scale[j] = 1.0 / d.sqrt();
        }
        let scaled = DMatrix::from_fn(p, p, |i, j| m[(i, j)] * scale[i] * scale[j]);
        let chol = scaled.cholesky()?;
        let l = chol.l_dirty();
        if (0..p).any(|j| l[(j, j)] * l[(j, j)] < PIVOT_TOLERANCE) {
            return None;
        }
        Some(Self { scale, chol })
    }

    pub(super) fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let scaled = rhs.component_mul(&self.scale);
        self.chol.solve(&scaled).component_mul(&self.scale)
    }

    pub(super) fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        let p = inv.ncols();
        DMatrix::from_fn(p, p, |i, j| inv[(i, j)] * self.scale[i] * self.scale[j])
    }
}

/// Names of a linearly dependent column group, found by adding columns one at
/// a time until the Gram matrix turns singular.
pub(super) fn dependent_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let p = x.ncols();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..p {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = x.select_columns(&trial);
        let gram = sub.tr_mul(&sub);
        if ScaledCholesky::new(&gram).is_some() {
            kept.push(j);
            continue;
        }
        if kept.is_empty() || x.column(j).iter().all(|v| *v == 0.0) {
            return vec![names[j].clone()];
        }
        // Regress column j on the kept columns to see which ones it depends on.
        let base = x.select_columns(&kept);
        let gram = base.tr_mul(&base);
        let Some(chol) = ScaledCholesky::new(&gram) else {
            return vec![names[j].clone()];
        };
        let target = x.column(j).into_owned();
        let coef = chol.solve(&base.tr_mul(&target));
        let target_norm = target.norm().max(f64::MIN_POSITIVE);
        let mut out = Vec::new();
        for (pos, &k) in kept.iter().enumerate() {
            if coef[pos].abs() * base.column(pos).norm() > 1e-6 * target_norm {
                out.push(names[k].clone());
            }
        }
        out.push(names[j].clone());
        return out;
    }
    // X has full column rank; the weighted information is what degenerated.
    names.to_vec()
}

/// Fits a logistic regression of the 0/1 labels of `fm` on all of its columns.
pub fn fit_logistic(fm: &FeatureMatrix, opts: &FitOptions) -> Result<LogisticModel, GlmError> {
    fit_design(&fm.column_names, &fm.x, &fm.y, opts)
}

/// IRLS (Newton–Raphson) for the Bernoulli log-likelihood with logit link.
///
/// Each Newton step is halved up to 20 times while it increases the deviance.
/// Iteration stops once max |Δβ| < 1e-8 or the relative deviance change drops
/// below 1e-10, and the score vector is below 1e-6 in every entry.
pub fn fit_design(
    names: &[String],
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &FitOptions,
) -> Result<LogisticModel, GlmError> {
    let (n, p) = x.shape();
    assert_eq!(names.len(), p, "one name per column");
    assert_eq!(y.len(), n, "one label per row");
    let positives = y.iter().filter(|v| **v > 0.5).count();
    if positives == 0 || positives == n {
        return Err(GlmError::DegenerateOutcome { n, positives });
    }
    if n <= p {
        return Err(GlmError::TooFewRows { n, p });
    }

    let singular = || GlmError::SingularInformation {
        columns: dependent_columns(x, names),
    };
    let separation = |beta: &DVector<f64>| GlmError::SeparationDetected {
        max_abs_beta: beta.amax(),
    };

    let mut beta = DVector::zeros(p);
    let mut dev = deviance(x, y, &beta);
    let mut state = working(x, y, &beta, opts.ridge);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        iterations += 1;
        let chol = ScaledCholesky::new(&state.information).ok_or_else(singular)?;
        let step = chol.solve(&state.score);

        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_dev = deviance(x, y, &candidate);
        let mut halvings = 0;
        // Near the optimum the deviance change of a Newton step is below the
        // rounding error of the deviance itself; such steps are accepted.
        let slack = 1e-12 * (dev.abs() + 1.0);
        while !(cand_dev <= dev + slack) && halvings < MAX_HALVINGS {
            t *= 0.5;
            candidate = &beta + &step * t;
            cand_dev = deviance(x, y, &candidate);
            halvings += 1;
        }
        let stalled = !(cand_dev <= dev + slack);
        if !stalled {
            let delta = (&candidate - &beta).amax();
            let rel = (dev - cand_dev).abs() / (cand_dev.abs() + 1.0);
            beta = candidate;
            dev = cand_dev;
            state = working(x, y, &beta, opts.ridge);
            if state.extreme_fit && beta.amax() > SEPARATION_BETA {
                return Err(separation(&beta));
            }
            if (delta < BETA_TOLERANCE || rel < DEVIANCE_TOLERANCE) && state.score.amax() < SCORE_TOLERANCE {
                converged = true;
                break;
            }
        } else {
            // No step direction lowers the deviance: we are at the optimum up to
            // rounding, provided the score agrees.
            converged = state.score.amax() < SCORE_TOLERANCE;
            break;
        }
    }

    if state.extreme_fit && beta.amax() > SEPARATION_BETA {
        return Err(separation(&beta));
    }
    if !converged {
        return Err(GlmError::NotConverged {
            iterations,
            max_score: state.score.amax(),
        });
    }
    let chol = ScaledCholesky::new(&state.information).ok_or_else(singular)?;
    let covariance = chol.inverse();
    let se = DVector::from_iterator(p, (0..p).map(|j| covariance[(j, j)].max(0.0).sqrt()));
    Ok(LogisticModel {
        column_names: names.to_vec(),
        beta,
        se,
        covariance,
        log_likelihood: -0.5 * dev,
        iterations,
        converged,
        n,
        max_score: state.score.amax(),
        ridge: opts.ridge,
    })
}
