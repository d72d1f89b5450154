//! Beta surrogate for the sampling distribution of `π` and Gaussian-process
//! emulation of its shape parameters across the parameter space.
//!
//! At each training point the simulated `π` draws are summarized by a
//! maximum-likelihood `Beta(a, b)`. Two independent GPs with constant mean
//! and squared-exponential ARD kernel then interpolate `a(θ)` and `b(θ)`.
//! Predictions are made on the raw scale and non-positive predictive draws
//! are rejected.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky};
use crate::optim::NelderMead;
use crate::rng::{self, StreamRng};
use crate::special::{digamma, ln_beta, trigamma};
use crate::trial_models::{ModelKind, PiSample, Theta};
#[cfg(not(feature = "std"))]
use num_traits::Float;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Maximum-likelihood Beta fit to a sample of `π` values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub a: f64,
    pub b: f64,
    pub n_draws: usize,
    /// Draws moved onto `[ε, 1 - ε]`, `ε = 1 / (2M)`.
    pub clamp_count: usize,
}

/// Method-of-moments `(a, b)` from a sample mean and variance.
pub fn beta_moments(mean: f64, variance: f64) -> (f64, f64) {
    let mut c = mean * (1.0 - mean) / variance - 1.0;
    if !(c > 0.0) {
        // variance at or above the Bernoulli bound; start from a U shape
        c = 0.1;
    }
    (mean * c, (1.0 - mean) * c)
}

fn beta_log_lik(a: f64, b: f64, mean_log: f64, mean_log1m: f64) -> f64 {
    (a - 1.0) * mean_log + (b - 1.0) * mean_log1m - ln_beta(a, b)
}

/// Fits `Beta(a, b)` by Newton iterations on the digamma score equations,
/// started from the method-of-moments estimate.
pub fn fit_beta(draws: &[f64]) -> Result<BetaFit> {
    let m = draws.len();
    if m < 10 {
        return Err(Error::invalid(alloc::format!("need at least 10 draws, got {m}")));
    }
    if draws.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("draws must lie in [0, 1]"));
    }
    let eps = 1.0 / (2.0 * m as f64);
    let mut clamp_count = 0;
    let x: Vec<f64> = draws
        .iter()
        .map(|&v| {
            let c = v.clamp(eps, 1.0 - eps);
            if c != v {
                clamp_count += 1;
            }
            c
        })
        .collect();
    let n = m as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if x.iter().all(|v| *v == x[0]) || !(var > 0.0) {
        return Err(Error::Degenerate(alloc::format!(
            "all {m} draws are identical after clamping"
        )));
    }
    let g1 = x.iter().map(|v| v.ln()).sum::<f64>() / n;
    let g2 = x.iter().map(|v| (-v).ln_1p()).sum::<f64>() / n;

    let (mut a, mut b) = beta_moments(mean, var);
    let mut ll = beta_log_lik(a, b, g1, g2);
    for _ in 0..200 {
        let dab = digamma(a + b);
        let f1 = digamma(a) - dab - g1;
        let f2 = digamma(b) - dab - g2;
        let tab = trigamma(a + b);
        let (j11, j12, j22) = (trigamma(a) - tab, -tab, trigamma(b) - tab);
        let det = j11 * j22 - j12 * j12;
        let (mut da, mut db) = ((j22 * f1 - j12 * f2) / det, (j11 * f2 - j12 * f1) / det);
        let mut accepted = false;
        for _ in 0..60 {
            let (na, nb) = (a - da, b - db);
            if na > 0.0 && nb > 0.0 {
                let nll = beta_log_lik(na, nb, g1, g2);
                if nll >= ll {
                    a = na;
                    b = nb;
                    ll = nll;
                    accepted = true;
                    break;
                }
            }
            da *= 0.5;
            db *= 0.5;
        }
        if !accepted || (da.abs() <= 1e-13 * a && db.abs() <= 1e-13 * b) {
            break;
        }
    }
    Ok(BetaFit {
        a,
        b,
        n_draws: m,
        clamp_count,
    })
}

/// Hyperparameters of a constant-mean, squared-exponential GP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub mean: f64,
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub nugget: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpTrainOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Fix the nugget instead of estimating it.
    pub fixed_nugget: Option<f64>,
    /// Per-coordinate `(lo, hi)` mapped onto `[0, 1]`; defaults to the range
    /// of the training inputs.
    pub input_bounds: Option<Vec<(f64, f64)>>,
    /// Bounds on lengthscales in standardized units.
    pub lengthscale_bounds: (f64, f64),
    /// Bounds on the signal variance relative to the target variance.
    pub signal_bounds: (f64, f64),
    /// Bounds on the nugget relative to the target variance.
    pub nugget_bounds: (f64, f64),
}

impl Default for GpTrainOptions {
    fn default() -> Self {
        GpTrainOptions {
            restarts: 8,
            seed: 0,
            fixed_nugget: None,
            input_bounds: None,
            lengthscale_bounds: (1e-2, 1e2),
            signal_bounds: (1e-6, 1e4),
            nugget_bounds: (1e-8, 1.0),
        }
    }
}

/// Trained Gaussian process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub mean: f64,
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub nugget: f64,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub training_inputs: Vec<Vec<f64>>,
    pub training_targets: Vec<f64>,
    /// Cholesky factor of `K + nugget·I` on standardized inputs.
    pub factorized_covariance: Cholesky,
    /// `(K + nugget·I)⁻¹ (y - μ)`.
    pub weights: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

fn standardize(x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
        .collect()
}

fn se_kernel(a: &[f64], b: &[f64], signal_variance: f64, lengthscales: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let d = (x - y) / l;
            d * d
        })
        .sum();
    signal_variance * (-0.5 * r2).exp()
}

struct Fitted {
    factor: Cholesky,
    weights: Vec<f64>,
    mean: f64,
    lml: f64,
}

// Factorizes K + nugget·I, profiles the constant mean by generalized least
// squares and returns the log marginal likelihood at that mean.
fn fit_with(
    xs: &[Vec<f64>],
    y: &[f64],
    signal_variance: f64,
    lengthscales: &[f64],
    nugget: f64,
    fixed_mean: Option<f64>,
) -> Option<Fitted> {
    let n = xs.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = se_kernel(&xs[i], &xs[j], signal_variance, lengthscales);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += nugget;
    }
    let factor = Cholesky::new(&k, n)?;
    let mean = match fixed_mean {
        Some(m) => m,
        None => {
            let ones = vec![1.0; n];
            let kinv_one = factor.solve(&ones);
            dot(&kinv_one, y) / kinv_one.iter().sum::<f64>()
        }
    };
    let r: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let weights = factor.solve(&r);
    let lml = -0.5 * dot(&r, &weights) - 0.5 * factor.log_det() - 0.5 * n as f64 * LN_2PI;
    if !lml.is_finite() {
        return None;
    }
    Some(Fitted {
        factor,
        weights,
        mean,
        lml,
    })
}

fn check_training(inputs: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    let n = inputs.len();
    if n != targets.len() {
        return Err(Error::invalid("inputs and targets differ in length"));
    }
    if n == 0 {
        return Err(Error::invalid("no training data"));
    }
    let d = inputs[0].len();
    if d == 0 || inputs.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("inputs must share a nonzero dimension"));
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data must be finite"));
    }
    for i in 0..n {
        for j in 0..i {
            if inputs[i] == inputs[j] {
                return Err(Error::invalid(alloc::format!("training inputs {j} and {i} coincide")));
            }
        }
    }
    Ok(d)
}

fn resolve_bounds(inputs: &[Vec<f64>], bounds: Option<&Vec<(f64, f64)>>) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = inputs[0].len();
    match bounds {
        Some(b) => {
            if b.len() != d || b.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(Error::invalid("input bounds must give lo < hi for every coordinate"));
            }
            Ok(b.iter().copied().unzip())
        }
        None => Ok((0..d)
            .map(|j| {
                let lo = inputs.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min);
                let hi = inputs.iter().map(|x| x[j]).fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    (lo, hi)
                } else {
                    (lo - 0.5, lo + 0.5)
                }
            })
            .unzip()),
    }
}

impl GpModel {
    /// Builds a GP with the given hyperparameters (no optimization). The
    /// inputs are standardized with `input_bounds` or their own range.
    pub fn with_hyper(
        inputs: &[Vec<f64>],
        targets: &[f64],
        hyper: &GpHyper,
        input_bounds: Option<&Vec<(f64, f64)>>,
    ) -> Result<Self> {
        let d = check_training(inputs, targets)?;
        if hyper.lengthscales.len() != d {
            return Err(Error::invalid("one lengthscale per input coordinate is required"));
        }
        let (lower, upper) = resolve_bounds(inputs, input_bounds)?;
        let xs: Vec<Vec<f64>> = inputs.iter().map(|x| standardize(x, &lower, &upper)).collect();
        let fit = fit_with(
            &xs,
            targets,
            hyper.signal_variance,
            &hyper.lengthscales,
            hyper.nugget,
            Some(hyper.mean),
        )
        .ok_or(Error::Conditioning)?;
        Ok(GpModel {
            mean: fit.mean,
            signal_variance: hyper.signal_variance,
            lengthscales: hyper.lengthscales.clone(),
            nugget: hyper.nugget,
            input_lower: lower,
            input_upper: upper,
            training_inputs: inputs.to_vec(),
            training_targets: targets.to_vec(),
            factorized_covariance: fit.factor,
            weights: fit.weights,
            log_marginal_likelihood: fit.lml,
        })
    }

    pub fn hyper(&self) -> GpHyper {
        GpHyper {
            mean: self.mean,
            signal_variance: self.signal_variance,
            lengthscales: self.lengthscales.clone(),
            nugget: self.nugget,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Predictive mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let z = standardize(x, &self.input_lower, &self.input_upper);
        let kstar: Vec<f64> = self
            .training_inputs
            .iter()
            .map(|t| {
                let tz = standardize(t, &self.input_lower, &self.input_upper);
                se_kernel(&z, &tz, self.signal_variance, &self.lengthscales)
            })
            .collect();
        let mean = self.mean + dot(&kstar, &self.weights);
        let v = self.factorized_covariance.solve_lower(&kstar);
        let var = (self.signal_variance - dot(&v, &v)).max(0.0);
        (mean, var)
    }
}

/// Maximizes the log marginal likelihood over lengthscales, signal variance
/// and nugget (the mean is profiled out) with restarted Nelder–Mead.
pub fn gp_train(inputs: &[Vec<f64>], targets: &[f64], options: &GpTrainOptions) -> Result<GpModel> {
    let d = check_training(inputs, targets)?;
    let n = inputs.len();
    if n < 5 {
        return Err(Error::invalid(alloc::format!("need at least 5 training points, got {n}")));
    }
    let (lower, upper) = resolve_bounds(inputs, options.input_bounds.as_ref())?;
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| standardize(x, &lower, &upper)).collect();

    let ybar = targets.iter().sum::<f64>() / n as f64;
    let yvar = targets.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>() / n as f64;
    let scale = if yvar > 0.0 { yvar } else { 1.0 };

    let (ll, lu) = options.lengthscale_bounds;
    let mut lo = vec![ll.ln(); d];
    let mut hi = vec![lu.ln(); d];
    lo.push((options.signal_bounds.0 * scale).ln());
    hi.push((options.signal_bounds.1 * scale).ln());
    let estimate_nugget = options.fixed_nugget.is_none();
    if estimate_nugget {
        lo.push((options.nugget_bounds.0 * scale).ln());
        hi.push((options.nugget_bounds.1 * scale).ln());
    }
    let unpack = |t: &[f64]| -> (Vec<f64>, f64, f64) {
        let ls: Vec<f64> = t[..d].iter().map(|v| v.exp()).collect();
        let sv = t[d].exp();
        let nug = match options.fixed_nugget {
            Some(v) => v,
            None => t[d + 1].exp(),
        };
        (ls, sv, nug)
    };
    let objective = |t: &[f64]| -> f64 {
        let (ls, sv, nug) = unpack(t);
        match fit_with(&xs, targets, sv, &ls, nug, None) {
            Some(f) => -f.lml,
            None => f64::INFINITY,
        }
    };

    let mut init = vec![0.3f64.ln().clamp(lo[0], hi[0]); d];
    init.push(scale.ln().clamp(lo[d], hi[d]));
    if estimate_nugget {
        init.push((1e-3 * scale).ln().clamp(lo[d + 1], hi[d + 1]));
    }
    let mut starts = vec![init];
    let mut stream: StreamRng = rng::stream(options.seed, &[rng::label_hash("gp-restarts")]);
    for _ in 1..options.restarts.max(1) {
        starts.push(
            lo.iter()
                .zip(&hi)
                .map(|(l, h)| l + (h - l) * stream.random::<f64>())
                .collect(),
        );
    }

    let nm = NelderMead {
        max_evals: 600 * (lo.len() + 1),
        f_tol: 1e-10,
        x_tol: 1e-7,
        initial_step: 1.0,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let m = nm.minimize(objective, s, &lo, &hi);
        // polish from the best vertex with a fresh simplex
        let m = nm.minimize(objective, &m.x, &lo, &hi);
        if m.value.is_finite() && best.as_ref().map_or(true, |(_, v)| m.value < *v) {
            best = Some((m.x, m.value));
        }
    }
    let (t, _) = best.ok_or(Error::Conditioning)?;
    let (ls, sv, nug) = unpack(&t);
    let fit = fit_with(&xs, targets, sv, &ls, nug, None).ok_or(Error::Conditioning)?;
    Ok(GpModel {
        mean: fit.mean,
        signal_variance: sv,
        lengthscales: ls,
        nugget: nug,
        input_lower: lower,
        input_upper: upper,
        training_inputs: inputs.to_vec(),
        training_targets: targets.to_vec(),
        factorized_covariance: fit.factor,
        weights: fit.weights,
        log_marginal_likelihood: fit.lml,
    })
}

/// Joint positive draws of `(a, b)` at one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDraws {
    pub theta: Theta,
    pub pairs: Vec<(f64, f64)>,
    pub rejection_count: usize,
}

const PROBE_BATCH: usize = 10_000;
const MIN_ACCEPTANCE: f64 = 1e-3;

/// Draws `a ~ N(m_a, v_a)` and `b ~ N(m_b, v_b)` independently, keeping
/// only pairs with both entries positive.
pub fn predictive_ab_draws(
    model_a: &GpModel,
    model_b: &GpModel,
    theta: &Theta,
    k: usize,
    rng: &mut StreamRng,
) -> Result<PredictiveDraws> {
    let x = theta.coords();
    if x.len() != model_a.dim() || x.len() != model_b.dim() {
        return Err(Error::invalid("parameter point does not match the emulator input dimension"));
    }
    let (ma, va) = model_a.predict(&x);
    let (mb, vb) = model_b.predict(&x);
    let (sa, sb) = (va.sqrt(), vb.sqrt());
    let mut pairs = Vec::with_capacity(k);
    let mut proposed = 0usize;
    let mut rejected = 0usize;
    while pairs.len() < k {
        let za: f64 = rng.sample(StandardNormal);
        let zb: f64 = rng.sample(StandardNormal);
        let (a, b) = (ma + sa * za, mb + sb * zb);
        proposed += 1;
        if a > 0.0 && b > 0.0 {
            pairs.push((a, b));
        } else {
            rejected += 1;
        }
        if proposed % PROBE_BATCH == 0 {
            let rate = pairs.len() as f64 / proposed as f64;
            if rate < MIN_ACCEPTANCE {
                return Err(Error::Extrapolation {
                    rate,
                    min_rate: MIN_ACCEPTANCE,
                });
            }
        }
    }
    Ok(PredictiveDraws {
        theta: *theta,
        pairs,
        rejection_count: rejected,
    })
}

/// Beta fits at the training points and the two GPs trained on them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emulator {
    pub model: ModelKind,
    pub training: Vec<(Theta, BetaFit)>,
    pub gp_a: GpModel,
    pub gp_b: GpModel,
}

impl Emulator {
    pub fn fit(samples: &[PiSample], options: &GpTrainOptions) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("no training samples"))?;
        let model = first.theta.kind();
        if samples.iter().any(|s| s.theta.kind() != model) {
            return Err(Error::invalid("training samples mix model kinds"));
        }
        let training = samples
            .iter()
            .enumerate()
            .map(|(i, s)| fit_beta(&s.draws).map(|f| (s.theta, f)).map_err(|e| e.at("training point", i)))
            .collect::<Result<Vec<_>>>()?;
        let inputs: Vec<Vec<f64>> = training.iter().map(|(t, _)| t.coords()).collect();
        let a: Vec<f64> = training.iter().map(|(_, f)| f.a).collect();
        let b: Vec<f64> = training.iter().map(|(_, f)| f.b).collect();
        let opts_b = GpTrainOptions {
            seed: rng::derive_seed(options.seed, &[1]),
            ..options.clone()
        };
        let gp_a = gp_train(&inputs, &a, options)?;
        let gp_b = gp_train(&inputs, &b, &opts_b)?;
        Ok(Emulator {
            model,
            training,
            gp_a,
            gp_b,
        })
    }

    pub fn predictive_draws(&self, theta: &Theta, k: usize, rng: &mut StreamRng) -> Result<PredictiveDraws> {
        if theta.kind() != self.model {
            return Err(Error::invalid("parameter point is for a different model"));
        }
        predictive_ab_draws(&self.gp_a, &self.gp_b, theta, k, rng)
    }
}
