//! Trial simulation and the posterior probability of effectiveness
//! `π = P(OR < 1 | y)` under two models:
//!
//! * Beta-binomial: binary endpoint, conjugate Beta posteriors per arm.
//! * Proportional odds: 4-level ordinal endpoint, posterior sampled by
//!   adaptive random-walk Metropolis.
//!
//! Treatment arm is `A = 1`. `OR < 1` means the treatment lowers the odds of
//! the event (binary) or of a worse severity level (ordinal).

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::ParamPoint;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::par;
use crate::rng::{self, StreamRng};
use crate::special::{expit, log1p_exp, logit};
#[cfg(not(feature = "std"))]
use num_traits::Float;

pub const LEVELS: usize = 4;
pub const CUTS: usize = LEVELS - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Binary,
    Ordinal,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Binary => "binary",
            ModelKind::Ordinal => "ordinal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    fn indicator(self) -> f64 {
        match self {
            Arm::Control => 0.0,
            Arm::Treatment => 1.0,
        }
    }
}

/// Binary endpoint: control event risk and true odds ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySpec {
    pub p0: f64,
    pub odds_ratio: f64,
}

impl BinarySpec {
    pub fn new(p0: f64, odds_ratio: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::invalid(alloc::format!("baseline risk must be in (0, 1), got {p0}")));
        }
        if !(odds_ratio > 0.0) || !odds_ratio.is_finite() {
            return Err(Error::invalid("odds ratio must be positive and finite"));
        }
        Ok(BinarySpec { p0, odds_ratio })
    }

    /// Treatment-arm risk `expit(logit(p0) + ln OR)`.
    pub fn p1(&self) -> f64 {
        expit(logit(self.p0) + self.odds_ratio.ln())
    }
}

/// Ordinal endpoint: control-arm category risks and true odds ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrdinalSpec {
    pub p: [f64; LEVELS],
    pub odds_ratio: f64,
}

impl OrdinalSpec {
    pub fn new(p: [f64; LEVELS], odds_ratio: f64) -> Result<Self> {
        if p.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::invalid("ordinal category risks must lie in (0, 1)"));
        }
        let point = ParamPoint::new(p, odds_ratio)?;
        Ok(OrdinalSpec {
            p: point.p,
            odds_ratio: point.odds_ratio,
        })
    }
}

/// A point of the parameter space for either model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Theta {
    Binary(BinarySpec),
    Ordinal(ParamPoint),
}

impl Theta {
    pub fn kind(&self) -> ModelKind {
        match self {
            Theta::Binary(_) => ModelKind::Binary,
            Theta::Ordinal(_) => ModelKind::Ordinal,
        }
    }

    pub fn odds_ratio(&self) -> f64 {
        match self {
            Theta::Binary(b) => b.odds_ratio,
            Theta::Ordinal(o) => o.odds_ratio,
        }
    }

    /// Emulator input coordinates: `(p0, OR)` or `(p1, p2, p3, p4, OR)`.
    pub fn coords(&self) -> Vec<f64> {
        match self {
            Theta::Binary(b) => vec![b.p0, b.odds_ratio],
            Theta::Ordinal(o) => {
                let mut v = o.p.to_vec();
                v.push(o.odds_ratio);
                v
            }
        }
    }
}

/// Priors for both models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Normal sd of the log odds ratio `β`.
    pub beta_sd: f64,
    /// Normal sd of the first cut point.
    pub first_cut_sd: f64,
    /// Normal sd of the log gaps between consecutive cut points.
    pub log_gap_sd: f64,
    /// Beta prior `(a0, b0)` on each arm's event risk in the binary model.
    pub beta_binomial: (f64, f64),
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            beta_sd: 2.5,
            first_cut_sd: 10.0,
            log_gap_sd: 1.5,
            beta_binomial: (1.0, 1.0),
        }
    }
}

/// Adaptive random-walk Metropolis settings for the ordinal posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub adapt_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            adapt_iters: 500,
            burn_in: 1000,
            thin: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    /// Patients in the trial, split 1:1 (control gets the smaller half).
    pub n_total: u32,
    pub posterior_draws: usize,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub sampler: SamplerSettings,
}

impl TrialConfig {
    /// Defaults for the Beta-binomial model.
    pub fn binary(seed: u64) -> Self {
        TrialConfig {
            n_total: 500,
            posterior_draws: 4000,
            replicates: 1000,
            seed,
            prior: PriorSpec::default(),
            sampler: SamplerSettings::default(),
        }
    }

    /// Defaults for the proportional-odds model.
    pub fn ordinal(seed: u64) -> Self {
        TrialConfig {
            n_total: 1000,
            posterior_draws: 2000,
            replicates: 500,
            seed,
            prior: PriorSpec::default(),
            sampler: SamplerSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total < 2 {
            return Err(Error::invalid("n_total must be at least 2"));
        }
        if self.posterior_draws < 100 {
            return Err(Error::invalid("posterior_draws must be at least 100"));
        }
        if self.replicates < 1 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        let p = &self.prior;
        let (a0, b0) = p.beta_binomial;
        if !(p.beta_sd > 0.0 && p.first_cut_sd > 0.0 && p.log_gap_sd > 0.0 && a0 > 0.0 && b0 > 0.0) {
            return Err(Error::invalid("prior scales must be positive"));
        }
        if self.sampler.thin == 0 {
            return Err(Error::invalid("thinning must be at least 1"));
        }
        Ok(())
    }

    fn arm_sizes(&self) -> (u32, u32) {
        let control = self.n_total / 2;
        (control, self.n_total - control)
    }
}

/// Cut points `α_j = -logit(Σ_{i<=j} p_i)`, strictly decreasing.
pub fn alpha_from_p(p: &[f64; LEVELS]) -> Result<[f64; CUTS]> {
    if p.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("category risks must be strictly positive".into()));
    }
    let mut alpha = [0.0; CUTS];
    let mut cum = 0.0;
    for j in 0..CUTS {
        cum += p[j];
        if !(cum > 0.0 && cum < 1.0) {
            return Err(Error::Domain(alloc::format!(
                "cumulative risk {cum} at level {} must lie strictly inside (0, 1)",
                j + 1
            )));
        }
        alpha[j] = -logit(cum);
    }
    Ok(alpha)
}

/// Category probabilities from tail probabilities `P(Y > j) = expit(α_j + β A)`.
pub fn category_probs(alpha: &[f64; CUTS], beta: f64, arm: Arm) -> Result<[f64; LEVELS]> {
    if alpha.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Domain("cut points must be strictly decreasing".into()));
    }
    let shift = beta * arm.indicator();
    let mut tail = [1.0, 0.0, 0.0, 0.0, 0.0];
    for j in 0..CUTS {
        tail[j + 1] = expit(alpha[j] + shift);
    }
    Ok(core::array::from_fn(|k| (tail[k] - tail[k + 1]).max(0.0)))
}

/// 2 × 4 table of counts, row 0 control and row 1 treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinalData {
    pub counts: [[u32; LEVELS]; 2],
}

impl OrdinalData {
    pub fn total(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }
}

/// Event counts per arm: `(y0 of n0)` control, `(y1 of n1)` treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryData {
    pub y0: u32,
    pub n0: u32,
    pub y1: u32,
    pub n1: u32,
}

fn multinomial(n: u32, probs: &[f64; LEVELS], rng: &mut StreamRng) -> [u32; LEVELS] {
    let mut out = [0u32; LEVELS];
    let mut left = n;
    let mut mass = 1.0;
    for k in 0..LEVELS - 1 {
        if left == 0 {
            break;
        }
        let q = if mass > 0.0 { (probs[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(u64::from(left), q)
            .map(|b| b.sample(rng) as u32)
            .unwrap_or(0);
        out[k] = draw;
        left -= draw;
        mass -= probs[k];
    }
    out[LEVELS - 1] = left;
    out
}

pub fn simulate_ordinal_trial(
    spec: &OrdinalSpec,
    config: &TrialConfig,
    rng: &mut StreamRng,
) -> Result<OrdinalData> {
    let alpha = alpha_from_p(&spec.p)?;
    let treated = category_probs(&alpha, spec.odds_ratio.ln(), Arm::Treatment)?;
    let (n0, n1) = config.arm_sizes();
    Ok(OrdinalData {
        counts: [multinomial(n0, &spec.p, rng), multinomial(n1, &treated, rng)],
    })
}

pub fn simulate_binary_trial(spec: &BinarySpec, config: &TrialConfig, rng: &mut StreamRng) -> BinaryData {
    let (n0, n1) = config.arm_sizes();
    let draw = |n: u32, p: f64, rng: &mut StreamRng| {
        Binomial::new(u64::from(n), p).map(|b| b.sample(rng) as u32).unwrap_or(0)
    };
    let y0 = draw(n0, spec.p0, rng);
    let y1 = draw(n1, spec.p1(), rng);
    BinaryData { y0, n0, y1, n1 }
}

/// `π` for the Beta-binomial model from `draws` paired posterior draws.
pub fn binary_posterior_pi(
    data: &BinaryData,
    prior: &PriorSpec,
    draws: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    if data.y0 > data.n0 || data.y1 > data.n1 {
        return Err(Error::invalid("event counts cannot exceed arm sizes"));
    }
    if draws == 0 {
        return Err(Error::invalid("need at least one posterior draw"));
    }
    let (a0, b0) = prior.beta_binomial;
    let post = |y: u32, n: u32| Beta::new(a0 + f64::from(y), b0 + f64::from(n - y));
    let control = post(data.y0, data.n0).map_err(|_| Error::invalid("invalid Beta prior"))?;
    let treated = post(data.y1, data.n1).map_err(|_| Error::invalid("invalid Beta prior"))?;
    let mut below = 0usize;
    for _ in 0..draws {
        let r0: f64 = control.sample(rng);
        let r1: f64 = treated.sample(rng);
        let odds_ratio = (r1 / (1.0 - r1)) / (r0 / (1.0 - r0));
        if odds_ratio < 1.0 {
            below += 1;
        }
    }
    Ok(below as f64 / draws as f64)
}

/// Result of one proportional-odds posterior run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoPosterior {
    pub pi: f64,
    /// Acceptance rate over the retained iterations.
    pub acceptance_rate: f64,
    /// Set when the acceptance rate falls outside `[0.05, 0.95]`.
    pub warning: bool,
}

// Unconstrained parameters: (δ1, δ2, δ3, β) with α1 = δ1 and
// α_j = α_{j-1} - exp(δ_j).
const PO_DIM: usize = CUTS + 1;

fn cuts_from_deltas(x: &[f64; PO_DIM]) -> [f64; CUTS] {
    let mut a = [x[0], 0.0, 0.0];
    for j in 1..CUTS {
        a[j] = a[j - 1] - x[j].exp();
    }
    a
}

fn log_sigmoid(x: f64) -> f64 {
    -log1p_exp(-x)
}

struct PoTarget<'a> {
    data: &'a OrdinalData,
    prior: &'a PriorSpec,
}

impl PoTarget<'_> {
    fn log_lik(&self, x: &[f64; PO_DIM]) -> f64 {
        let alpha = cuts_from_deltas(x);
        let beta = x[CUTS];
        let mut ll = 0.0;
        for (arm, row) in self.data.counts.iter().enumerate() {
            let shift = beta * arm as f64;
            let eta: [f64; CUTS] = core::array::from_fn(|j| alpha[j] + shift);
            for (k, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                // ln(σ(η_{k-1}) - σ(η_k)) with η_0 = +inf, η_4 = -inf
                let lq = if k == 0 {
                    log_sigmoid(-eta[0])
                } else if k == LEVELS - 1 {
                    log_sigmoid(eta[CUTS - 1])
                } else {
                    let (hi, lo) = (eta[k - 1], eta[k]);
                    log_sigmoid(hi) + log_sigmoid(-lo) + (-(lo - hi).exp_m1()).ln()
                };
                ll += f64::from(c) * lq;
            }
        }
        ll
    }

    fn log_prior(&self, x: &[f64; PO_DIM]) -> f64 {
        let p = self.prior;
        let sq = |v: f64, sd: f64| -0.5 * (v / sd) * (v / sd);
        sq(x[0], p.first_cut_sd) + (1..CUTS).map(|j| sq(x[j], p.log_gap_sd)).sum::<f64>() + sq(x[CUTS], p.beta_sd)
    }

    fn log_post(&self, x: &[f64; PO_DIM]) -> f64 {
        let v = self.log_lik(x) + self.log_prior(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn start(&self) -> [f64; PO_DIM] {
        let pooled: [f64; LEVELS] =
            core::array::from_fn(|k| f64::from(self.data.counts[0][k] + self.data.counts[1][k]) + 0.5);
        let total: f64 = pooled.iter().sum();
        let p = pooled.map(|c| c / total);
        let alpha = alpha_from_p(&p).unwrap_or([1.0, 0.0, -1.0]);
        let mut x = [alpha[0], 0.0, 0.0, 0.0];
        for j in 1..CUTS {
            x[j] = (alpha[j - 1] - alpha[j]).max(1e-6).ln();
        }
        x
    }

    fn hessian(&self, x: &[f64; PO_DIM]) -> ([f64; PO_DIM], [f64; PO_DIM * PO_DIM]) {
        let h = 1e-4;
        let f = |y: &[f64; PO_DIM]| self.log_post(y);
        let f0 = f(x);
        let mut grad = [0.0; PO_DIM];
        let mut hess = [0.0; PO_DIM * PO_DIM];
        for i in 0..PO_DIM {
            let mut xp = *x;
            let mut xm = *x;
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            grad[i] = (fp - fm) / (2.0 * h);
            hess[i * PO_DIM + i] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let mut a = *x;
                let mut b = *x;
                let mut c = *x;
                let mut d = *x;
                a[i] += h;
                a[j] += h;
                b[i] += h;
                b[j] -= h;
                c[i] -= h;
                c[j] += h;
                d[i] -= h;
                d[j] -= h;
                let v = (f(&a) - f(&b) - f(&c) + f(&d)) / (4.0 * h * h);
                hess[i * PO_DIM + j] = v;
                hess[j * PO_DIM + i] = v;
            }
        }
        (grad, hess)
    }

    // Damped Newton ascent to the posterior mode; returns the mode and the
    // Cholesky factor of the negative Hessian there, when it is positive
    // definite.
    fn mode(&self) -> ([f64; PO_DIM], Option<Cholesky>) {
        let mut x = self.start();
        let mut fx = self.log_post(&x);
        let mut precision = None;
        for _ in 0..50 {
            let (grad, hess) = self.hessian(&x);
            let neg: Vec<f64> = hess.iter().map(|v| -v).collect();
            let chol = Cholesky::new(&neg, PO_DIM);
            let step: Vec<f64> = match &chol {
                Some(c) => c.solve(&grad),
                None => grad.iter().map(|g| 0.1 * g / (1.0 + g.abs())).collect(),
            };
            precision = chol;
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let cand: [f64; PO_DIM] = core::array::from_fn(|i| x[i] + t * step[i]);
                let fc = self.log_post(&cand);
                if fc > fx {
                    let size: f64 = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
                    x = cand;
                    fx = fc;
                    improved = size > 1e-9;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if precision.is_some() {
            let (_, hess) = self.hessian(&x);
            let neg: Vec<f64> = hess.iter().map(|v| -v).collect();
            precision = Cholesky::new(&neg, PO_DIM);
        }
        (x, precision)
    }
}

/// Proposal covariance factor: `(2.38² / d) · H⁻¹` from the precision factor,
/// or a small isotropic fallback.
fn proposal_factor(precision: Option<&Cholesky>) -> Cholesky {
    let scale = 2.38 * 2.38 / PO_DIM as f64;
    let fallback = || {
        let mut m = [0.0; PO_DIM * PO_DIM];
        for i in 0..PO_DIM {
            m[i * PO_DIM + i] = 0.01 * scale;
        }
        Cholesky::new(&m, PO_DIM).expect("diagonal is positive definite")
    };
    let Some(prec) = precision else {
        return fallback();
    };
    let mut cov = [0.0; PO_DIM * PO_DIM];
    for j in 0..PO_DIM {
        let mut e = [0.0; PO_DIM];
        e[j] = 1.0;
        let col = prec.solve(&e);
        for i in 0..PO_DIM {
            cov[i * PO_DIM + j] = scale * col[i];
        }
    }
    for i in 0..PO_DIM {
        for j in 0..i {
            let v = 0.5 * (cov[i * PO_DIM + j] + cov[j * PO_DIM + i]);
            cov[i * PO_DIM + j] = v;
            cov[j * PO_DIM + i] = v;
        }
    }
    Cholesky::new(&cov, PO_DIM).unwrap_or_else(fallback)
}

/// `π` for the proportional-odds model: the fraction of retained posterior
/// draws with `β < 0`.
pub fn po_posterior_pi(
    data: &OrdinalData,
    config: &TrialConfig,
    rng: &mut StreamRng,
) -> Result<PoPosterior> {
    if data.total() == 0 {
        return Err(Error::invalid("ordinal data has no patients"));
    }
    let target = PoTarget {
        data,
        prior: &config.prior,
    };
    let (mut x, precision) = target.mode();
    let factor = proposal_factor(precision.as_ref());
    let mut current = target.log_post(&x);
    let mut log_scale = 0.0f64;
    let s = &config.sampler;
    let total = s.burn_in + config.posterior_draws * s.thin;
    let mut below = 0usize;
    let mut kept = 0usize;
    let mut accepted_after_burn = 0usize;
    for it in 0..total {
        let z: [f64; PO_DIM] = core::array::from_fn(|_| rng.sample(StandardNormal));
        let step = factor.mul_lower(&z);
        let scale = log_scale.exp();
        let cand: [f64; PO_DIM] = core::array::from_fn(|i| x[i] + scale * step[i]);
        let proposed = target.log_post(&cand);
        let log_ratio = proposed - current;
        let u: f64 = rng.random();
        let accept = log_ratio >= 0.0 || u.ln() < log_ratio;
        if accept {
            x = cand;
            current = proposed;
        }
        if it < s.adapt_iters {
            let rate = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
            let gain = 1.0 / ((it + 1) as f64).powf(0.6);
            log_scale = (log_scale + gain * (rate - 0.234)).clamp(-10.0, 5.0);
        }
        if it >= s.burn_in {
            if accept {
                accepted_after_burn += 1;
            }
            if (it - s.burn_in) % s.thin == 0 {
                kept += 1;
                if x[CUTS] < 0.0 {
                    below += 1;
                }
            }
        }
    }
    let acceptance_rate = accepted_after_burn as f64 / (total - s.burn_in) as f64;
    Ok(PoPosterior {
        pi: below as f64 / kept as f64,
        acceptance_rate,
        warning: !(0.05..=0.95).contains(&acceptance_rate),
    })
}

/// Monte Carlo draws of `π` at one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiSample {
    pub theta: Theta,
    pub draws: Vec<f64>,
    /// Replicates whose posterior sampler raised a mixing warning.
    pub warnings: usize,
}

/// Simulates `config.replicates` trials at `theta` and returns their `π`
/// values. Replicate `r` draws from the stream `(seed, theta_index, r)`.
pub fn sampling_distribution(theta: &Theta, theta_index: usize, config: &TrialConfig) -> Result<PiSample> {
    config.validate()?;
    let ordinal = match theta {
        Theta::Ordinal(p) => Some(OrdinalSpec::new(p.p, p.odds_ratio)?),
        Theta::Binary(_) => None,
    };
    let results = par::map_indexed(config.replicates, |r| -> Result<(f64, bool)> {
        let mut stream = rng::stream(config.seed, &[theta_index as u64, r as u64]);
        match (theta, &ordinal) {
            (Theta::Binary(spec), _) => {
                let data = simulate_binary_trial(spec, config, &mut stream);
                binary_posterior_pi(&data, &config.prior, config.posterior_draws, &mut stream)
                    .map(|pi| (pi, false))
            }
            (Theta::Ordinal(_), Some(spec)) => {
                let data = simulate_ordinal_trial(spec, config, &mut stream)?;
                po_posterior_pi(&data, config, &mut stream).map(|p| (p.pi, p.warning))
            }
            (Theta::Ordinal(_), None) => unreachable!(),
        }
        .map_err(|e| e.at("replicate", r))
    });
    let mut draws = Vec::with_capacity(config.replicates);
    let mut warnings = 0;
    for r in results {
        let (pi, warn) = r?;
        draws.push(pi);
        warnings += usize::from(warn);
    }
    Ok(PiSample {
        theta: *theta,
        draws,
        warnings,
    })
}
