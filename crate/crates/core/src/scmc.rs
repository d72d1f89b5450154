//! Sequentially constrained Monte Carlo on the bounded risk simplex.
//!
//! The target is the uniform density on
//! `P = { p ∈ [0,1]^4 : Σ p_k = 1, l_k ≤ p_k ≤ u_k }`. The hard indicator of
//! `P` is relaxed to `∏_j Φ(-τ C_j(p))` where `C(p)` is the 9-entry
//! deviation vector, and a particle cloud started uniform on the hypercube is
//! tempered from `τ = 0` to `τ_target`. Each temperature is chosen so the
//! effective sample size of the incremental weights is half the cloud, then
//! the cloud is resampled and moved with Metropolis kernels.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::special::{log_norm_cdf, log_sum_exp};
use crate::par;
#[cfg(not(feature = "std"))]
use num_traits::Float;

pub const DIM: usize = 4;
pub const N_CONSTRAINTS: usize = 2 * DIM + 1;

pub type Point = [f64; DIM];

const ESS_TOLERANCE: f64 = 1.0;
const MAX_BISECTIONS: usize = 100;

const STREAM_INIT: u64 = 1;
const STREAM_RESAMPLE: u64 = 2;
const STREAM_MOVE: u64 = 3;

/// Box bounds on each category risk. Together with `Σ p = 1` they define `P`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    lower: Point,
    upper: Point,
}

impl ConstraintSpec {
    pub fn new(lower: Point, upper: Point) -> Result<Self> {
        for k in 0..DIM {
            let (l, u) = (lower[k], upper[k]);
            if !(l.is_finite() && u.is_finite()) || l < 0.0 || u > 1.0 || l >= u {
                return Err(Error::invalid(alloc::format!(
                    "bounds for category {} must satisfy 0 <= l < u <= 1, got l = {l}, u = {u}",
                    k + 1
                )));
            }
        }
        let spec = ConstraintSpec { lower, upper };
        if lower.iter().sum::<f64>() > 1.0 || upper.iter().sum::<f64>() < 1.0 {
            return Err(Error::invalid("bounds exclude the simplex: need Σl <= 1 <= Σu"));
        }
        Ok(spec)
    }

    /// `l = 0`, `u = 1`: the whole 3-simplex.
    pub fn full_simplex() -> Self {
        ConstraintSpec {
            lower: [0.0; DIM],
            upper: [1.0; DIM],
        }
    }

    pub fn lower(&self) -> &Point {
        &self.lower
    }

    pub fn upper(&self) -> &Point {
        &self.upper
    }

    pub fn n_constraints(&self) -> usize {
        N_CONSTRAINTS
    }

    /// The deviation vector `(|Σp - 1|, p - u, l - p)`.
    pub fn deviation(&self, p: &Point) -> Result<[f64; N_CONSTRAINTS]> {
        check_point(p)?;
        Ok(self.deviation_unchecked(p))
    }

    fn deviation_unchecked(&self, p: &Point) -> [f64; N_CONSTRAINTS] {
        let mut c = [0.0; N_CONSTRAINTS];
        c[0] = (p.iter().sum::<f64>() - 1.0).abs();
        for k in 0..DIM {
            c[1 + k] = p[k] - self.upper[k];
            c[1 + DIM + k] = self.lower[k] - p[k];
        }
        c
    }

    /// `Σ_j ln Φ(-τ C_j(p))`.
    pub fn soft_indicator_log(&self, p: &Point, tau: f64) -> Result<f64> {
        check_point(p)?;
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::invalid(alloc::format!("tau must be finite and >= 0, got {tau}")));
        }
        Ok(self.log_indicator(p, tau))
    }

    fn log_indicator(&self, p: &Point, tau: f64) -> f64 {
        self.deviation_unchecked(p)
            .iter()
            .map(|&c| log_norm_cdf(-tau * c))
            .sum()
    }

    pub fn in_box(&self, p: &Point) -> bool {
        (0..DIM).all(|k| p[k] >= self.lower[k] && p[k] <= self.upper[k])
    }

    /// Box membership plus `|Σp - 1| <= sum_tol`.
    pub fn contains(&self, p: &Point, sum_tol: f64) -> bool {
        self.in_box(p) && (p.iter().sum::<f64>() - 1.0).abs() <= sum_tol
    }

    /// Relabels categories: entry `k` of the result is entry `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize; DIM]) -> Self {
        ConstraintSpec {
            lower: perm.map(|i| self.lower[i]),
            upper: perm.map(|i| self.upper[i]),
        }
    }
}

fn check_point(p: &Point) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("point has non-finite coordinates"))
    }
}

/// Particle cloud between tempering steps.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedCloud {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub tau: f64,
}

impl WeightedCloud {
    pub fn uniform(points: Vec<Point>, tau: f64) -> Self {
        let weights = vec![1.0; points.len()];
        WeightedCloud { points, weights, tau }
    }
}

/// Effective sample size `(Σw)² / Σw²`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    // rescale so neither sum over- nor underflows
    let (s, s2) = weights.iter().fold((0.0, 0.0), |(s, s2), w| {
        let v = w / max;
        (s + v, s2 + v * v)
    });
    Ok(s * s / s2)
}

fn ess_from_log(log_w: &[f64]) -> f64 {
    let lse = log_sum_exp(log_w);
    if lse == f64::NEG_INFINITY {
        return 0.0;
    }
    let doubled: Vec<f64> = log_w.iter().map(|v| 2.0 * v).collect();
    (2.0 * lse - log_sum_exp(&doubled)).exp()
}

struct Reweighter<'a> {
    spec: &'a ConstraintSpec,
    cloud: &'a WeightedCloud,
    base: Vec<f64>,
}

impl<'a> Reweighter<'a> {
    fn new(spec: &'a ConstraintSpec, cloud: &'a WeightedCloud) -> Self {
        let base = cloud
            .points
            .iter()
            .zip(&cloud.weights)
            .map(|(p, w)| spec.log_indicator(p, cloud.tau) - w.ln())
            .collect();
        Reweighter { spec, cloud, base }
    }

    fn log_weights(&self, tau: f64) -> Vec<f64> {
        self.cloud
            .points
            .iter()
            .zip(&self.base)
            .map(|(p, b)| self.spec.log_indicator(p, tau) - b)
            .collect()
    }

    fn ess(&self, tau: f64) -> f64 {
        ess_from_log(&self.log_weights(tau))
    }
}

/// ESS of the cloud's weights times the incremental weights
/// `∏Φ(-τ C(p)) / ∏Φ(-τ_prev C(p))`, as a function of `τ`.
pub fn incremental_ess(cloud: &WeightedCloud, spec: &ConstraintSpec, tau: f64) -> f64 {
    Reweighter::new(spec, cloud).ess(tau)
}

/// Next temperature: the `τ > cloud.tau` at which the incremental-weight ESS
/// equals `target_ess` (within 1), or `tau_target` when even that keeps the
/// ESS at or above the target.
pub fn next_tau(
    cloud: &WeightedCloud,
    spec: &ConstraintSpec,
    target_ess: f64,
    tau_target: f64,
) -> Result<f64> {
    if cloud.points.is_empty() || cloud.points.len() != cloud.weights.len() {
        return Err(Error::invalid("cloud must be nonempty with one weight per point"));
    }
    if !(cloud.tau < tau_target) {
        return Err(Error::invalid(alloc::format!(
            "current tau {} is not below the target {}",
            cloud.tau,
            tau_target
        )));
    }
    ess(&cloud.weights)?;
    let rw = Reweighter::new(spec, cloud);
    let (mut lo, mut hi) = (cloud.tau, tau_target);
    let ess_lo = rw.ess(lo);
    let ess_hi = rw.ess(hi);
    if ess_hi >= target_ess {
        return Ok(tau_target);
    }
    if ess_lo < target_ess - ESS_TOLERANCE {
        return Err(Error::Solver {
            message: "target ESS exceeds the ESS at the current temperature".into(),
            lower: lo,
            upper: hi,
            ess_lower: ess_lo,
            ess_upper: ess_hi,
        });
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let e = rw.ess(mid);
        if (e - target_ess).abs() <= ESS_TOLERANCE && mid > cloud.tau {
            return Ok(mid);
        }
        if e > target_ess {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Solver {
        message: "bisection did not reach the ESS tolerance".into(),
        lower: lo,
        upper: hi,
        ess_lower: rw.ess(lo),
        ess_upper: rw.ess(hi),
    })
}

/// Systematic resampling: indices of the selected particles for normalized
/// `weights` and a single uniform `u0 ∈ [0, 1)`.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0] / total;
    let mut j = 0;
    for i in 0..n {
        let target = (u0 + i as f64) / n as f64;
        while cumulative < target && j + 1 < n {
            j += 1;
            cumulative += weights[j] / total;
        }
        out.push(j);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScmcConfig {
    pub n: usize,
    pub tau_target: f64,
    pub seed: u64,
    pub moves_per_step: usize,
    /// Target ESS as a fraction of `n`.
    pub ess_fraction: f64,
    pub max_steps: usize,
}

impl Default for ScmcConfig {
    fn default() -> Self {
        ScmcConfig {
            n: 2000,
            tau_target: 1e6,
            seed: 0,
            moves_per_step: 5,
            ess_fraction: 0.5,
            max_steps: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScmcSample {
    /// Projected points, all on the simplex and inside the box.
    pub points: Vec<Point>,
    /// `τ_0 = 0, τ_1, ..., τ_T = τ_target`.
    pub tau_trajectory: Vec<f64>,
    /// ESS right after each resampling step.
    pub ess_after_resample: Vec<f64>,
    /// Particles removed by the final projection because they left the box.
    pub dropped: usize,
    /// Component-wise move acceptance rate per step.
    pub acceptance: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct MoveStats {
    component_accepted: u32,
    component_proposed: u32,
    pair_accepted: u32,
    pair_proposed: u32,
}

impl core::ops::Add for MoveStats {
    type Output = MoveStats;
    fn add(self, o: MoveStats) -> MoveStats {
        MoveStats {
            component_accepted: self.component_accepted + o.component_accepted,
            component_proposed: self.component_proposed + o.component_proposed,
            pair_accepted: self.pair_accepted + o.pair_accepted,
            pair_proposed: self.pair_proposed + o.pair_proposed,
        }
    }
}

// One Metropolis sweep targeting U(p) ∏Φ(-τ C(p)): a Gaussian random-walk
// update of each coordinate, then one sum-preserving transfer between two
// coordinates.
fn metropolis_sweep(
    spec: &ConstraintSpec,
    tau: f64,
    p: &mut Point,
    component_scale: f64,
    pair_scale: f64,
    rng: &mut StreamRng,
) -> MoveStats {
    let mut stats = MoveStats::default();
    let mut current = spec.log_indicator(p, tau);
    for k in 0..DIM {
        stats.component_proposed += 1;
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let mut q = *p;
        q[k] += component_scale * z;
        if !(0.0..=1.0).contains(&q[k]) {
            continue;
        }
        let proposed = spec.log_indicator(&q, tau);
        if u.ln() < proposed - current {
            *p = q;
            current = proposed;
            stats.component_accepted += 1;
        }
    }

    stats.pair_proposed += 1;
    let i = rng.random_range(0..DIM);
    let mut j = rng.random_range(0..DIM - 1);
    if j >= i {
        j += 1;
    }
    let z: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    let mut q = *p;
    q[i] += pair_scale * z;
    q[j] -= pair_scale * z;
    if (0.0..=1.0).contains(&q[i]) && (0.0..=1.0).contains(&q[j]) {
        let proposed = spec.log_indicator(&q, tau);
        if u.ln() < proposed - current {
            *p = q;
            stats.pair_accepted += 1;
        }
    }
    stats
}

fn adapt_scale(scale: f64, accepted: u32, proposed: u32) -> f64 {
    if proposed == 0 {
        return scale;
    }
    let rate = f64::from(accepted) / f64::from(proposed);
    let factor = if rate < 0.25 {
        (rate / 0.35).max(0.2)
    } else if rate > 0.45 {
        (rate / 0.35).min(3.0)
    } else {
        1.0
    };
    (scale * factor).clamp(1e-12, 1.0)
}

/// Runs the tempering sequence and returns an approximately uniform sample
/// on `P`.
pub fn run_scmc(spec: &ConstraintSpec, config: &ScmcConfig) -> Result<ScmcSample> {
    let n = config.n;
    if n < 100 {
        return Err(Error::invalid(alloc::format!("need at least 100 particles, got {n}")));
    }
    if !(config.tau_target > 0.0) || !config.tau_target.is_finite() {
        return Err(Error::invalid("tau_target must be positive and finite"));
    }
    if !(config.ess_fraction > 0.0 && config.ess_fraction < 1.0) {
        return Err(Error::invalid("ess_fraction must lie in (0, 1)"));
    }

    let mut init = rng::stream(config.seed, &[STREAM_INIT]);
    let points: Vec<Point> = (0..n)
        .map(|_| core::array::from_fn(|_| init.random::<f64>()))
        .collect();
    let mut cloud = WeightedCloud::uniform(points, 0.0);

    let mut trajectory = vec![0.0];
    let mut ess_after = Vec::new();
    let mut acceptance = Vec::new();
    let mut component_scale = 0.1;
    let mut pair_scale = 0.1;
    let target_ess = config.ess_fraction * n as f64;

    for step in 0..config.max_steps {
        if cloud.tau >= config.tau_target {
            break;
        }
        let tau = next_tau(&cloud, spec, target_ess, config.tau_target)
            .map_err(|e| e.at("tempering step", step))?;

        let log_w = Reweighter::new(spec, &cloud).log_weights(tau);
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
        let u0: f64 = rng::stream(config.seed, &[STREAM_RESAMPLE, step as u64]).random();
        let picks = systematic_resample(&w, u0);
        cloud.points = picks.iter().map(|&i| cloud.points[i]).collect();
        cloud.weights = vec![1.0; n];
        cloud.tau = tau;
        ess_after.push(ess(&cloud.weights)?);

        let mut step_stats = MoveStats::default();
        for round in 0..config.moves_per_step {
            let (cs, ps) = (component_scale, pair_scale);
            let seed = config.seed;
            let stats = par::map_slice_mut(&mut cloud.points, |i, p| {
                let mut r = rng::stream(seed, &[STREAM_MOVE, step as u64, round as u64, i as u64]);
                metropolis_sweep(spec, tau, p, cs, ps, &mut r)
            })
            .into_iter()
            .fold(MoveStats::default(), |a, b| a + b);
            component_scale =
                adapt_scale(component_scale, stats.component_accepted, stats.component_proposed);
            pair_scale = adapt_scale(pair_scale, stats.pair_accepted, stats.pair_proposed);
            step_stats = step_stats + stats;
        }
        if step_stats.component_proposed > 0 {
            acceptance.push(
                f64::from(step_stats.component_accepted) / f64::from(step_stats.component_proposed),
            );
        }
        trajectory.push(tau);
    }

    if cloud.tau < config.tau_target {
        return Err(Error::TemperingStalled {
            target: config.tau_target,
            steps: config.max_steps,
            trajectory,
        });
    }

    let mut points = Vec::with_capacity(n);
    for p in &cloud.points {
        let s: f64 = p.iter().sum();
        if !(s > 0.0) {
            continue;
        }
        let q = p.map(|v| v / s);
        if spec.in_box(&q) {
            points.push(q);
        }
    }
    let dropped = n - points.len();
    Ok(ScmcSample {
        points,
        tau_trajectory: trajectory,
        ess_after_resample: ess_after,
        dropped,
        acceptance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_bounds() -> ConstraintSpec {
        ConstraintSpec::new([0.5, 0.05, 0.01, 0.005], [0.9, 0.30, 0.05, 0.025]).unwrap()
    }

    #[test]
    fn deviation_at_box_midpoint_is_strictly_negative() {
        let spec = box_bounds();
        let mid: Point = core::array::from_fn(|k| 0.5 * (spec.lower()[k] + spec.upper()[k]));
        let c = spec.deviation(&mid).unwrap();
        assert!(c[1..].iter().all(|&v| v < 0.0));
    }

    #[test]
    fn deviation_examples() {
        let spec = box_bounds();
        assert_eq!(spec.deviation(&[0.25; 4]).unwrap()[0], 0.0);
        let c = spec.deviation(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((c[1] - 0.1).abs() < 1e-15);
        assert_eq!(c[0], 0.0);
        assert!(spec.deviation(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn soft_indicator_at_zero_temperature() {
        let spec = box_bounds();
        let expected = 9.0 * 0.5f64.ln();
        for p in [[0.1, 0.2, 0.3, 0.4], [1.0, 1.0, 0.0, 0.7]] {
            assert!((spec.soft_indicator_log(&p, 0.0).unwrap() - expected).abs() < 1e-13);
        }
        assert!(spec.soft_indicator_log(&[0.25; 4], -1.0).is_err());
    }

    #[test]
    fn soft_indicator_on_simplex_inside_box() {
        let spec = box_bounds();
        let p = [0.7, 0.25, 0.035, 0.015];
        let v = spec.soft_indicator_log(&p, 1e6).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn soft_indicator_single_violation() {
        // p_4 exceeds its upper bound by exactly 0.1 and the rest is feasible.
        let spec = ConstraintSpec::new([0.0; 4], [1.0, 1.0, 1.0, 0.2]).unwrap();
        let p = [0.4, 0.2, 0.1, 0.3];
        let v = spec.soft_indicator_log(&p, 100.0).unwrap();
        let log_phi_m10 = -53.231_285_150_512_47;
        assert!(v <= log_phi_m10 + 1e-9);
        assert!((v - (log_phi_m10 + 0.5f64.ln())).abs() < 1e-6);
    }

    #[test]
    fn ess_examples() {
        assert_eq!(ess(&[3.0; 17]).unwrap(), 17.0);
        assert_eq!(ess(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(ess(&[2.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(ess(&[0.0, 0.0]), Err(Error::Degenerate(_))));
        assert!(ess(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn feasible_cloud_jumps_to_target() {
        let spec = box_bounds();
        let cloud = WeightedCloud::uniform(
            vec![[0.7, 0.25, 0.035, 0.015], [0.6, 0.3 - 1e-3, 0.04, 0.02 + 1e-3]],
            3.0,
        );
        assert_eq!(next_tau(&cloud, &spec, 1.0, 1e6).unwrap(), 1e6);
    }

    #[test]
    fn next_tau_rejects_impossible_target() {
        let spec = box_bounds();
        let cloud = WeightedCloud::uniform(vec![[0.9, 0.9, 0.9, 0.9], [0.1, 0.1, 0.1, 0.1]], 0.0);
        assert!(matches!(next_tau(&cloud, &spec, 5.0, 1e6), Err(Error::Solver { .. })));
    }

    #[test]
    fn systematic_resample_counts() {
        let idx = systematic_resample(&[0.5, 0.0, 0.25, 0.25], 0.5);
        assert_eq!(idx, vec![0, 0, 2, 3]);
        let idx = systematic_resample(&[0.0, 0.0, 1.0], 0.1);
        assert_eq!(idx, vec![2, 2, 2]);
    }

    #[test]
    fn constraint_spec_validation() {
        assert!(ConstraintSpec::new([0.5; 4], [0.4; 4]).is_err());
        assert!(ConstraintSpec::new([0.3; 4], [0.9; 4]).is_err());
        assert!(ConstraintSpec::new([0.0; 4], [0.2; 4]).is_err());
    }
}
