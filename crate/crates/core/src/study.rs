//! Simulation study of emulator accuracy for the Beta-binomial model: many
//! independently clustered training sets, each scored on a fixed test grid
//! against simulated "true" power.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{binary_design, kmeans, rect_grid, DesignKind};
use crate::doc::{doc_estimate, DocEstimate, exceed_fraction, metrics_from_draws, SimMetrics, Statistic};
use crate::emulator::{Emulator, GpTrainOptions};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, label_hash};
use crate::trial_models::{sampling_distribution, PiSample, Theta, TrialConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub replications: usize,
    pub training_size: usize,
    /// Uniform points drawn over the rectangle before clustering.
    pub covering_size: usize,
    pub p0_range: (f64, f64),
    pub or_range: (f64, f64),
    /// Test grid size `(n_p0, n_or)`.
    pub test_grid: (usize, usize),
    pub trial: TrialConfig,
    /// Predictive `(a, b)` draws per test point.
    pub predictive_draws: usize,
    pub threshold: f64,
    /// Use the test grid as the training set in every replication.
    pub train_on_test: bool,
    /// Use a fixed `(n_p0, n_or)` grid as the training set instead of
    /// clustering a covering sample.
    pub training_grid: Option<(usize, usize)>,
    pub gp_restarts: usize,
    pub fixed_nugget: Option<f64>,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            replications: 100,
            training_size: 20,
            covering_size: 100,
            p0_range: (0.25, 0.7),
            or_range: (0.6, 1.0),
            test_grid: (10, 10),
            trial: TrialConfig::binary(0),
            predictive_draws: 1000,
            threshold: 0.95,
            train_on_test: false,
            training_grid: None,
            gp_restarts: 8,
            fixed_nugget: None,
            seed: 0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.trial.validate()?;
        if self.replications == 0 {
            return Err(Error::invalid("replications must be positive"));
        }
        if self.training_grid.is_none() && !self.train_on_test && self.training_size < 5 {
            return Err(Error::invalid("training_size must be at least 5"));
        }
        if self.training_grid.is_none() && !self.train_on_test && self.covering_size < self.training_size {
            return Err(Error::invalid("covering_size must be at least training_size"));
        }
        if self.predictive_draws == 0 {
            return Err(Error::invalid("predictive_draws must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid("threshold must lie in (0, 1)"));
        }
        let (p, o) = (self.p0_range, self.or_range);
        if !(0.0 < p.0 && p.0 < p.1 && p.1 < 1.0) || !(0.0 < o.0 && o.0 < o.1) {
            return Err(Error::invalid("p0_range must lie in (0, 1) and or_range in (0, inf)"));
        }
        Ok(())
    }

    pub fn test_points(&self) -> Result<Vec<Theta>> {
        let grid = rect_grid(self.p0_range, self.or_range, self.test_grid.0, self.test_grid.1)?;
        Ok(binary_design(&grid, DesignKind::Test)?.points)
    }

    pub fn input_bounds(&self) -> Vec<(f64, f64)> {
        alloc::vec![self.p0_range, self.or_range]
    }
}

/// Simulates `π` at each point; point `i` uses replicate streams `(seed, i, r)`.
pub fn simulate_points(points: &[Theta], config: &TrialConfig) -> Result<Vec<PiSample>> {
    points
        .iter()
        .enumerate()
        .map(|(i, t)| sampling_distribution(t, i, config).map_err(|e| e.at("parameter point", i)))
        .collect()
}

/// Averages over replications at one test point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestPointSummary {
    pub theta: Theta,
    pub phi_true: f64,
    pub point: f64,
    pub rmse: f64,
    pub bias: f64,
    pub psd: f64,
}

/// Averages over the test grid for one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub index: usize,
    pub training: Vec<Theta>,
    pub rmse: f64,
    pub bias: f64,
    pub psd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimStudyReport {
    pub points: Vec<TestPointSummary>,
    pub replications: Vec<ReplicationSummary>,
    /// Mean over test points of the replication-averaged RMSE.
    pub mean_rmse: f64,
    /// Mean over test points of the absolute replication-averaged bias.
    pub mean_abs_bias: f64,
    pub max_abs_bias: f64,
    pub mean_psd: f64,
}

fn training_set(config: &StudyConfig, replication: usize, test: &[Theta]) -> Result<Vec<Theta>> {
    if config.train_on_test {
        return Ok(test.to_vec());
    }
    if let Some((n_p0, n_or)) = config.training_grid {
        let grid = rect_grid(config.p0_range, config.or_range, n_p0, n_or)?;
        return Ok(binary_design(&grid, DesignKind::Training)?.points);
    }
    let mut stream = rng::stream(config.seed, &[label_hash("covering"), replication as u64]);
    let (p, o) = (config.p0_range, config.or_range);
    let covering: Vec<[f64; 2]> = (0..config.covering_size)
        .map(|_| {
            [
                p.0 + (p.1 - p.0) * stream.random::<f64>(),
                o.0 + (o.1 - o.0) * stream.random::<f64>(),
            ]
        })
        .collect();
    let seed = rng::derive_seed(config.seed, &[label_hash("kmeans"), replication as u64]);
    let clusters = kmeans(&covering, config.training_size, seed, 10)?;
    let pairs: Vec<(f64, f64)> = clusters.centroids.iter().map(|c| (c[0], c[1])).collect();
    Ok(binary_design(&pairs, DesignKind::Training)?.points)
}

fn one_replication(
    config: &StudyConfig,
    replication: usize,
    test: &[Theta],
    phi_true: &[f64],
) -> Result<(Vec<SimMetrics>, Vec<DocEstimate>, Vec<Theta>)> {
    let r = replication as u64;
    let training = training_set(config, replication, test)?;
    let trial = TrialConfig {
        seed: rng::derive_seed(config.seed, &[label_hash("training-trials"), r]),
        ..config.trial.clone()
    };
    let samples = simulate_points(&training, &trial)?;
    let options = GpTrainOptions {
        restarts: config.gp_restarts,
        seed: rng::derive_seed(config.seed, &[label_hash("gp"), r]),
        fixed_nugget: config.fixed_nugget,
        input_bounds: Some(config.input_bounds()),
        ..Default::default()
    };
    let emulator = Emulator::fit(&samples, &options)?;
    let mut metrics = Vec::with_capacity(test.len());
    let mut points = Vec::with_capacity(test.len());
    for (t, (theta, &truth)) in test.iter().zip(phi_true).enumerate() {
        let mut stream = rng::stream(config.seed, &[label_hash("predict"), r, t as u64]);
        let draws = emulator
            .predictive_draws(theta, config.predictive_draws, &mut stream)
            .map_err(|e| e.at("test point", t))?;
        let doc = doc_estimate(&draws, Statistic::Superiority, config.threshold)?;
        metrics.push(metrics_from_draws(&doc.draws, truth)?);
        points.push(doc);
    }
    Ok((metrics, points, training))
}

fn simulated_truth(config: &StudyConfig, test: &[Theta]) -> Result<Vec<f64>> {
    let truth_trials = TrialConfig {
        seed: rng::derive_seed(config.seed, &[label_hash("test-trials")]),
        ..config.trial.clone()
    };
    simulate_points(test, &truth_trials)?
        .iter()
        .map(|s| exceed_fraction(&s.draws, config.threshold))
        .collect()
}

/// One emulated test point next to its simulated power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleRunRow {
    pub theta: Theta,
    pub sim_power: f64,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleRunReport {
    pub training: Vec<Theta>,
    pub rows: Vec<SingleRunRow>,
}

impl SingleRunReport {
    /// Test points whose credible interval contains the simulated power.
    pub fn covered(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.ci_low <= r.sim_power && r.sim_power <= r.ci_high)
            .count()
    }
}

/// A single emulator fit scored on the test grid (replication 0 of the
/// study), keeping the interval estimates.
pub fn run_single(config: &StudyConfig) -> Result<SingleRunReport> {
    config.validate()?;
    let test = config.test_points()?;
    let phi_true = simulated_truth(config, &test)?;
    let (_, docs, training) = one_replication(config, 0, &test, &phi_true)?;
    let rows = docs
        .iter()
        .zip(&phi_true)
        .map(|(d, &sim_power)| SingleRunRow {
            theta: d.theta,
            sim_power,
            point: d.point,
            ci_low: d.ci_low,
            ci_high: d.ci_high,
        })
        .collect();
    Ok(SingleRunReport { training, rows })
}

/// Runs the study: simulated power on the test grid once, then for every
/// replication a fresh training set, emulator fit and scoring.
pub fn run_sim_study(config: &StudyConfig) -> Result<SimStudyReport> {
    config.validate()?;
    let test = config.test_points()?;
    let phi_true = simulated_truth(config, &test)?;

    let runs = par::map_indexed(config.replications, |r| {
        one_replication(config, r, &test, &phi_true).map_err(|e| e.at("replication", r))
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let n_rep = runs.len() as f64;
    let n_test = test.len() as f64;
    let points: Vec<TestPointSummary> = test
        .iter()
        .enumerate()
        .map(|(t, theta)| {
            let avg = |f: &dyn Fn(&SimMetrics) -> f64| runs.iter().map(|(m, _, _)| f(&m[t])).sum::<f64>() / n_rep;
            TestPointSummary {
                theta: *theta,
                phi_true: phi_true[t],
                point: runs.iter().map(|(_, p, _)| p[t].point).sum::<f64>() / n_rep,
                rmse: avg(&|m| m.rmse),
                bias: avg(&|m| m.bias),
                psd: avg(&|m| m.psd),
            }
        })
        .collect();
    let replications = runs
        .into_iter()
        .enumerate()
        .map(|(index, (m, _, training))| ReplicationSummary {
            index,
            training,
            rmse: m.iter().map(|v| v.rmse).sum::<f64>() / n_test,
            bias: m.iter().map(|v| v.bias).sum::<f64>() / n_test,
            psd: m.iter().map(|v| v.psd).sum::<f64>() / n_test,
        })
        .collect();
    Ok(SimStudyReport {
        mean_rmse: points.iter().map(|p| p.rmse).sum::<f64>() / n_test,
        mean_abs_bias: points.iter().map(|p| p.bias.abs()).sum::<f64>() / n_test,
        max_abs_bias: points.iter().map(|p| p.bias.abs()).fold(0.0, f64::max),
        mean_psd: points.iter().map(|p| p.psd).sum::<f64>() / n_test,
        points,
        replications,
    })
}
