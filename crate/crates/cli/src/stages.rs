//! Pipeline stages shared by the individual subcommands and `run`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use trialoc_core::design::{self, Design, DesignKind};
use trialoc_core::doc::{doc_estimate, DocEstimate, Statistic};
use trialoc_core::emulator::{Emulator, GpTrainOptions, PredictiveDraws};
use trialoc_core::rng::{self, label_hash};
use trialoc_core::scmc::{run_scmc, ConstraintSpec, Point, ScmcConfig};
use trialoc_core::study::simulate_points;
use trialoc_core::trial_models::{ModelKind, PiSample, Theta, TrialConfig};

use crate::error::{CliError, Result};
use crate::io::{self, fmt};

/// Box bounds as written in JSON: `{"lower": [..4], "upper": [..4]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: Point,
    pub upper: Point,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            lower: [0.5, 0.05, 0.01, 0.005],
            upper: [0.9, 0.30, 0.05, 0.025],
        }
    }
}

impl Bounds {
    pub fn spec(&self) -> Result<ConstraintSpec> {
        Ok(ConstraintSpec::new(self.lower, self.upper)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmcSettings {
    pub tau_target: f64,
    pub moves_per_step: usize,
}

impl Default for ScmcSettings {
    fn default() -> Self {
        let d = ScmcConfig::default();
        ScmcSettings {
            tau_target: d.tau_target,
            moves_per_step: d.moves_per_step,
        }
    }
}

pub fn sample_simplex(spec: &ConstraintSpec, n: usize, seed: u64, s: ScmcSettings) -> Result<Vec<Point>> {
    let config = ScmcConfig {
        n,
        seed,
        tau_target: s.tau_target,
        moves_per_step: s.moves_per_step,
        ..ScmcConfig::default()
    };
    Ok(run_scmc(spec, &config)?.points)
}

/// Covering sample and clustering seeded from one design seed.
pub fn ordinal_design(
    spec: &ConstraintSpec,
    k: usize,
    or_grid: &[f64],
    seed: u64,
    covering_n: usize,
    s: ScmcSettings,
    kind: DesignKind,
) -> Result<Design> {
    let covering = sample_simplex(spec, covering_n, rng::derive_seed(seed, &[label_hash("covering")]), s)?;
    Ok(design::ordinal_design(
        &covering,
        spec,
        k,
        or_grid,
        rng::derive_seed(seed, &[label_hash("kmeans")]),
        kind,
    )?)
}

pub fn binary_grid(
    p0_range: (f64, f64),
    or_range: (f64, f64),
    grid: (usize, usize),
    kind: DesignKind,
) -> Result<Design> {
    let pairs = design::rect_grid(p0_range, or_range, grid.0, grid.1)?;
    Ok(design::binary_design(&pairs, kind)?)
}

pub fn trial_config(
    model: ModelKind,
    seed: u64,
    n: Option<u32>,
    replicates: Option<usize>,
    posterior_draws: Option<usize>,
) -> TrialConfig {
    let mut c = match model {
        ModelKind::Binary => TrialConfig::binary(seed),
        ModelKind::Ordinal => TrialConfig::ordinal(seed),
    };
    if let Some(n) = n {
        c.n_total = n;
    }
    if let Some(r) = replicates {
        c.replicates = r;
    }
    if let Some(d) = posterior_draws {
        c.posterior_draws = d;
    }
    c
}

pub fn simulate(points: &[Theta], config: &TrialConfig) -> Result<Vec<PiSample>> {
    Ok(simulate_points(points, config)?)
}

pub fn fit(samples: &[PiSample], seed: u64, restarts: usize, fixed_nugget: Option<f64>) -> Result<Emulator> {
    let options = GpTrainOptions {
        restarts,
        seed,
        fixed_nugget,
        ..GpTrainOptions::default()
    };
    Ok(Emulator::fit(samples, &options)?)
}

/// Test point `i` draws from the stream `(seed, i)`.
pub fn predict(emulator: &Emulator, test: &[Theta], draws: usize, seed: u64) -> Result<Vec<PredictiveDraws>> {
    if draws == 0 {
        return Err(CliError::config("--draws must be positive"));
    }
    test.iter()
        .enumerate()
        .map(|(i, t)| {
            let mut stream = rng::stream(seed, &[i as u64]);
            emulator
                .predictive_draws(t, draws, &mut stream)
                .map_err(|e| CliError::Core(e.at("test point", i)))
        })
        .collect()
}

pub fn doc(draws: &[PredictiveDraws], statistic: Statistic, threshold: f64) -> Result<Vec<DocEstimate>> {
    draws
        .iter()
        .map(|d| doc_estimate(d, statistic, threshold).map_err(CliError::from))
        .collect()
}

pub fn coord_names(model: ModelKind) -> &'static [&'static str] {
    match model {
        ModelKind::Binary => &["p0", "or"],
        ModelKind::Ordinal => &["p1", "p2", "p3", "p4", "or"],
    }
}

pub fn write_predictive(path: &Path, draws: &[PredictiveDraws]) -> Result<()> {
    let rows = draws.iter().enumerate().flat_map(|(i, d)| {
        d.pairs
            .iter()
            .enumerate()
            .map(move |(k, &(a, b))| vec![i.to_string(), k.to_string(), fmt(a), fmt(b)])
    });
    io::write_csv(path, &["theta_id", "draw", "a", "b"], rows)
}

pub fn write_doc(path: &Path, model: ModelKind, estimates: &[DocEstimate]) -> Result<()> {
    let mut header: Vec<&str> = coord_names(model).to_vec();
    header.extend(["point", "ci_low", "ci_high"]);
    let rows = estimates.iter().map(|e| {
        let mut row: Vec<String> = e.theta.coords().into_iter().map(fmt).collect();
        row.extend([fmt(e.point), fmt(e.ci_low), fmt(e.ci_high)]);
        row
    });
    io::write_csv(path, &header, rows)
}

/// File name used by `run` for one DOC threshold.
pub fn doc_file_name(statistic: Statistic, threshold: f64) -> String {
    format!("doc_{}_{}.csv", statistic.as_str(), fmt(threshold))
}
