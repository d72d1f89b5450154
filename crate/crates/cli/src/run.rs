//! The `run` subcommand: every stage in sequence plus a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trialoc_core::design::{linspace, DesignKind};
use trialoc_core::doc::Statistic;
use trialoc_core::rng;
use trialoc_core::trial_models::{ModelKind, TrialConfig};

use crate::error::{CliError, Result};
use crate::figures::{self, COVERING, MODEL, TEST_AB, TEST_DESIGN, TEST_PI, TRAINING_DESIGN, TRAINING_PI};
use crate::io;
use crate::stages::{self, Bounds, ScmcSettings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSize {
    pub k: usize,
    pub or_grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrdinalSetup {
    pub bounds: Bounds,
    /// Size of the plotted covering sample.
    pub covering_size: usize,
    /// Size of the covering sample clustered by each design stage.
    pub design_covering_size: usize,
    pub training: DesignSize,
    pub test: DesignSize,
    pub scmc: ScmcSettings,
}

impl Default for OrdinalSetup {
    fn default() -> Self {
        OrdinalSetup {
            bounds: Bounds::default(),
            covering_size: 2000,
            design_covering_size: 2000,
            training: DesignSize {
                k: 20,
                or_grid: vec![0.7, 0.8, 0.9, 1.0],
            },
            test: DesignSize {
                k: 20,
                or_grid: linspace(0.7, 1.0, 20),
            },
            scmc: ScmcSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinarySetup {
    pub p0_range: (f64, f64),
    pub or_range: (f64, f64),
    pub training_grid: (usize, usize),
    pub test_grid: (usize, usize),
    /// Also simulate the test grid to get reference power.
    pub simulate_test: bool,
}

impl Default for BinarySetup {
    fn default() -> Self {
        BinarySetup {
            p0_range: (0.25, 0.7),
            or_range: (0.65, 1.0),
            training_grid: (4, 5),
            test_grid: (10, 10),
            simulate_test: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSetup {
    pub n_total: Option<u32>,
    pub replicates: Option<usize>,
    pub posterior_draws: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulatorSetup {
    pub restarts: usize,
    pub fixed_nugget: Option<f64>,
    pub predictive_draws: usize,
}

impl Default for EmulatorSetup {
    fn default() -> Self {
        EmulatorSetup {
            restarts: 8,
            fixed_nugget: None,
            predictive_draws: 1000,
        }
    }
}

fn default_superiority() -> Vec<f64> {
    vec![0.95]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub ordinal: OrdinalSetup,
    #[serde(default)]
    pub binary: BinarySetup,
    #[serde(default)]
    pub trial: TrialSetup,
    #[serde(default)]
    pub emulator: EmulatorSetup,
    #[serde(default = "default_superiority")]
    pub superiority: Vec<f64>,
    #[serde(default)]
    pub futility: Vec<f64>,
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        for &t in self.superiority.iter().chain(&self.futility) {
            if !(t > 0.0 && t < 1.0) {
                return Err(CliError::config(format!("threshold {t} outside (0, 1)")));
            }
        }
        if self.emulator.predictive_draws == 0 {
            return Err(CliError::config("emulator.predictive_draws must be positive"));
        }
        self.trial_config(0).validate()?;
        Ok(())
    }

    pub fn trial_config(&self, seed: u64) -> TrialConfig {
        stages::trial_config(
            self.model,
            seed,
            self.trial.n_total,
            self.trial.replicates,
            self.trial.posterior_draws,
        )
    }
}

#[derive(Debug, Serialize)]
struct Manifest {
    config_sha256: String,
    config: RunConfig,
    versions: BTreeMap<&'static str, &'static str>,
    stage_seeds: BTreeMap<String, u64>,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    files: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings_seconds: Option<BTreeMap<String, f64>>,
}

struct Runner<'a> {
    dir: &'a Path,
    master: u64,
    manifest: Manifest,
}

impl Runner<'_> {
    fn seed(&mut self, stage: &str) -> u64 {
        let s = rng::stage_seed(self.master, stage);
        self.manifest.stage_seeds.insert(stage.to_string(), s);
        s
    }

    fn step<T>(&mut self, stage: &str, seed: u64, f: impl FnOnce(u64) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(seed);
        if let Some(t) = self.manifest.timings_seconds.as_mut() {
            t.insert(stage.to_string(), start.elapsed().as_secs_f64());
        }
        match out {
            Ok(v) => Ok(v),
            Err(e) => {
                self.manifest.status = "failed";
                self.manifest.failed_stage = Some(stage.to_string());
                self.manifest.error = Some(e.to_string());
                self.finish()?;
                Err(e.in_stage(stage))
            }
        }
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn finish(&mut self) -> Result<()> {
        let mut files = BTreeMap::new();
        collect_hashes(self.dir, self.dir, &mut files)?;
        files.remove("manifest.json");
        self.manifest.files = files;
        io::write_json(&self.path("manifest.json"), &self.manifest)
    }
}

fn collect_hashes(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::io(dir, e))?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_hashes(root, &path, out)?;
        } else {
            let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.insert(key, hex(&Sha256::digest(&bytes)));
        }
    }
    Ok(())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the full pipeline into `dir` and writes `manifest.json`.
pub fn run_pipeline(config: &RunConfig, dir: &Path, timings: bool) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let canonical = serde_json::to_string(config).expect("serializable config");
    let mut versions = BTreeMap::new();
    versions.insert("trialoc", env!("CARGO_PKG_VERSION"));
    versions.insert("trialoc-core", trialoc_core::VERSION);
    let mut r = Runner {
        dir,
        master: config.seed,
        manifest: Manifest {
            config_sha256: hex(&Sha256::digest(canonical.as_bytes())),
            config: config.clone(),
            versions,
            stage_seeds: BTreeMap::new(),
            status: "complete",
            failed_stage: None,
            error: None,
            files: BTreeMap::new(),
            timings_seconds: timings.then(BTreeMap::new),
        },
    };
    let model = config.model;

    let (training, test) = match model {
        ModelKind::Ordinal => {
            let o = &config.ordinal;
            let spec = o.bounds.spec()?;
            let seed = r.seed("sample-simplex");
            let path = r.path(COVERING);
            r.step("sample-simplex", seed, |s| {
                let pts = stages::sample_simplex(&spec, o.covering_size, s, o.scmc)?;
                io::write_points(&path, &pts)
            })?;
            let mut designs = Vec::new();
            for (stage, size, kind, file) in [
                ("design-training", &o.training, DesignKind::Training, TRAINING_DESIGN),
                ("design-test", &o.test, DesignKind::Test, TEST_DESIGN),
            ] {
                let seed = r.seed(stage);
                let path = r.path(file);
                let d = r.step(stage, seed, |s| {
                    let d = stages::ordinal_design(&spec, size.k, &size.or_grid, s, o.design_covering_size, o.scmc, kind)?;
                    io::write_design(&path, &d.points, kind, model)?;
                    Ok(d.points)
                })?;
                designs.push(d);
            }
            let test = designs.pop().unwrap_or_default();
            (designs.pop().unwrap_or_default(), test)
        }
        ModelKind::Binary => {
            let b = &config.binary;
            let mut designs = Vec::new();
            for (stage, grid, kind, file) in [
                ("design-training", b.training_grid, DesignKind::Training, TRAINING_DESIGN),
                ("design-test", b.test_grid, DesignKind::Test, TEST_DESIGN),
            ] {
                let path = r.path(file);
                let d = r.step(stage, 0, |_| {
                    let d = stages::binary_grid(b.p0_range, b.or_range, grid, kind)?;
                    io::write_design(&path, &d.points, kind, model)?;
                    Ok(d.points)
                })?;
                designs.push(d);
            }
            let test = designs.pop().unwrap_or_default();
            (designs.pop().unwrap_or_default(), test)
        }
    };

    let seed = r.seed("simulate");
    let path = r.path(TRAINING_PI);
    let samples = r.step("simulate", seed, |s| {
        let samples = stages::simulate(&training, &config.trial_config(s))?;
        io::write_pi_samples(&path, &samples)?;
        Ok(samples)
    })?;

    if model == ModelKind::Binary && config.binary.simulate_test {
        let seed = r.seed("simulate-test");
        let path = r.path(TEST_PI);
        r.step("simulate-test", seed, |s| {
            io::write_pi_samples(&path, &stages::simulate(&test, &config.trial_config(s))?)
        })?;
    }

    let seed = r.seed("fit");
    let path = r.path(MODEL);
    let e = &config.emulator;
    let emulator = r.step("fit", seed, |s| {
        let em = stages::fit(&samples, s, e.restarts, e.fixed_nugget)?;
        io::write_json(&path, &em)?;
        Ok(em)
    })?;

    let seed = r.seed("predict");
    let path = r.path(TEST_AB);
    let draws = r.step("predict", seed, |s| {
        let d = stages::predict(&emulator, &test, e.predictive_draws, s)?;
        stages::write_predictive(&path, &d)?;
        Ok(d)
    })?;

    let jobs: Vec<(Statistic, f64)> = config
        .superiority
        .iter()
        .map(|&u| (Statistic::Superiority, u))
        .chain(config.futility.iter().map(|&l| (Statistic::Futility, l)))
        .collect();
    for (stat, threshold) in jobs {
        let path = r.path(&stages::doc_file_name(stat, threshold));
        r.step("doc", seed, |_| {
            stages::write_doc(&path, model, &stages::doc(&draws, stat, threshold)?)
        })?;
    }

    let ids: Vec<&str> = match model {
        ModelKind::Binary => {
            let mut v = vec!["fig8"];
            if config.binary.simulate_test && config.superiority.contains(&0.95) {
                v.insert(0, "fig2");
            }
            v
        }
        ModelKind::Ordinal => {
            let mut v = vec!["fig1"];
            if config.superiority.contains(&0.95) {
                v.push("fig6");
            }
            if config.superiority.contains(&0.98) && config.superiority.contains(&0.9) {
                v.push("fig7");
            }
            if config.futility.contains(&0.01) && config.futility.contains(&0.05) {
                v.push("futility");
            }
            v.push("fig8");
            v
        }
    };
    let fig_dir = r.path("figures");
    r.step("figures", 0, |_| {
        for id in ids {
            figures::emit(id, dir, None, &fig_dir.join(format!("{id}.csv")))?;
        }
        Ok(())
    })?;
    r.finish()
}
