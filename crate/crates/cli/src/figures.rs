//! Long-format data files behind each figure.
//!
//! Every figure except `fig1` shares one schema so downstream plotting code
//! can rely on a fixed column set: unused coordinates and thresholds are
//! left empty.

use std::path::{Path, PathBuf};

use trialoc_core::doc::{quantile_sorted, Statistic};
use trialoc_core::trial_models::{ModelKind, Theta};

use crate::error::{CliError, Result};
use crate::io::{self, fmt};
use crate::stages::doc_file_name;

pub const FIGURE_IDS: [&str; 9] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "futility"];

pub const LONG_HEADER: [&str; 11] = [
    "theta_id", "set", "p0", "p1", "p2", "p3", "p4", "or", "threshold", "series", "value",
];

pub const COVERING: &str = "covering.csv";
pub const TRAINING_DESIGN: &str = "training_design.csv";
pub const TEST_DESIGN: &str = "test_design.csv";
pub const TRAINING_PI: &str = "training_pi.csv";
pub const TEST_PI: &str = "test_pi.csv";
pub const MODEL: &str = "model.json";
pub const TEST_AB: &str = "test_ab.csv";

struct Row {
    theta_id: usize,
    set: &'static str,
    theta: Theta,
    threshold: Option<f64>,
    series: &'static str,
    value: f64,
}

impl Row {
    fn record(&self) -> Vec<String> {
        let mut coords = vec![String::new(); 6];
        match self.theta {
            Theta::Binary(b) => {
                coords[0] = fmt(b.p0);
                coords[5] = fmt(b.odds_ratio);
            }
            Theta::Ordinal(o) => {
                for k in 0..4 {
                    coords[k + 1] = fmt(o.p[k]);
                }
                coords[5] = fmt(o.odds_ratio);
            }
        }
        let mut rec = vec![self.theta_id.to_string(), self.set.to_string()];
        rec.extend(coords);
        rec.push(self.threshold.map(fmt).unwrap_or_default());
        rec.push(self.series.to_string());
        rec.push(fmt(self.value));
        rec
    }
}

fn need(dir: &Path, file: &str, command: &str) -> Result<PathBuf> {
    let path = dir.join(file);
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::config(format!(
            "{} not found; run `{command}` first",
            path.display()
        )))
    }
}

fn design(dir: &Path, file: &str) -> Result<(ModelKind, Vec<Theta>)> {
    io::read_design(&need(dir, file, "design")?)
}

fn doc_rows(dir: &Path, test: &[Theta], statistic: Statistic, threshold: f64, rows: &mut Vec<Row>) -> Result<()> {
    let flag = match statistic {
        Statistic::Superiority => "sup",
        Statistic::Futility => "fut",
    };
    let path = need(
        dir,
        &doc_file_name(statistic, threshold),
        &format!("doc --stat {flag} --threshold {}", fmt(threshold)),
    )?;
    let t = io::read_csv(&path)?;
    if t.rows.len() != test.len() {
        return Err(CliError::config(format!(
            "{} has {} rows but the test design has {}",
            path.display(),
            t.rows.len(),
            test.len()
        )));
    }
    let cols = ["point", "ci_low", "ci_high"]
        .iter()
        .map(|c| t.column(c).ok_or_else(|| CliError::config(format!("{}: missing `{c}`", path.display()))))
        .collect::<Result<Vec<_>>>()?;
    for (i, (row, theta)) in t.rows.iter().zip(test).enumerate() {
        for (&c, series) in cols.iter().zip(["emulated", "ci_low", "ci_high"]) {
            let value = row[c]
                .parse()
                .map_err(|_| CliError::config(format!("{}: bad number `{}`", path.display(), row[c])))?;
            rows.push(Row {
                theta_id: i,
                set: "test",
                theta: *theta,
                threshold: Some(threshold),
                series,
                value,
            });
        }
    }
    Ok(())
}

fn sim_power_rows(dir: &Path, set: &'static str, design_file: &str, pi_file: &str, u: f64, rows: &mut Vec<Row>) -> Result<()> {
    let (_, points) = design(dir, design_file)?;
    let samples = io::read_pi_samples(&need(dir, pi_file, "simulate")?, &points)?;
    for (i, s) in samples.iter().enumerate() {
        let value = s.draws.iter().filter(|&&v| v > u).count() as f64 / s.draws.len() as f64;
        rows.push(Row {
            theta_id: i,
            set,
            theta: s.theta,
            threshold: Some(u),
            series: "sim_power",
            value,
        });
    }
    Ok(())
}

fn shape_scale_rows(dir: &Path, rows: &mut Vec<Row>) -> Result<()> {
    let (_, test) = design(dir, TEST_DESIGN)?;
    let path = need(dir, TEST_AB, "predict")?;
    let t = io::read_csv(&path)?;
    let (id, a, b) = match (t.column("theta_id"), t.column("a"), t.column("b")) {
        (Some(id), Some(a), Some(b)) => (id, a, b),
        _ => return Err(CliError::config(format!("{}: expected theta_id, a, b", path.display()))),
    };
    let mut per_point: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); test.len()];
    for row in &t.rows {
        let bad = || CliError::config(format!("{}: bad row {row:?}", path.display()));
        let i: usize = row[id].parse().map_err(|_| bad())?;
        let slot = per_point.get_mut(i).ok_or_else(bad)?;
        slot.0.push(row[a].parse().map_err(|_| bad())?);
        slot.1.push(row[b].parse().map_err(|_| bad())?);
    }
    for (i, (theta, (va, vb))) in test.iter().zip(per_point.iter_mut()).enumerate() {
        if va.is_empty() {
            continue;
        }
        for (values, names) in [(va, ["a_hat", "a_low", "a_high"]), (vb, ["b_hat", "b_low", "b_high"])] {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            values.sort_by(f64::total_cmp);
            let stats = [mean, quantile_sorted(values, 0.025), quantile_sorted(values, 0.975)];
            for (series, value) in names.into_iter().zip(stats) {
                rows.push(Row {
                    theta_id: i,
                    set: "test",
                    theta: *theta,
                    threshold: None,
                    series,
                    value,
                });
            }
        }
    }
    Ok(())
}

fn simstudy_rows(path: &Path, metric: &'static str, rows: &mut Vec<Row>) -> Result<()> {
    let t = io::read_csv(path)?;
    let get = |name: &str| {
        t.column(name)
            .ok_or_else(|| CliError::config(format!("{}: missing `{name}`; produce it with `simstudy`", path.display())))
    };
    let (p0, or, m) = (get("p0")?, get("or")?, get(metric)?);
    for (i, row) in t.rows.iter().enumerate() {
        let num = |c: usize| -> Result<f64> {
            row[c]
                .parse()
                .map_err(|_| CliError::config(format!("{}: bad number `{}`", path.display(), row[c])))
        };
        let theta = Theta::Binary(trialoc_core::trial_models::BinarySpec::new(num(p0)?, num(or)?)?);
        rows.push(Row {
            theta_id: i,
            set: "test",
            theta,
            threshold: None,
            series: metric,
            value: num(m)?,
        });
    }
    Ok(())
}

/// Writes the data file for `id` from the stage outputs in `run_dir`.
/// Figures 3 to 5 read a `simstudy` CSV instead.
pub fn emit(id: &str, run_dir: &Path, simstudy: Option<&Path>, out: &Path) -> Result<()> {
    if id == "fig1" {
        let points = io::read_points(&need(run_dir, COVERING, "sample-simplex")?)?;
        let rows = points.iter().map(|p| {
            let mut r: Vec<String> = p.iter().map(|&v| fmt(v)).collect();
            r.push("covering".to_string());
            r
        });
        return io::write_csv(out, &["p1", "p2", "p3", "p4", "series"], rows);
    }
    let mut rows = Vec::new();
    match id {
        "fig2" => {
            let (model, test) = design(run_dir, TEST_DESIGN)?;
            if model != ModelKind::Binary {
                return Err(CliError::config("fig2 is defined for the binary model"));
            }
            sim_power_rows(run_dir, "test", TEST_DESIGN, TEST_PI, 0.95, &mut rows)?;
            doc_rows(run_dir, &test, Statistic::Superiority, 0.95, &mut rows)?;
        }
        "fig3" | "fig4" | "fig5" => {
            let path = simstudy.ok_or_else(|| {
                CliError::config(format!("{id} needs the output of `simstudy` (pass --simstudy <csv>)"))
            })?;
            let metric = match id {
                "fig3" => "rmse",
                "fig4" => "bias",
                _ => "psd",
            };
            simstudy_rows(path, metric, &mut rows)?;
        }
        "fig6" => {
            let (_, test) = design(run_dir, TEST_DESIGN)?;
            sim_power_rows(run_dir, "training", TRAINING_DESIGN, TRAINING_PI, 0.95, &mut rows)?;
            doc_rows(run_dir, &test, Statistic::Superiority, 0.95, &mut rows)?;
        }
        "fig7" => {
            let (_, test) = design(run_dir, TEST_DESIGN)?;
            for u in [0.98, 0.9] {
                doc_rows(run_dir, &test, Statistic::Superiority, u, &mut rows)?;
            }
        }
        "futility" => {
            let (_, test) = design(run_dir, TEST_DESIGN)?;
            for l in [0.01, 0.05] {
                doc_rows(run_dir, &test, Statistic::Futility, l, &mut rows)?;
            }
        }
        "fig8" => shape_scale_rows(run_dir, &mut rows)?,
        other => {
            return Err(CliError::config(format!(
                "unknown figure id `{other}`; expected one of {}",
                FIGURE_IDS.join(", ")
            )))
        }
    }
    io::write_csv(out, &LONG_HEADER, rows.iter().map(Row::record))
}
