//! CSV and JSON file formats.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use trialoc_core::design::{DesignKind, ParamPoint};
use trialoc_core::scmc::Point;
use trialoc_core::trial_models::{BinarySpec, ModelKind, PiSample, Theta};

use crate::error::{CliError, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
        }
        _ => Ok(()),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        CliError::config(format!("{}: {e}", path.display()))
    }
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Header and rows of a CSV file.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, name: &str, path: &Path) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| CliError::config(format!("{}: missing column `{name}`", path.display())))
    }
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(rec.iter().map(|v| v.trim().to_string()).collect());
    }
    Ok(Table { header, rows })
}

fn parse<T: std::str::FromStr>(v: &str, path: &Path, line: usize) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::config(format!("{}: row {line}: cannot parse `{v}`", path.display())))
}

pub fn write_points(path: &Path, points: &[Point]) -> Result<()> {
    write_csv(
        path,
        &["p1", "p2", "p3", "p4"],
        points.iter().map(|p| p.iter().map(|&v| fmt(v)).collect()),
    )
}

pub fn read_points(path: &Path) -> Result<Vec<Point>> {
    let t = read_csv(path)?;
    let cols = ["p1", "p2", "p3", "p4"]
        .iter()
        .map(|c| t.require(c, path))
        .collect::<Result<Vec<_>>>()?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut p = [0.0; 4];
            for (k, &c) in cols.iter().enumerate() {
                p[k] = parse(&row[c], path, i + 1)?;
            }
            Ok(p)
        })
        .collect()
}

/// Ordinal designs are `p1,p2,p3,p4,or,kind`; binary designs `p0,or,kind`.
pub fn write_design(path: &Path, points: &[Theta], kind: DesignKind, model: ModelKind) -> Result<()> {
    let header: &[&str] = match model {
        ModelKind::Ordinal => &["p1", "p2", "p3", "p4", "or", "kind"],
        ModelKind::Binary => &["p0", "or", "kind"],
    };
    let rows = points.iter().map(|t| {
        let mut row: Vec<String> = t.coords().into_iter().map(fmt).collect();
        row.push(kind.as_str().to_string());
        row
    });
    write_csv(path, header, rows)
}

pub fn read_design(path: &Path) -> Result<(ModelKind, Vec<Theta>)> {
    let t = read_csv(path)?;
    let or = t.require("or", path)?;
    if t.column("p1").is_some() {
        let cols = ["p1", "p2", "p3", "p4"]
            .iter()
            .map(|c| t.require(c, path))
            .collect::<Result<Vec<_>>>()?;
        let points = t
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut p = [0.0; 4];
                for (k, &c) in cols.iter().enumerate() {
                    p[k] = parse(&row[c], path, i + 1)?;
                }
                let point = ParamPoint::new(p, parse(&row[or], path, i + 1)?)
                    .map_err(|e| CliError::config(format!("{}: row {}: {e}", path.display(), i + 1)))?;
                Ok(Theta::Ordinal(point))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((ModelKind::Ordinal, points))
    } else {
        let p0 = t.require("p0", path)?;
        let points = t
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let spec = BinarySpec::new(parse(&row[p0], path, i + 1)?, parse(&row[or], path, i + 1)?)
                    .map_err(|e| CliError::config(format!("{}: row {}: {e}", path.display(), i + 1)))?;
                Ok(Theta::Binary(spec))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((ModelKind::Binary, points))
    }
}

pub fn write_pi_samples(path: &Path, samples: &[PiSample]) -> Result<()> {
    let rows = samples.iter().enumerate().flat_map(|(i, s)| {
        s.draws
            .iter()
            .enumerate()
            .map(move |(r, &pi)| vec![i.to_string(), r.to_string(), fmt(pi)])
    });
    write_csv(path, &["theta_id", "replicate", "pi"], rows)
}

/// Groups `theta_id, replicate, pi` rows by `theta_id` and pairs them with
/// the design rows of the same index.
pub fn read_pi_samples(path: &Path, design: &[Theta]) -> Result<Vec<PiSample>> {
    let t = read_csv(path)?;
    let (id, pi) = (t.require("theta_id", path)?, t.require("pi", path)?);
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (i, row) in t.rows.iter().enumerate() {
        let theta_id: usize = parse(&row[id], path, i + 1)?;
        groups.entry(theta_id).or_default().push(parse(&row[pi], path, i + 1)?);
    }
    groups
        .into_iter()
        .map(|(theta_id, draws)| {
            let theta = design.get(theta_id).ok_or_else(|| {
                CliError::config(format!(
                    "{}: theta_id {theta_id} has no row in the design ({} points)",
                    path.display(),
                    design.len()
                ))
            })?;
            Ok(PiSample {
                theta: *theta,
                draws,
                warnings: 0,
            })
        })
        .collect()
}

pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::config(format!("cannot parse `{s}` in list `{text}`")))
        })
        .collect()
}
