//! Space-filling designs: k-means centroids of a covering sample, crossed
//! with an odds-ratio grid, and rectangular grids for two-parameter models.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::scmc::{ConstraintSpec, Point};
use crate::trial_models::{BinarySpec, Theta};

const SIMPLEX_TOL: f64 = 1e-12;
pub const DEFAULT_RESTARTS: usize = 10;
const MAX_LLOYD_ITERS: usize = 300;

/// One `θ = (p, OR)` of the ordinal model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub p: Point,
    pub odds_ratio: f64,
}

impl ParamPoint {
    pub fn new(p: Point, odds_ratio: f64) -> Result<Self> {
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("category risks must lie in [0, 1]"));
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(alloc::format!(
                "category risks must sum to 1, got {}",
                p.iter().sum::<f64>()
            )));
        }
        if !(odds_ratio > 0.0) || !odds_ratio.is_finite() {
            return Err(Error::invalid("odds ratio must be positive and finite"));
        }
        Ok(ParamPoint { p, odds_ratio })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Training,
    Test,
}

impl DesignKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DesignKind::Training => "training",
            DesignKind::Test => "test",
        }
    }
}

/// Configuration snapshot a design was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignProvenance {
    pub bounds: Option<ConstraintSpec>,
    pub k: usize,
    pub or_grid: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub points: Vec<Theta>,
    pub kind: DesignKind,
    pub provenance: Option<DesignProvenance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult<const D: usize> {
    pub centroids: Vec<[f64; D]>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares of the returned solution.
    pub objective: f64,
    /// Objective after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest<const D: usize>(p: &[f64; D], centroids: &[[f64; D]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

// Greedy D²-weighted seeding. Falls back to the farthest point when every
// remaining point coincides with a chosen centre.
fn seed_centroids<const D: usize>(
    points: &[[f64; D]],
    k: usize,
    rng: &mut rng::StreamRng,
) -> Vec<[f64; D]> {
    let m = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..m)]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..m)
        };
        let c = points[idx];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd<const D: usize>(points: &[[f64; D]], mut centroids: Vec<[f64; D]>) -> KMeansResult<D> {
    let k = centroids.len();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        let mut objective = 0.0;
        let mut dists = Vec::with_capacity(points.len());
        for (a, p) in assignments.iter_mut().zip(points) {
            let (j, d) = nearest(p, &centroids);
            if *a != j {
                *a = j;
                changed = true;
            }
            objective += d;
            dists.push(d);
        }
        history.push(objective);
        if !changed && history.len() > 1 {
            break;
        }

        let mut sums = vec![[0.0; D]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].map(|s| s / counts[j] as f64);
            } else {
                // empty cluster: move it onto the point farthest from its centre
                let far = (0..points.len())
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]))
                    .unwrap_or(0);
                centroids[j] = points[far];
                dists[far] = 0.0;
                assignments[far] = j;
            }
        }
    }
    let objective = *history.last().unwrap_or(&0.0);
    KMeansResult {
        centroids,
        assignments,
        objective,
        history,
    }
}

/// Best-of-`restarts` Lloyd k-means with D²-weighted seeding.
pub fn kmeans<const D: usize>(
    points: &[[f64; D]],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult<D>> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(alloc::format!(
            "need 1 <= k <= number of points, got k = {k} for {} points",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points must be finite"));
    }
    let runs = par::map_indexed(restarts.max(1), |r| {
        let mut stream = rng::stream(seed, &[r as u64]);
        lloyd(points, seed_centroids(points, k, &mut stream))
    });
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.objective < best.objective { r } else { best })
        .expect("at least one restart"))
}

/// k-means centroids of a simplex covering sample, renormalized onto the
/// simplex.
pub fn kmeans_centroids(points: &[Point], k: usize, seed: u64) -> Result<Vec<Point>> {
    let result = kmeans(points, k, seed, DEFAULT_RESTARTS)?;
    Ok(result
        .centroids
        .iter()
        .map(|c| {
            let s: f64 = c.iter().sum();
            c.map(|v| v / s)
        })
        .collect())
}

/// Cartesian product of centroids and odds ratios, centroid-major.
pub fn cross_with_or(centroids: &[Point], or_values: &[f64], kind: DesignKind) -> Result<Design> {
    if centroids.is_empty() || or_values.is_empty() {
        return Err(Error::invalid("centroids and odds-ratio grid must be nonempty"));
    }
    let mut points = Vec::with_capacity(centroids.len() * or_values.len());
    for c in centroids {
        for &or in or_values {
            points.push(Theta::Ordinal(ParamPoint::new(*c, or)?));
        }
    }
    Ok(Design {
        points,
        kind,
        provenance: None,
    })
}

/// `n` equally spaced values covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Equally spaced `(p0, OR)` grid, `p0`-major, endpoints included.
pub fn rect_grid(
    p0_range: (f64, f64),
    or_range: (f64, f64),
    n_p0: usize,
    n_or: usize,
) -> Result<Vec<(f64, f64)>> {
    if n_p0 < 2 || n_or < 2 {
        return Err(Error::invalid("grid counts must be at least 2"));
    }
    if !(p0_range.0 < p0_range.1) || !(or_range.0 < or_range.1) {
        return Err(Error::invalid("grid intervals must be nonempty"));
    }
    let ors = linspace(or_range.0, or_range.1, n_or);
    Ok(linspace(p0_range.0, p0_range.1, n_p0)
        .into_iter()
        .flat_map(|p0| ors.iter().map(move |&or| (p0, or)))
        .collect())
}

/// Wraps `(p0, OR)` pairs as binary-model parameter points.
pub fn binary_design(pairs: &[(f64, f64)], kind: DesignKind) -> Result<Design> {
    let points = pairs
        .iter()
        .map(|&(p0, or)| BinarySpec::new(p0, or).map(Theta::Binary))
        .collect::<Result<Vec<_>>>()?;
    Ok(Design {
        points,
        kind,
        provenance: None,
    })
}

/// Full ordinal design: cluster a covering sample, then cross with `or_grid`.
pub fn ordinal_design(
    covering: &[Point],
    bounds: &ConstraintSpec,
    k: usize,
    or_grid: &[f64],
    seed: u64,
    kind: DesignKind,
) -> Result<Design> {
    let centroids = kmeans_centroids(covering, k, seed)?;
    let mut design = cross_with_or(&centroids, or_grid, kind)?;
    design.provenance = Some(DesignProvenance {
        bounds: Some(bounds.clone()),
        k,
        or_grid: or_grid.to_vec(),
        seed,
    });
    Ok(design)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equals_m_returns_inputs() {
        let pts: Vec<Point> = vec![
            [0.7, 0.2, 0.05, 0.05],
            [0.6, 0.3, 0.05, 0.05],
            [0.8, 0.1, 0.05, 0.05],
        ];
        let mut c = kmeans_centroids(&pts, 3, 1).unwrap();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut expected = pts.clone();
        expected.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (x, y) in c.iter().zip(&expected) {
            for k in 0..4 {
                assert!((x[k] - y[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn k_one_is_normalized_mean() {
        let pts: Vec<Point> = vec![[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5], [0.2, 0.3, 0.4, 0.1]];
        let c = kmeans_centroids(&pts, 1, 0).unwrap();
        let mean: Point = core::array::from_fn(|k| pts.iter().map(|p| p[k]).sum::<f64>() / 3.0);
        let s: f64 = mean.iter().sum();
        for k in 0..4 {
            assert!((c[0][k] - mean[k] / s).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_points_still_give_k_centroids() {
        let pts: Vec<[f64; 2]> = vec![[0.0, 0.0]; 5].into_iter().chain([[1.0, 1.0]]).collect();
        let r = kmeans(&pts, 3, 9, 3).unwrap();
        assert_eq!(r.centroids.len(), 3);
        assert!(r.objective.abs() < 1e-15);
    }

    #[test]
    fn cross_sizes_and_order() {
        let c = [[0.7, 0.2, 0.05, 0.05], [0.6, 0.3, 0.05, 0.05]];
        let d = cross_with_or(&c, &[0.7, 0.8, 0.9, 1.0], DesignKind::Training).unwrap();
        assert_eq!(d.points.len(), 8);
        match (&d.points[0], &d.points[3], &d.points[4]) {
            (Theta::Ordinal(a), Theta::Ordinal(b), Theta::Ordinal(e)) => {
                assert_eq!((a.p, a.odds_ratio), (c[0], 0.7));
                assert_eq!((b.p, b.odds_ratio), (c[0], 1.0));
                assert_eq!((e.p, e.odds_ratio), (c[1], 0.7));
            }
            _ => panic!("expected ordinal points"),
        }
        let single = cross_with_or(&c[..1], &[0.9], DesignKind::Test).unwrap();
        assert_eq!(single.points, vec![Theta::Ordinal(ParamPoint::new(c[0], 0.9).unwrap())]);
        assert!(cross_with_or(&[], &[1.0], DesignKind::Test).is_err());
    }

    #[test]
    fn rect_grid_corners() {
        let g = rect_grid((0.25, 0.7), (0.65, 1.0), 10, 10).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], (0.25, 0.65));
        assert_eq!(g[99], (0.7, 1.0));
        let c = rect_grid((0.25, 0.7), (0.65, 1.0), 2, 2).unwrap();
        assert_eq!(c, vec![(0.25, 0.65), (0.25, 1.0), (0.7, 0.65), (0.7, 1.0)]);
        assert_eq!(rect_grid((0.25, 0.7), (0.65, 1.0), 4, 5).unwrap().len(), 20);
        assert!(rect_grid((0.25, 0.7), (0.65, 1.0), 1, 5).is_err());
    }

    #[test]
    fn param_point_validation() {
        assert!(ParamPoint::new([0.25; 4], 0.8).is_ok());
        assert!(ParamPoint::new([0.3; 4], 0.8).is_err());
        assert!(ParamPoint::new([0.25; 4], 0.0).is_err());
    }
}
