//! Convergence experiments: sample, build, optimise, rescale, and compare
//! with the continuum limits. Output is ordered by `(n, replicate)` and does
//! not depend on the number of worker threads.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CutSet, DomainDensity};
use crate::error::{Error, Result};
use crate::geograph::{rescaled_estimator, GeoGraph, Partition, DEFAULT_TAIL_EPS};
use crate::granulation::{box_counts, choose_gamma, BoxGrid};
use crate::kernel::Kernel;
use crate::nonlocal::RecoveryRow;
use crate::objective::{CheegerObjective, VolumeKind};
use crate::optimize::{self, SweepMode};

pub const THREADS_ENV: &str = "CHEEGER_THREADS";
/// Regime threshold `n r^d >= REGIME_FACTOR * log n`.
pub const REGIME_FACTOR: f64 = 4.0;
pub const CSV_HEADER: [&str; 12] = [
    "n",
    "r",
    "gamma",
    "seed",
    "objective",
    "raw",
    "rescaled",
    "target",
    "rel_dev",
    "method",
    "in_regime",
    "weak_distance",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSpec {
    Cheeger(CheegerObjective),
    /// Minimum bisection.
    Mbis,
    /// Total degree `Vol_{n,2}(X)`, rescaled by `n^2 r^d`.
    Vol2,
}

impl std::fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Cheeger(o) => write!(f, "{o}"),
            Self::Mbis => f.write_str("mbis"),
            Self::Vol2 => f.write_str("vol2"),
        }
    }
}

impl FromStr for ObjectiveSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mbis" => Ok(Self::Mbis),
            "vol2" => Ok(Self::Vol2),
            other => Ok(Self::Cheeger(other.parse()?)),
        }
    }
}

/// Either one radius per scheduled `n` (a single value is broadcast) or
/// `r = c (log n / n)^{1/d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RRule {
    List(Vec<f64>),
    Formula { c: f64 },
}

impl Default for RRule {
    fn default() -> Self {
        Self::Formula { c: 2.0 }
    }
}

fn default_dim() -> usize {
    2
}

fn default_uniform() -> String {
    "uniform".into()
}

fn default_replicates() -> usize {
    1
}

fn default_method() -> String {
    "refine".into()
}

fn default_passes() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_uniform")]
    pub density: String,
    #[serde(default = "default_uniform")]
    pub kernel: String,
    /// `che:v,b`, `mbis` or `vol2`.
    pub objectives: Vec<String>,
    pub n: Vec<usize>,
    #[serde(default)]
    pub r: RRule,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// `refine`, `sweep` or `exact` for the Cheeger objectives.
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_passes")]
    pub max_passes: usize,
    #[serde(default)]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn objective_specs(&self) -> Result<Vec<ObjectiveSpec>> {
        self.objectives.iter().map(|s| s.parse()).collect()
    }

    pub fn radius(&self, index: usize) -> Result<f64> {
        let n = self.n[index];
        let r = match &self.r {
            RRule::List(list) => match list.len() {
                1 => list[0],
                len if len == self.n.len() => list[index],
                len => {
                    return Err(Error::arg(format!(
                        "{len} radii given for {} sample sizes",
                        self.n.len()
                    )))
                }
            },
            RRule::Formula { c } => c * ((n as f64).ln() / n as f64).powf(1.0 / self.dim as f64),
        };
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::arg(format!("radius for n = {n} must be positive, got {r}")));
        }
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if self.n.iter().any(|&n| n < 2) {
            return Err(Error::arg("every sample size must be at least 2"));
        }
        if !matches!(self.method.as_str(), "refine" | "sweep" | "exact") {
            return Err(Error::arg(format!("unknown method `{}`", self.method)));
        }
        for i in 0..self.n.len() {
            self.radius(i)?;
        }
        self.objective_specs()?;
        Ok(())
    }
}

/// `n r^d >= 4 log n`, with a relative slack for radii set exactly on the
/// threshold.
pub fn in_regime(n: usize, r: f64, d: usize) -> bool {
    let lhs = n as f64 * r.powi(d as i32);
    let rhs = REGIME_FACTOR * (n as f64).ln();
    lhs >= rhs * (1.0 - 1e-9)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub r: f64,
    pub gamma: f64,
    pub seed: u64,
    pub objective: String,
    pub raw: f64,
    pub rescaled: f64,
    pub target: f64,
    /// `(rescaled - target) / target`; negative when the optimiser beat the
    /// continuum value.
    pub rel_dev: f64,
    pub method: String,
    pub in_regime: bool,
    pub weak_distance: Option<f64>,
    /// Seconds spent optimising; JSON only.
    pub runtime: f64,
}

/// Continuum target and reference sets for one objective.
#[derive(Debug, Clone)]
struct Target {
    value: f64,
    sets: Vec<CutSet>,
}

fn targets(dd: &DomainDensity, kernel: &Kernel, specs: &[ObjectiveSpec]) -> Result<Vec<Target>> {
    let half_sigma = 0.5 * kernel.surface_tension()?;
    specs
        .iter()
        .map(|spec| {
            let opt = match spec {
                ObjectiveSpec::Vol2 => {
                    let value = dd.total_volume(VolumeKind::Degree) * kernel.total_mass()?;
                    return Ok(Target { value, sets: vec![] });
                }
                ObjectiveSpec::Cheeger(o) => dd.continuum_cheeger(o.volume, o.balance)?,
                ObjectiveSpec::Mbis => dd.continuum_mbis()?,
            };
            let mut sets = vec![opt.argmin.clone()];
            for s in opt.co_minimizers {
                if !sets.contains(&s) {
                    sets.push(s);
                }
            }
            Ok(Target {
                value: half_sigma * opt.value,
                sets,
            })
        })
        .collect()
}

/// `sum_i | |Y ∩ Q_i| / n - nu(A ∩ Q_i) |` plus the mass of `Y` outside
/// the boxes, minimised over `A` and its complement.
pub fn weak_convergence_distance(grid: &BoxGrid, y: &Partition, a: &CutSet, dd: &DomainDensity, n: usize) -> f64 {
    let inside = grid.region_measures(dd, Some(a));
    weak_distance_from(grid, y, &inside, n)
}

fn weak_distance_from(grid: &BoxGrid, y: &Partition, inside: &[f64], n: usize) -> f64 {
    let (blacks, _) = box_counts(grid, y);
    let boxed: usize = blacks.iter().sum();
    // Every point of D lies in some box, so `A \ ∪Q_i` is empty and only
    // points of Y outside the boxes (if any) add mass.
    let outside = (y.count() - boxed) as f64 / n as f64;
    let mut to_a = crate::numeric::CompensatedSum::new();
    let mut to_complement = crate::numeric::CompensatedSum::new();
    for i in 0..grid.len() {
        let p = blacks[i] as f64 / n as f64;
        to_a.add((p - inside[i]).abs());
        to_complement.add((p - (grid.measure(i) - inside[i]).max(0.0)).abs());
    }
    to_a.value().min(to_complement.value()) + outside
}

struct Task {
    index: usize,
    n: usize,
    r: f64,
    seed: u64,
}

fn run_task(
    config: &ExperimentConfig,
    dd: &DomainDensity,
    kernel: &Kernel,
    specs: &[ObjectiveSpec],
    targets: &[Target],
    task: &Task,
) -> Result<Vec<ConvergenceRecord>> {
    let d = config.dim;
    let (n, r) = (task.n, task.r);
    let cloud = dd.sample_points(n, task.seed)?;
    let g = GeoGraph::build(cloud, r, kernel.clone(), DEFAULT_TAIL_EPS)?;
    let gamma = choose_gamma(n, r, d).gamma;
    let regime = in_regime(n, r, d);
    if !regime {
        log::warn!("n = {n}, r = {r}: below the regime n r^d >= {REGIME_FACTOR} log n");
    }
    let needs_grid = specs.iter().any(|s| !matches!(s, ObjectiveSpec::Vol2));
    let grid = if needs_grid {
        Some(BoxGrid::build(dd, g.cloud(), r, gamma)?)
    } else {
        None
    };
    let mut records = Vec::with_capacity(specs.len());
    for (spec, target) in specs.iter().zip(targets) {
        let start = Instant::now();
        let (raw, rescaled, method, partition) = match spec {
            ObjectiveSpec::Vol2 => {
                let raw = g.total_volume(VolumeKind::Degree);
                (raw, raw / ((n * n) as f64 * r.powi(d as i32)), "direct".to_string(), None)
            }
            ObjectiveSpec::Cheeger(obj) => {
                let res = match config.method.as_str() {
                    "exact" => optimize::exact_cheeger(&g, *obj)?,
                    "sweep" => optimize::sweep_cut(&g, *obj, SweepMode::Axis)?,
                    _ => optimize::refine_pipeline(&g, grid.as_ref().expect("grid built"), *obj)?,
                };
                let rescaled = rescaled_estimator(res.value, n, r, d);
                (res.value, rescaled, res.method, Some(res.partition))
            }
            ObjectiveSpec::Mbis => {
                let res = if config.method == "exact" {
                    optimize::exact_mbis(&g)?
                } else {
                    optimize::local_search_bisection(&g, &optimize::median_split(&g), config.max_passes)?
                };
                let rescaled = rescaled_estimator(res.value, n, r, d);
                (res.value, rescaled, res.method, Some(res.partition))
            }
        };
        let weak_distance = match (&partition, &grid) {
            (Some(p), Some(grid)) if !target.sets.is_empty() => Some(
                target
                    .sets
                    .iter()
                    .map(|a| weak_convergence_distance(grid, p, a, dd, n))
                    .fold(f64::INFINITY, f64::min),
            ),
            _ => None,
        };
        let rel_dev = (rescaled - target.value) / target.value;
        if rel_dev < 0.0 && !matches!(spec, ObjectiveSpec::Vol2) {
            log::warn!("{spec} at n = {n}, seed {}: rescaled {rescaled} is below the continuum target", task.seed);
        }
        records.push(ConvergenceRecord {
            n,
            r,
            gamma,
            seed: task.seed,
            objective: spec.to_string(),
            raw,
            rescaled,
            target: target.value,
            rel_dev,
            method,
            in_regime: regime,
            weak_distance,
            runtime: start.elapsed().as_secs_f64(),
        });
    }
    log::info!("n = {n}, seed {}: {} records", task.seed, records.len());
    Ok(records)
}

/// Worker count from `CHEEGER_THREADS`, if set.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&t| t > 0)
}

/// Runs every `(n, replicate)` pair; replicate `k` uses seed `seed + k`.
pub fn run_convergence(config: &ExperimentConfig) -> Result<Vec<ConvergenceRecord>> {
    run_convergence_with_threads(config, threads_from_env())
}

pub fn run_convergence_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<ConvergenceRecord>> {
    config.validate()?;
    let specs = config.objective_specs()?;
    if specs.is_empty() || config.replicates == 0 {
        return Ok(Vec::new());
    }
    let dd = DomainDensity::from_spec(&config.domain, config.dim, &config.density)?;
    let kernel = Kernel::from_spec(&config.kernel, config.dim)?;
    let targets = targets(&dd, &kernel, &specs)?;
    let mut tasks = Vec::new();
    for (i, &n) in config.n.iter().enumerate() {
        let r = config.radius(i)?;
        for k in 0..config.replicates {
            tasks.push(Task {
                index: tasks.len(),
                n,
                r,
                seed: config.seed.wrapping_add(k as u64),
            });
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::arg(format!("cannot start worker pool: {e}")))?;
    let mut chunks: Vec<(usize, Vec<ConvergenceRecord>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| run_task(config, &dd, &kernel, &specs, &targets, t).map(|r| (t.index, r)))
            .collect::<Result<Vec<_>>>()
    })?;
    chunks.sort_by_key(|c| c.0);
    Ok(chunks.into_iter().flat_map(|c| c.1).collect())
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn write_csv<W: Write>(records: &[ConvergenceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for rec in records {
        w.write_record([
            rec.n.to_string(),
            fmt_f64(rec.r),
            fmt_f64(rec.gamma),
            rec.seed.to_string(),
            rec.objective.clone(),
            fmt_f64(rec.raw),
            fmt_f64(rec.rescaled),
            fmt_f64(rec.target),
            fmt_f64(rec.rel_dev),
            rec.method.clone(),
            rec.in_regime.to_string(),
            rec.weak_distance.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn write_recovery_csv<W: Write>(rows: &[RecoveryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "estimate", "stderr", "target"])?;
    for row in rows {
        w.write_record([fmt_f64(row.r), fmt_f64(row.estimate), fmt_f64(row.stderr), fmt_f64(row.target)])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })?;
    Ok(())
}

/// Median of a nonempty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(objectives: &[&str], n: Vec<usize>, r: RRule, replicates: usize) -> ExperimentConfig {
        ExperimentConfig {
            domain: "square".into(),
            dim: 2,
            density: "uniform".into(),
            kernel: "uniform".into(),
            objectives: objectives.iter().map(|s| s.to_string()).collect(),
            n,
            r,
            replicates,
            seed: 3,
            method: "refine".into(),
            max_passes: 50,
            out: None,
        }
    }

    #[test]
    fn empty_objective_list() {
        let c = config(&[], vec![500], RRule::default(), 2);
        assert!(run_convergence(&c).unwrap().is_empty());
    }

    #[test]
    fn vol2_matches_edge_law() {
        let c = config(&["vol2"], vec![2000], RRule::List(vec![0.05]), 1);
        let recs = run_convergence(&c).unwrap();
        assert_eq!(recs.len(), 1);
        let pi = std::f64::consts::PI;
        assert!((recs[0].target - pi).abs() < 1e-12);
        assert!((recs[0].rescaled - pi).abs() <= 0.1 * pi, "{:?}", recs[0]);
    }

    #[test]
    fn records_are_self_consistent_and_thread_independent() {
        let c = config(&["che:1,1", "mbis"], vec![400, 800], RRule::default(), 2);
        let a = run_convergence_with_threads(&c, Some(1)).unwrap();
        let b = run_convergence_with_threads(&c, Some(3)).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_csv(&a, &mut ca).unwrap();
        write_csv(&b, &mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.len(), 8);
        for rec in &a {
            let back = rec.rescaled * (rec.n * rec.n) as f64 * rec.r.powi(3);
            assert!((back - rec.raw).abs() <= 1e-12 * rec.raw.max(1e-300));
            assert!(rec.weak_distance.is_some());
        }
        assert_eq!(a[0].seed, 3);
        assert_eq!(a[2].seed, 4);
        assert_eq!(a[4].n, 800);
    }

    #[test]
    fn regime_flag() {
        let n = 2000usize;
        let r = 2.0 * ((n as f64).ln() / n as f64).sqrt();
        assert!(in_regime(n, r, 2));
        assert!(!in_regime(n, 0.5 * r, 2));
    }

    #[test]
    fn weak_distance_of_ideal_and_complement() {
        let dd = DomainDensity::unit_square();
        let cloud = dd.sample_points(4000, 9).unwrap();
        let grid = BoxGrid::build(&dd, &cloud, 0.08, 0.5).unwrap();
        let a = CutSet::axis_halfspace(2, 0, 0.5);
        let y = Partition::from_indices(4000, (0..4000).filter(|&i| a.contains(&dd, cloud.point(i))));
        let d1 = weak_convergence_distance(&grid, &y, &a, &dd, 4000);
        let d2 = weak_convergence_distance(&grid, &y.complement(), &a, &dd, 4000);
        // Swapping Y for its complement moves the distance by at most the
        // box-count fluctuation.
        let fluctuation: f64 = (0..grid.len())
            .map(|i| (grid.members(i).len() as f64 / 4000.0 - grid.measure(i)).abs())
            .sum();
        assert!((d1 - d2).abs() <= fluctuation + 1e-12);
        assert!((0.0..=2.0).contains(&d1));
        // Counts matched exactly to the box measures give zero.
        let inside = grid.region_measures(&dd, Some(&a));
        let total = grid.region_measures(&dd, None);
        for i in 0..grid.len() {
            assert!((total[i] - grid.measure(i)).abs() < 1e-9);
            assert!(inside[i] <= total[i] + 1e-12);
        }
        let far = Partition::from_indices(4000, (0..4000).filter(|&i| cloud.point(i)[1] < 0.5));
        assert!(weak_convergence_distance(&grid, &far, &a, &dd, 4000) > d1);
    }

    #[test]
    fn config_parsing() {
        let json = r#"{"domain":"square","objectives":["che:2,2","mbis"],"n":[1000,2000],"r":{"c":2.5},"replicates":3}"#;
        let c: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.r, RRule::Formula { c: 2.5 });
        assert_eq!(c.objective_specs().unwrap()[1], ObjectiveSpec::Mbis);
        let json = r#"{"domain":"square","objectives":[],"n":[1000],"r":[0.05]}"#;
        let c: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.radius(0).unwrap(), 0.05);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"domain":"square","objectives":[],"n":[1],"bogus":1}"#).is_err());
        assert!("che:3,1".parse::<ObjectiveSpec>().is_err());
    }
}
