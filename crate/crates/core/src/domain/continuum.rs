//! Continuum Cheeger and bisection values by parametric family scans,
//! cross-checked against a discrete minimiser over unions of grid cells.

use rayon::prelude::*;
use serde::Serialize;

use super::{BoxUnion, CutSet, DomainDensity, Shape};
use crate::error::{Error, Result};
use crate::numeric::{bisect_root, golden_section, CompensatedSum};
use crate::objective::{BalanceKind, VolumeKind};

/// Relative tolerance under which two family minima count as co-minimisers.
const CO_MINIMIZER_RTOL: f64 = 1e-9;
/// Allowed violation of `nu(A) = 1/2` for bisection candidates.
const MBIS_CONSTRAINT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimumSource {
    Parametric,
    Grid,
}

/// Result of a continuum minimisation. The value is the smallest one found
/// over the searched sets, hence an upper bound on the infimum.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuumOptimum {
    pub value: f64,
    pub argmin: CutSet,
    pub source: OptimumSource,
    pub parametric_value: f64,
    /// `None` when no feasible grid set was found.
    pub grid_value: Option<f64>,
    /// Family minimisers whose value matches the parametric minimum.
    pub co_minimizers: Vec<CutSet>,
    pub upper_bound: bool,
}

#[derive(Debug, Clone, Copy)]
enum FamilyKind {
    Axis(usize),
    Corner(usize),
    Cap(usize, bool),
}

#[derive(Debug, Clone, Copy)]
struct Family {
    kind: FamilyKind,
    lo: f64,
    hi: f64,
    /// Whether `p = hi` is itself admissible.
    closed_hi: bool,
}

impl Family {
    fn set(&self, d: usize, p: f64) -> CutSet {
        match self.kind {
            FamilyKind::Axis(k) => CutSet::axis_halfspace(d, k, p),
            FamilyKind::Corner(bits) => CutSet::CornerDisc { corner: bits, radius: p },
            FamilyKind::Cap(k, upper) => CutSet::axis_cap(d, k, upper, p),
        }
    }
}

fn families(dd: &DomainDensity) -> Vec<Family> {
    let d = dd.dim();
    match dd.shape() {
        Shape::Box { lo, hi } => {
            let mut out: Vec<Family> = (0..d)
                .map(|k| Family {
                    kind: FamilyKind::Axis(k),
                    lo: lo[k],
                    hi: hi[k],
                    closed_hi: false,
                })
                .collect();
            let min_side = lo.iter().zip(hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
            out.extend((0..1usize << d).map(|bits| Family {
                kind: FamilyKind::Corner(bits),
                lo: 0.0,
                hi: min_side,
                closed_hi: true,
            }));
            out
        }
        Shape::Ball { radius, .. } => (0..d)
            .flat_map(|k| [true, false].map(|upper| (k, upper)))
            .map(|(k, upper)| Family {
                kind: FamilyKind::Cap(k, upper),
                lo: -radius,
                hi: *radius,
                closed_hi: false,
            })
            .collect(),
    }
}

fn check_supported(dd: &DomainDensity) -> Result<()> {
    let d = dd.dim();
    if d > 4 {
        return Err(Error::UnsupportedDomain(format!(
            "continuum optimisation is implemented for d <= 4 (d = {d})"
        )));
    }
    if !dd.is_uniform() && d > 3 {
        return Err(Error::UnsupportedDomain(format!(
            "non-uniform densities need d = 2 or 3 for continuum optimisation (d = {d})"
        )));
    }
    Ok(())
}

fn continuum_ratio(tv: f64, bal: f64) -> f64 {
    if bal > 0.0 && tv.is_finite() {
        tv / bal
    } else {
        f64::INFINITY
    }
}

impl DomainDensity {
    /// `CHE_{v,b}(D, rho) = inf TV(1_A) / Bal_{nu,v,b}(A)`, searched over
    /// axis halfspaces and corner discs (boxes) or axis caps (balls) and over
    /// unions of cells of the quadrature grid.
    pub fn continuum_cheeger(&self, v: VolumeKind, b: BalanceKind) -> Result<ContinuumOptimum> {
        check_supported(self)?;
        let d = self.dim();
        let total = self.total_volume(v);
        let objective = |a: &CutSet| -> f64 {
            let (Ok(vol), Ok(tv)) = (self.region_volume(a, v), self.continuum_tv(a)) else {
                return f64::INFINITY;
            };
            let vol = vol.clamp(0.0, total);
            continuum_ratio(tv, b.combine(vol, total - vol, total))
        };
        let steps = if self.is_uniform() { 10_000 } else { 100 };

        let mut best: Vec<(f64, CutSet)> = Vec::new();
        for fam in families(self) {
            let width = fam.hi - fam.lo;
            let last = if fam.closed_hi { steps } else { steps - 1 };
            let mut arg = 0;
            let mut fmin = f64::INFINITY;
            for j in 1..=last {
                let p = fam.lo + width * j as f64 / steps as f64;
                let f = objective(&fam.set(d, p));
                if f < fmin {
                    fmin = f;
                    arg = j;
                }
            }
            if !fmin.is_finite() {
                continue;
            }
            let p_star = fam.lo + width * arg as f64 / steps as f64;
            let a = fam.lo + width * (arg - 1) as f64 / steps as f64;
            let hi = (fam.lo + width * (arg + 1) as f64 / steps as f64).min(fam.hi);
            let (p_ref, f_ref) = golden_section(|p| objective(&fam.set(d, p)), a, hi, 1e-10 * width);
            let (p, f) = if f_ref < fmin { (p_ref, f_ref) } else { (p_star, fmin) };
            best.push((f, fam.set(d, p)));
        }
        let parametric_value = best.iter().map(|(f, _)| *f).fold(f64::INFINITY, f64::min);
        if !parametric_value.is_finite() {
            return Err(Error::UnsupportedDomain("no admissible parametric set".into()));
        }
        let co_minimizers: Vec<CutSet> = best
            .iter()
            .filter(|(f, _)| *f <= parametric_value * (1.0 + CO_MINIMIZER_RTOL))
            .map(|(_, a)| a.clone())
            .collect();
        let parametric_argmin = co_minimizers[0].clone();

        let oracle = GridOracle::new(self, v);
        let grid = oracle.cheeger(b);
        let grid_value = grid.as_ref().map(|(f, _)| *f);
        let (value, argmin, source) = match grid {
            Some((f, cells)) if f < parametric_value => (f, CutSet::BoxUnion(oracle.union(cells)), OptimumSource::Grid),
            _ => (parametric_value, parametric_argmin, OptimumSource::Parametric),
        };
        Ok(ContinuumOptimum {
            value,
            argmin,
            source,
            parametric_value,
            grid_value,
            co_minimizers,
            upper_bound: true,
        })
    }

    /// `MBIS_nu(D) = inf { TV(1_A) : nu(A) = 1/2 }` over the same sets.
    pub fn continuum_mbis(&self) -> Result<ContinuumOptimum> {
        check_supported(self)?;
        let d = self.dim();
        let mut best: Vec<(f64, CutSet)> = Vec::new();
        for fam in families(self) {
            let width = fam.hi - fam.lo;
            let mass = |p: f64| self.probability(&fam.set(d, p)).unwrap_or(f64::NAN) - 0.5;
            let Some(p) = bisect_root(mass, fam.lo, fam.hi, 1e-10 * width) else {
                continue;
            };
            let a = fam.set(d, p);
            if (self.probability(&a)? - 0.5).abs() > MBIS_CONSTRAINT_TOL {
                continue;
            }
            best.push((self.continuum_tv(&a)?, a));
        }
        let parametric_value = best.iter().map(|(f, _)| *f).fold(f64::INFINITY, f64::min);
        if !parametric_value.is_finite() {
            return Err(Error::UnsupportedDomain("no parametric set bisects the domain".into()));
        }
        let co_minimizers: Vec<CutSet> = best
            .iter()
            .filter(|(f, _)| *f <= parametric_value * (1.0 + CO_MINIMIZER_RTOL))
            .map(|(_, a)| a.clone())
            .collect();
        let parametric_argmin = co_minimizers[0].clone();

        let oracle = GridOracle::new(self, VolumeKind::Count);
        let grid = oracle.bisection();
        let grid_value = grid.as_ref().map(|(f, _)| *f);
        let (value, argmin, source) = match grid {
            Some((f, cells)) if f < parametric_value => (f, CutSet::BoxUnion(oracle.union(cells)), OptimumSource::Grid),
            _ => (parametric_value, parametric_argmin, OptimumSource::Parametric),
        };
        Ok(ContinuumOptimum {
            value,
            argmin,
            source,
            parametric_value,
            grid_value,
            co_minimizers,
            upper_bound: true,
        })
    }
}

/// Cells of the quadrature grid with centre in `D`, their `rho^v` masses and
/// the `rho^2`-weighted areas of faces shared by two such cells.
struct GridOracle<'a> {
    dd: &'a DomainDensity,
    m: usize,
    lo: Vec<f64>,
    h: Vec<f64>,
    inside: Vec<bool>,
    mass: Vec<f64>,
    prob: Vec<f64>,
    /// `face[c * d + k]`: weight of the face between `c` and `c + e_k`.
    face: Vec<f64>,
}

/// Per sweep: value and prefix length of the sublevel sets attaining the
/// sweep minimum (Cheeger) or the closest bisection (MBIS).
type SweepBest = Vec<(f64, usize)>;

impl<'a> GridOracle<'a> {
    fn new(dd: &'a DomainDensity, v: VolumeKind) -> Self {
        let d = dd.dim();
        let m = dd.quadrature_resolution();
        let (lo, hi) = dd.bounds();
        let h: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| (u - l) / m as f64).collect();
        let cell_vol: f64 = h.iter().product();
        let total = m.pow(d as u32);
        let face_area: Vec<f64> = (0..d)
            .map(|k| (0..d).filter(|&j| j != k).map(|j| h[j]).product())
            .collect();
        let mut oracle = Self {
            dd,
            m,
            lo,
            h,
            inside: vec![false; total],
            mass: vec![0.0; total],
            prob: vec![0.0; total],
            face: vec![0.0; total * d],
        };
        let mut x = vec![0.0; d];
        for c in 0..total {
            oracle.center_into(c, &mut x);
            if !dd.contains(&x) {
                continue;
            }
            oracle.inside[c] = true;
            let rho = dd.density_unchecked(&x);
            oracle.prob[c] = rho * cell_vol;
            oracle.mass[c] = rho.powi(v.index() as i32) * cell_vol;
        }
        let mut stride = 1;
        for k in 0..d {
            for c in 0..total {
                if !oracle.inside[c] || (c / stride) % m == m - 1 || !oracle.inside[c + stride] {
                    continue;
                }
                oracle.center_into(c, &mut x);
                x[k] += 0.5 * oracle.h[k];
                let rho = dd.density_unchecked(&x);
                oracle.face[c * d + k] = rho * rho * face_area[k];
            }
            stride *= m;
        }
        oracle
    }

    fn center_into(&self, mut c: usize, x: &mut [f64]) {
        for k in 0..x.len() {
            x[k] = self.lo[k] + ((c % self.m) as f64 + 0.5) * self.h[k];
            c /= self.m;
        }
    }

    fn union(&self, cells: Vec<usize>) -> BoxUnion {
        BoxUnion::new(self.lo.clone(), self.h.clone(), vec![self.m; self.lo.len()], cells)
    }

    /// Scores whose sublevel sets are swept: axis coordinates and squared
    /// distances to corners for boxes, signed axis projections for balls.
    fn scores(&self) -> Vec<Box<dyn Fn(&[f64]) -> f64 + Sync + '_>> {
        let d = self.lo.len();
        let mut out: Vec<Box<dyn Fn(&[f64]) -> f64 + Sync>> = Vec::new();
        match self.dd.shape() {
            Shape::Box { lo, hi } => {
                for k in 0..d {
                    out.push(Box::new(move |x: &[f64]| x[k]));
                }
                for bits in 0..1usize << d {
                    let (origin, _) = super::corner_frame(lo, hi, bits);
                    out.push(Box::new(move |x: &[f64]| {
                        x.iter().zip(&origin).map(|(a, b)| (a - b) * (a - b)).sum()
                    }));
                }
            }
            Shape::Ball { center, .. } => {
                for k in 0..d {
                    for sign in [1.0, -1.0] {
                        let ck = center[k];
                        out.push(Box::new(move |x: &[f64]| -sign * (x[k] - ck)));
                    }
                }
            }
        }
        out
    }

    fn order(&self, score: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Vec<(f64, usize)> {
        let d = self.lo.len();
        let mut x = vec![0.0; d];
        let mut keyed: Vec<(f64, usize)> = (0..self.inside.len())
            .filter(|&c| self.inside[c])
            .map(|c| {
                self.center_into(c, &mut x);
                (score(&x), c)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed
    }

    /// Adds cells in score order and calls `visit(prefix_len, tv, mass, prob)`
    /// after each group of equal scores.
    fn sweep(&self, order: &[(f64, usize)], mut visit: impl FnMut(usize, f64, f64, f64)) {
        let d = self.lo.len();
        let m = self.m;
        let mut in_set = vec![false; self.inside.len()];
        let mut tv = CompensatedSum::new();
        let mut mass = CompensatedSum::new();
        let mut prob = CompensatedSum::new();
        let mut i = 0;
        while i < order.len() {
            let s = order[i].0;
            while i < order.len() && order[i].0 == s {
                let c = order[i].1;
                in_set[c] = true;
                mass.add(self.mass[c]);
                prob.add(self.prob[c]);
                let mut stride = 1;
                for k in 0..d {
                    let coord = (c / stride) % m;
                    if coord + 1 < m {
                        let w = self.face[c * d + k];
                        if w > 0.0 {
                            tv.add(if in_set[c + stride] { -w } else { w });
                        }
                    }
                    if coord > 0 {
                        let w = self.face[(c - stride) * d + k];
                        if w > 0.0 {
                            tv.add(if in_set[c - stride] { -w } else { w });
                        }
                    }
                    stride *= m;
                }
                i += 1;
            }
            visit(i, tv.value(), mass.value(), prob.value());
        }
    }

    fn totals(&self) -> (f64, f64) {
        (
            self.mass.iter().copied().sum::<CompensatedSum>().value(),
            self.prob.iter().copied().sum::<CompensatedSum>().value(),
        )
    }

    fn cheeger(&self, b: BalanceKind) -> Option<(f64, Vec<usize>)> {
        let (total, _) = self.totals();
        let scores = self.scores();
        let results: Vec<(Vec<(f64, usize)>, SweepBest)> = scores
            .par_iter()
            .map(|score| {
                let order = self.order(score.as_ref());
                let mut best: SweepBest = Vec::new();
                let mut fmin = f64::INFINITY;
                self.sweep(&order, |len, tv, mass, _| {
                    if len == order.len() {
                        return;
                    }
                    let f = continuum_ratio(tv, b.combine(mass, total - mass, total));
                    if f < fmin {
                        fmin = f;
                        best.clear();
                    }
                    if f == fmin && f.is_finite() {
                        best.push((f, len));
                    }
                });
                (order, best)
            })
            .collect();
        pick_smallest(&results)
    }

    fn bisection(&self) -> Option<(f64, Vec<usize>)> {
        let (_, total_prob) = self.totals();
        let scores = self.scores();
        let results: Vec<(Vec<(f64, usize)>, SweepBest)> = scores
            .par_iter()
            .map(|score| {
                let order = self.order(score.as_ref());
                let mut gap_min = f64::INFINITY;
                let mut best: SweepBest = Vec::new();
                self.sweep(&order, |len, tv, _, prob| {
                    let gap = (prob / total_prob - 0.5).abs();
                    if gap < gap_min || (gap == gap_min && best.first().is_some_and(|&(f, _)| tv < f)) {
                        gap_min = gap;
                        best = vec![(tv, len)];
                    }
                });
                if gap_min > MBIS_CONSTRAINT_TOL {
                    best.clear();
                }
                (order, best)
            })
            .collect();
        pick_smallest(&results)
    }
}

/// Minimum value over all sweeps; exact ties resolved by the lexicographically
/// smallest sorted cell list.
fn pick_smallest(results: &[(Vec<(f64, usize)>, SweepBest)]) -> Option<(f64, Vec<usize>)> {
    let fmin = results
        .iter()
        .flat_map(|(_, best)| best.iter().map(|(f, _)| *f))
        .fold(f64::INFINITY, f64::min);
    if !fmin.is_finite() {
        return None;
    }
    let mut chosen: Option<Vec<usize>> = None;
    for (order, best) in results {
        for &(f, len) in best {
            if f != fmin {
                continue;
            }
            let mut cells: Vec<usize> = order[..len].iter().map(|&(_, c)| c).collect();
            cells.sort_unstable();
            if chosen.as_ref().is_none_or(|c| cells < *c) {
                chosen = Some(cells);
            }
        }
    }
    chosen.map(|cells| (fmin, cells))
}
