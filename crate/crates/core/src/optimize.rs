//! Partition optimisers: exhaustive search on small graphs, prefix sweeps
//! along a scalar score, greyscale removal on a box grid, and a swap local
//! search for the minimum bisection.

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geograph::{GeoGraph, Partition};
use crate::granulation::{box_counts, classify_boxes, BoxColor, BoxGrid, BoxKernel};
use crate::objective::{CheegerObjective, VolumeKind};

/// Largest `n` accepted by [`exact_cheeger`].
pub const EXACT_CHEEGER_LIMIT: usize = 22;
/// Largest `n` accepted by [`exact_mbis`].
pub const EXACT_MBIS_LIMIT: usize = 24;

/// Relative band around the incremental minimum inside which candidates are
/// re-evaluated from scratch.
const NEAR_TIE_RTOL: f64 = 1e-9;
/// Values closer than this (relatively) are treated as ties.
const TIE_RTOL: f64 = 1e-12;
const FIEDLER_TOL: f64 = 1e-6;
/// Smallest swap gain accepted by the bisection local search.
const MIN_GAIN: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerResult {
    #[serde(skip)]
    pub partition: Partition,
    pub value: f64,
    pub method: String,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Axis,
    Fiedler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GreyscaleMode {
    Cut,
    Ratio,
}

fn ties(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

/// Picks `cand` over `best` if it is smaller, or tied and lexicographically
/// smaller.
fn better(cand: (f64, &Partition), best: Option<&(f64, Partition)>) -> bool {
    match best {
        None => true,
        Some((v, p)) => {
            if ties(cand.0, *v) {
                cand.1 < p
            } else {
                cand.0 < *v
            }
        }
    }
}

/// Incremental state for toggling vertices in and out of `Y`.
struct Incremental<'g> {
    g: &'g GeoGraph,
    in_y: Vec<bool>,
    /// `sum_{j in Y} w_ij`.
    to_y: Vec<f64>,
    cut: f64,
    vol: f64,
    v: VolumeKind,
}

impl<'g> Incremental<'g> {
    fn new(g: &'g GeoGraph, v: VolumeKind) -> Self {
        Self {
            g,
            in_y: vec![false; g.len()],
            to_y: vec![0.0; g.len()],
            cut: 0.0,
            vol: 0.0,
            v,
        }
    }

    fn toggle(&mut self, i: usize) {
        let deg = self.g.degree(i);
        let sign = if self.in_y[i] { -1.0 } else { 1.0 };
        self.cut += sign * (deg - 2.0 * self.to_y[i]);
        self.vol += sign
            * match self.v {
                VolumeKind::Count => 1.0,
                VolumeKind::Degree => deg,
            };
        self.in_y[i] = !self.in_y[i];
        let (nb, w) = self.g.neighbors(i);
        for (&j, &wij) in nb.iter().zip(w) {
            self.to_y[j] += sign * wij;
        }
    }

    fn ratio(&self, obj: CheegerObjective, total: f64) -> f64 {
        let bal = obj.balance.combine(self.vol, (total - self.vol).max(0.0), total);
        CheegerObjective::ratio(self.cut.max(0.0), bal)
    }
}

fn finish(
    g: &GeoGraph,
    partition: Partition,
    obj: Option<CheegerObjective>,
    method: &str,
    iterations: usize,
    start: Instant,
    flags: Vec<String>,
) -> Result<OptimizerResult> {
    let value = match obj {
        Some(obj) => g.objective(&partition, obj)?,
        None => g.cut_weight(&partition),
    };
    Ok(OptimizerResult {
        partition,
        value,
        method: method.to_string(),
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        flags,
    })
}

fn check_volume(g: &GeoGraph, obj: CheegerObjective) -> Result<f64> {
    let total = g.total_volume(obj.volume);
    if !(total > 0.0) {
        return Err(Error::DegenerateGraph("total volume is zero".into()));
    }
    Ok(total)
}

/// Exhaustive minimum of `Cut / Bal` over all nonempty proper subsets,
/// visited in Gray-code order.
pub fn exact_cheeger(g: &GeoGraph, obj: CheegerObjective) -> Result<OptimizerResult> {
    let start = Instant::now();
    let n = g.len();
    if n > EXACT_CHEEGER_LIMIT {
        return Err(Error::Budget {
            n,
            limit: EXACT_CHEEGER_LIMIT,
        });
    }
    if n < 2 {
        return Err(Error::arg("need at least two points"));
    }
    let total = check_volume(g, obj)?;
    let full = (1u64 << n) - 1;

    // Pass 1: incremental minimum. Pass 2: exact re-evaluation of every
    // subset within a relative band of it.
    let scan = |mut visit: Box<dyn FnMut(u64, f64) + '_>| {
        let mut inc = Incremental::new(g, obj.volume);
        for k in 1u64..(1u64 << n) {
            let bit = k.trailing_zeros() as usize;
            inc.toggle(bit);
            let mask = k ^ (k >> 1);
            if mask != full {
                visit(mask, inc.ratio(obj, total));
            }
        }
    };
    let mut approx = f64::INFINITY;
    scan(Box::new(|_, f| approx = approx.min(f)));
    let band = approx + NEAR_TIE_RTOL * approx.abs() + f64::MIN_POSITIVE;
    let mut best: Option<(f64, Partition)> = None;
    let mut iterations = 0;
    scan(Box::new(|mask, f| {
        iterations += 1;
        if f > band {
            return;
        }
        let p = Partition::from_bits(n, mask);
        let exact = g.objective(&p, obj).unwrap_or(f64::INFINITY);
        if better((exact, &p), best.as_ref()) {
            best = Some((exact, p));
        }
    }));
    let (_, partition) = best.ok_or_else(|| Error::DegenerateGraph("no finite objective".into()))?;
    finish(g, partition, Some(obj), "exact", iterations, start, Vec::new())
}

/// Exhaustive minimum cut over subsets of size `floor(n / 2)`.
pub fn exact_mbis(g: &GeoGraph) -> Result<OptimizerResult> {
    let start = Instant::now();
    let n = g.len();
    if n > EXACT_MBIS_LIMIT {
        return Err(Error::Budget {
            n,
            limit: EXACT_MBIS_LIMIT,
        });
    }
    if n < 2 {
        return Err(Error::arg("need at least two points"));
    }
    let k = n / 2;
    let mut dense = vec![0.0; n * n];
    for i in 0..n {
        let (nb, w) = g.neighbors(i);
        for (&j, &wij) in nb.iter().zip(w) {
            dense[i * n + j] = wij;
        }
    }
    let cut_of = |mask: u64| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                for j in 0..n {
                    if mask >> j & 1 == 0 {
                        acc += dense[i * n + j];
                    }
                }
            }
        }
        acc
    };
    let mut best: Option<(f64, Partition)> = None;
    let mut iterations = 0;
    let limit = 1u64 << n;
    let mut mask = (1u64 << k) - 1;
    while mask < limit {
        iterations += 1;
        let f = cut_of(mask);
        let p = Partition::from_bits(n, mask);
        if better((f, &p), best.as_ref()) {
            best = Some((f, p));
        }
        if k == 0 {
            break;
        }
        // Gosper's hack: next larger integer with the same popcount.
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    let (_, partition) = best.expect("at least one bisection");
    finish(g, partition, None, "exact", iterations, start, Vec::new())
}

/// Best prefix `{first k points of order}` for `k = 1..n-1`, returning its
/// length and incremental value.
fn best_prefix(g: &GeoGraph, order: &[usize], obj: CheegerObjective, total: f64) -> (usize, f64) {
    let mut inc = Incremental::new(g, obj.volume);
    let mut best = (0, f64::INFINITY);
    for (k, &i) in order[..order.len() - 1].iter().enumerate() {
        inc.toggle(i);
        let f = inc.ratio(obj, total);
        if f < best.1 {
            best = (k + 1, f);
        }
    }
    best
}

fn order_by(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

fn axis_orders(g: &GeoGraph) -> Vec<Vec<usize>> {
    (0..g.dim())
        .map(|k| {
            let coords: Vec<f64> = g.cloud().iter().map(|p| p[k]).collect();
            order_by(&coords)
        })
        .collect()
}

fn connected(g: &GeoGraph) -> bool {
    let n = g.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in g.neighbors(i).0 {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

/// Eigenvector of the second smallest Laplacian eigenvalue by power
/// iteration on `c I - L`, deflating constants. `None` on the iteration cap.
pub fn fiedler_vector(g: &GeoGraph) -> (Option<Vec<f64>>, usize) {
    let n = g.len();
    let c = 2.0 * (0..n).map(|i| g.degree(i)).fold(0.0, f64::max);
    let laplacian = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let (nb, w) = g.neighbors(i);
            let s: f64 = nb.iter().zip(w).map(|(&j, &wij)| wij * x[j]).sum();
            out[i] = g.degree(i) * x[i] - s;
        }
    };
    let normalise = |x: &mut [f64]| {
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
    };
    // Start from the first coordinate plus a deterministic perturbation.
    let mut x: Vec<f64> = g
        .cloud()
        .iter()
        .enumerate()
        .map(|(i, p)| p[0] + 1e-3 * ((i as f64 * 0.618_033_988_75).fract() - 0.5))
        .collect();
    normalise(&mut x);
    let mut lx = vec![0.0; n];
    let cap = 10 * n;
    for it in 1..=cap {
        laplacian(&x, &mut lx);
        let lambda: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
        let residual = x.iter().zip(&lx).map(|(a, b)| (b - lambda * a).powi(2)).sum::<f64>().sqrt();
        if residual <= FIEDLER_TOL {
            return (Some(x), it);
        }
        for i in 0..n {
            x[i] = c * x[i] - lx[i];
        }
        normalise(&mut x);
    }
    (None, cap)
}

/// Best prefix cut along a scalar ordering of the points.
pub fn sweep_cut(g: &GeoGraph, obj: CheegerObjective, mode: SweepMode) -> Result<OptimizerResult> {
    let start = Instant::now();
    let n = g.len();
    if n < 2 {
        return Err(Error::arg("need at least two points"));
    }
    let total = check_volume(g, obj)?;
    let mut flags = Vec::new();
    let mut iterations = 0;
    let mut orders = Vec::new();
    if mode == SweepMode::Fiedler {
        if !connected(g) {
            flags.push("disconnected-fallback-axis".to_string());
        } else {
            let (vec, its) = fiedler_vector(g);
            iterations = its;
            match vec {
                Some(v) => orders.push(order_by(&v)),
                None => flags.push("fiedler-cap-fallback-axis".to_string()),
            }
        }
    }
    if orders.is_empty() {
        orders = axis_orders(g);
    }
    let mut best: Option<(f64, &[usize])> = None;
    for order in &orders {
        let (len, f) = best_prefix(g, order, obj, total);
        if len > 0 && best.is_none_or(|(b, _)| f < b) {
            best = Some((f, &order[..len]));
        }
    }
    let (_, prefix) = best.ok_or_else(|| Error::DegenerateGraph("no finite prefix objective".into()))?;
    let partition = Partition::from_indices(n, prefix.iter().copied());
    let method = match mode {
        SweepMode::Axis => "sweep-axis",
        SweepMode::Fiedler => "sweep-fiedler",
    };
    finish(g, partition, Some(obj), method, iterations + orders.len(), start, flags)
}

/// Recolours every mixed box that is grey for `y` (including unclassifiable
/// ones), one at a time in ascending id, to a single colour.
pub fn greyscale_removal(
    grid: &BoxGrid,
    bk: &BoxKernel,
    y: &Partition,
    mode: GreyscaleMode,
    v: VolumeKind,
) -> Partition {
    let colours = classify_boxes(grid, y);
    let (mut blacks, mut whites) = box_counts(grid, y);
    let mut labels = colours.labels.clone();
    let counts: Vec<usize> = (0..grid.len()).map(|i| grid.members(i).len()).collect();
    let mut out = y.clone();

    for i in 0..grid.len() {
        // Sparse single-colour boxes can be flagged unclassifiable; they are
        // already pure.
        if colours.labels[i] != BoxColor::Grey || blacks[i] == 0 || whites[i] == 0 {
            continue;
        }
        let others = || bk.near(i).iter().filter(move |&&(j, _)| j != i);
        let w_prime: f64 = others().map(|&(j, w)| w * whites[j] as f64).sum();
        let make_black = match mode {
            GreyscaleMode::Cut => {
                let l_prime: f64 = others().map(|&(j, w)| w * blacks[j] as f64).sum();
                w_prime < l_prime
            }
            GreyscaleMode::Ratio => {
                let l_second: f64 = others()
                    .filter(|&&(j, _)| labels[j] != BoxColor::White)
                    .map(|&(j, w)| w * blacks[j] as f64)
                    .sum();
                let alpha = w_prime - l_second;
                let beta = match v {
                    VolumeKind::Count => 1.0,
                    VolumeKind::Degree => others().map(|&(j, w)| w * counts[j] as f64).sum(),
                };
                let (x, yv) = ratio_terms(grid, bk, &blacks, &whites, &counts, &labels, v);
                let k_black = whites[i] as f64;
                let k_white = -(blacks[i] as f64);
                let prefer_black = alpha * yv - beta * x < 0.0;
                let ok = |k: f64| yv + beta * k > 0.0;
                match (prefer_black, ok(k_black), ok(k_white)) {
                    (true, true, _) => true,
                    (true, false, true) => false,
                    (false, _, true) => false,
                    (false, true, false) => true,
                    _ => false,
                }
            }
        };
        for &p in grid.members(i) {
            out.set(p, make_black);
        }
        if make_black {
            blacks[i] = counts[i];
            whites[i] = 0;
            labels[i] = BoxColor::Black;
        } else {
            blacks[i] = 0;
            whites[i] = counts[i];
            labels[i] = BoxColor::White;
        }
    }
    out
}

/// `(x, y)`: between-box cut weight and modified volume of the black points
/// lying in black or grey boxes.
pub(crate) fn ratio_terms(
    grid: &BoxGrid,
    bk: &BoxKernel,
    blacks: &[usize],
    whites: &[usize],
    counts: &[usize],
    labels: &[BoxColor],
    v: VolumeKind,
) -> (f64, f64) {
    let mut x = 0.0;
    let mut y = 0.0;
    for i in 0..grid.len() {
        if labels[i] == BoxColor::White || blacks[i] == 0 {
            continue;
        }
        let b = blacks[i] as f64;
        let mut to_white = 0.0;
        let mut to_all = 0.0;
        for &(j, w) in bk.near(i) {
            if j != i {
                to_white += w * whites[j] as f64;
                to_all += w * counts[j] as f64;
            }
        }
        x += b * to_white;
        y += match v {
            VolumeKind::Count => b,
            VolumeKind::Degree => b * to_all,
        };
    }
    (x, y)
}

/// Total-order wrapper for gains in the candidate sets.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    /// Descending gain, then ascending index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(self.1.cmp(&other.1))
    }
}

/// Median split along the axis whose split cuts least.
pub fn median_split(g: &GeoGraph) -> Partition {
    let n = g.len();
    let mut best: Option<(f64, Partition)> = None;
    for order in axis_orders(g) {
        let p = Partition::from_indices(n, order[..n / 2].iter().copied());
        let c = g.cut_weight(&p);
        if best.as_ref().is_none_or(|(b, _)| c < *b) {
            best = Some((c, p));
        }
    }
    best.expect("dimension is positive").1
}

/// Best-improvement black/white swaps among points incident to a cut edge.
/// Swapped points are locked for the rest of a pass.
pub fn local_search_bisection(g: &GeoGraph, y0: &Partition, max_passes: usize) -> Result<OptimizerResult> {
    let start = Instant::now();
    let n = g.len();
    if y0.len() != n || y0.count() != n / 2 {
        return Err(Error::arg(format!(
            "initial bisection must have {} of {n} points, got {}",
            n / 2,
            y0.count()
        )));
    }
    let mut y = y0.clone();
    // gain[i] = external - internal weight of i.
    let mut ext = vec![0.0; n];
    let mut gain = vec![0.0; n];
    for i in 0..n {
        let (nb, w) = g.neighbors(i);
        for (&j, &wij) in nb.iter().zip(w) {
            if y.contains(j) != y.contains(i) {
                ext[i] += wij;
            }
        }
        gain[i] = 2.0 * ext[i] - g.degree(i);
    }
    let mut swaps = 0;
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let mut locked = vec![false; n];
        let mut sides: [BTreeSet<Key>; 2] = [BTreeSet::new(), BTreeSet::new()];
        for i in 0..n {
            if ext[i] > 0.0 {
                sides[y.contains(i) as usize].insert(Key(gain[i], i));
            }
        }
        let mut pass_swaps = 0;
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            let floor = |best: &Option<(f64, usize, usize)>| best.map_or(MIN_GAIN, |b| b.0);
            for &Key(ga, a) in &sides[1] {
                let top_white = sides[0].first().map_or(f64::NEG_INFINITY, |k| k.0);
                if ga + top_white <= floor(&best) {
                    break;
                }
                for &Key(gb, b) in &sides[0] {
                    if ga + gb <= floor(&best) {
                        break;
                    }
                    let total = ga + gb - 2.0 * g.weight(a, b);
                    if total > floor(&best) {
                        best = Some((total, a, b));
                    }
                }
            }
            let Some((_, a, b)) = best else { break };
            for p in [a, b] {
                sides[y.contains(p) as usize].remove(&Key(gain[p], p));
                locked[p] = true;
            }
            for p in [a, b] {
                let was = y.contains(p);
                y.set(p, !was);
                ext[p] = g.degree(p) - ext[p];
                gain[p] = -gain[p];
                let (nb, w) = g.neighbors(p);
                for (&j, &wij) in nb.iter().zip(w) {
                    let key = Key(gain[j], j);
                    sides[y.contains(j) as usize].remove(&key);
                    // j now sees p on the side opposite to where it was.
                    if y.contains(j) == was {
                        ext[j] += wij;
                    } else {
                        ext[j] -= wij;
                    }
                    gain[j] = 2.0 * ext[j] - g.degree(j);
                    if !locked[j] && ext[j] > 1e-12 {
                        sides[y.contains(j) as usize].insert(Key(gain[j], j));
                    }
                }
            }
            pass_swaps += 1;
        }
        swaps += pass_swaps;
        if pass_swaps == 0 {
            break;
        }
    }
    let mut flags = Vec::new();
    if passes == max_passes {
        flags.push("pass-budget-reached".to_string());
    }
    debug_assert_eq!(y.count(), n / 2);
    finish(g, y, None, "local", swaps, start, flags)
}

/// The better, under the true objective, of the axis sweep and its
/// ratio-mode greyscale refinement on `grid`.
pub fn refine_pipeline(g: &GeoGraph, grid: &BoxGrid, obj: CheegerObjective) -> Result<OptimizerResult> {
    let start = Instant::now();
    let sweep = sweep_cut(g, obj, SweepMode::Axis)?;
    let bk = BoxKernel::new(grid, g);
    let refined = greyscale_removal(grid, &bk, &sweep.partition, GreyscaleMode::Ratio, obj.volume);
    let mut flags = sweep.flags.clone();
    let mut partition = sweep.partition;
    if !refined.is_trivial() {
        let f = g.objective(&refined, obj)?;
        if f < sweep.value {
            partition = refined;
            flags.push("greyscale-improved".to_string());
        }
    }
    finish(g, partition, Some(obj), "refine", sweep.iterations + 1, start, flags)
}
