//! Granulation of the domain into cubes of side `gamma * r`, with boundary
//! cubes merged into their nearest interior cube, plus the box-level
//! quantities built on it: colours, box-constant kernel bounds, the modified
//! cut and volume, and binomial tail bounds.

use std::collections::HashMap;

use serde::Serialize;

use crate::domain::{CutSet, DomainDensity, Shape};
use crate::error::{Error, Result};
use crate::geograph::{GeoGraph, Partition, PointCloud};
use crate::kernel::Kernel;
use crate::numeric::{compensated_sum, CompensatedSum};

/// Relative slack on the regime test `n r^d > log n`, so that radii chosen
/// exactly on a threshold are not rejected by rounding.
const REGIME_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaChoice {
    pub gamma: f64,
    /// Whether `n r^d > log n`.
    pub in_regime: bool,
}

/// `clamp(max((8 log n / (n r^d))^{1/(d+2)}, r^{1/(d+5)}), 0.01, 0.5)`.
pub fn choose_gamma(n: usize, r: f64, d: usize) -> GammaChoice {
    let nf = n as f64;
    let log_n = nf.ln();
    let nrd = nf * r.powi(d as i32);
    let a = (8.0 * log_n / nrd).powf(1.0 / (d as f64 + 2.0));
    let b = r.powf(1.0 / (d as f64 + 5.0));
    GammaChoice {
        gamma: a.max(b).clamp(0.01, 0.5),
        in_regime: nrd > log_n * (1.0 - REGIME_RTOL),
    }
}

/// Rate function `H(x) = 1 - x + x log x`, with `H(0) = 1`.
pub fn rate_h(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        1.0 - x + x * x.ln()
    }
}

/// Chernoff bound `exp(-np H(k / np))` on `P[Bi(n,p) >= k]` for `k >= np`
/// and on `P[Bi(n,p) <= k]` for `k <= np`.
pub fn chernoff_tail(n: usize, p: f64, k: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("probability must lie in [0, 1], got {p}")));
    }
    let np = n as f64 * p;
    if np == 0.0 {
        return if k < 0.0 {
            Err(Error::arg("k must be nonnegative"))
        } else if k == 0.0 {
            Ok(1.0)
        } else {
            Ok(0.0)
        };
    }
    let x = k / np;
    if x < 0.0 {
        return Err(Error::arg(format!("k / np must be nonnegative, got {x}")));
    }
    Ok((-np * rate_h(x)).exp().min(1.0))
}

/// Cubes `prod [ (z_k - 1/2) s, (z_k + 1/2) s )` for integer `z`, restricted
/// to the bounding box of the domain, merged onto the interior cubes.
#[derive(Debug, Clone)]
pub struct BoxGrid {
    gamma: f64,
    r: f64,
    side: f64,
    dim: usize,
    z_lo: Vec<i64>,
    z_count: Vec<usize>,
    /// Box id of each lattice cube, `usize::MAX` for cubes missing `D`.
    cube_box: Vec<usize>,
    /// Lattice index of the interior cube of each box.
    lattice: Vec<Vec<i64>>,
    centers: Vec<Vec<f64>>,
    members: Vec<Vec<usize>>,
    point_box: Vec<usize>,
    measure: Vec<f64>,
    bbox_lo: Vec<Vec<f64>>,
    bbox_hi: Vec<Vec<f64>>,
    merge_distance: f64,
    n: usize,
}

const NO_BOX: usize = usize::MAX;

fn cube_interior(shape: &Shape, lo: &[f64], hi: &[f64]) -> bool {
    match shape {
        // The cube is half-open, so its upper faces may touch the boundary.
        Shape::Box { lo: dl, hi: dh } => (0..lo.len()).all(|k| lo[k] > dl[k] && hi[k] <= dh[k]),
        Shape::Ball { .. } => {
            let d = lo.len();
            let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            shape.contains(&center)
                && (0..1usize << d).all(|bits| {
                    let corner: Vec<f64> = (0..d).map(|k| if bits >> k & 1 == 1 { hi[k] } else { lo[k] }).collect();
                    shape.contains(&corner)
                })
        }
    }
}

fn cube_meets(shape: &Shape, lo: &[f64], hi: &[f64]) -> bool {
    match shape {
        Shape::Box { lo: dl, hi: dh } => (0..lo.len()).all(|k| lo[k] < dh[k] && hi[k] > dl[k]),
        Shape::Ball { center, radius } => {
            let d2: f64 = (0..lo.len())
                .map(|k| {
                    let c = center[k].clamp(lo[k], hi[k]);
                    (c - center[k]) * (c - center[k])
                })
                .sum();
            d2 < radius * radius
        }
    }
}

impl BoxGrid {
    pub fn build(dd: &DomainDensity, cloud: &PointCloud, r: f64, gamma: f64) -> Result<Self> {
        let d = dd.dim();
        if cloud.dim() != d {
            return Err(Error::arg("point dimension does not match the domain"));
        }
        if !(r > 0.0 && gamma > 0.0) {
            return Err(Error::arg("r and gamma must be positive"));
        }
        let side = gamma * r;
        let (dlo, dhi) = dd.bounds();
        let z_lo: Vec<i64> = dlo.iter().map(|&l| (l / side + 0.5).floor() as i64).collect();
        let z_hi: Vec<i64> = dhi.iter().map(|&h| (h / side + 0.5).floor() as i64).collect();
        let z_count: Vec<usize> = z_lo.iter().zip(&z_hi).map(|(a, b)| (b - a + 1) as usize).collect();
        let total: usize = z_count.iter().product();

        let cube_bounds = |z: &[i64]| -> (Vec<f64>, Vec<f64>) {
            (
                z.iter().map(|&c| (c as f64 - 0.5) * side).collect(),
                z.iter().map(|&c| (c as f64 + 0.5) * side).collect(),
            )
        };
        let unflatten = |mut idx: usize| -> Vec<i64> {
            (0..d)
                .map(|k| {
                    let c = z_lo[k] + (idx % z_count[k]) as i64;
                    idx /= z_count[k];
                    c
                })
                .collect()
        };

        // Interior cubes get box ids in lattice order.
        let mut cube_box = vec![NO_BOX; total];
        let mut lattice = Vec::new();
        let mut boundary = Vec::new();
        for idx in 0..total {
            let z = unflatten(idx);
            let (lo, hi) = cube_bounds(&z);
            if cube_interior(dd.shape(), &lo, &hi) {
                cube_box[idx] = lattice.len();
                lattice.push(z);
            } else if cube_meets(dd.shape(), &lo, &hi) {
                boundary.push(idx);
            }
        }
        if lattice.is_empty() {
            return Err(Error::GridTooCoarse { side });
        }
        let nb = lattice.len();
        let flatten = |z: &[i64]| -> Option<usize> {
            let mut idx = 0;
            let mut stride = 1;
            for k in 0..d {
                let c = z[k] - z_lo[k];
                if c < 0 || c as usize >= z_count[k] {
                    return None;
                }
                idx += c as usize * stride;
                stride *= z_count[k];
            }
            Some(idx)
        };

        // Nearest interior cube of each boundary cube, by rings of growing
        // Chebyshev radius; ties go to the lexicographically smallest centre.
        let max_ring = z_count.iter().copied().max().unwrap_or(1) as i64;
        let mut merged: Vec<Vec<usize>> = vec![Vec::new(); nb];
        let mut merge2 = 0i64;
        for &idx in &boundary {
            let z = unflatten(idx);
            let mut best: Option<(i64, Vec<i64>, usize)> = None;
            for ring in 1..=max_ring {
                if let Some((b2, _, _)) = &best {
                    if ring * ring > *b2 {
                        break;
                    }
                }
                for_each_ring_offset(d, ring, |off| {
                    let w: Vec<i64> = z.iter().zip(off).map(|(a, o)| a + o).collect();
                    let Some(widx) = flatten(&w) else { return };
                    let id = cube_box[widx];
                    if id == NO_BOX || id >= nb || lattice[id] != w {
                        return;
                    }
                    let dist2: i64 = off.iter().map(|o| o * o).sum();
                    let better = match &best {
                        None => true,
                        Some((b2, bz, _)) => dist2 < *b2 || (dist2 == *b2 && w < *bz),
                    };
                    if better {
                        best = Some((dist2, w, id));
                    }
                });
            }
            let (dist2, _, id) = best.expect("an interior cube exists");
            merge2 = merge2.max(dist2);
            merged[id].push(idx);
            cube_box[idx] = id;
        }

        // Bounding boxes of the merged regions, clipped to the domain box.
        let mut bbox_lo = Vec::with_capacity(nb);
        let mut bbox_hi = Vec::with_capacity(nb);
        for (id, z) in lattice.iter().enumerate() {
            let (mut lo, mut hi) = cube_bounds(z);
            for &idx in &merged[id] {
                let (a, b) = cube_bounds(&unflatten(idx));
                for k in 0..d {
                    lo[k] = lo[k].min(a[k]);
                    hi[k] = hi[k].max(b[k]);
                }
            }
            for k in 0..d {
                lo[k] = lo[k].max(dlo[k]);
                hi[k] = hi[k].min(dhi[k]);
            }
            bbox_lo.push(lo);
            bbox_hi.push(hi);
        }

        // nu(Q_i): exact for a uniform density on a box, otherwise an 8^d
        // midpoint subgrid per cube, renormalised to total mass one.
        let exact = dd.is_uniform() && dd.is_box();
        let cube_mass = |idx: usize| -> f64 {
            let (lo, hi) = cube_bounds(&unflatten(idx));
            if exact {
                let vol: f64 = (0..d).map(|k| (hi[k].min(dhi[k]) - lo[k].max(dlo[k])).max(0.0)).product();
                return vol * dd.rho_max();
            }
            let m = 8usize;
            let h = side / m as f64;
            let mut acc = CompensatedSum::new();
            let mut x = vec![0.0; d];
            for sub in 0..m.pow(d as u32) {
                let mut rem = sub;
                for k in 0..d {
                    x[k] = lo[k] + ((rem % m) as f64 + 0.5) * h;
                    rem /= m;
                }
                acc.add(dd.density(&x));
            }
            acc.value() * h.powi(d as i32)
        };
        let mut measure: Vec<f64> = (0..nb)
            .map(|id| {
                let own = flatten(&lattice[id]).expect("interior cube is on the lattice");
                compensated_sum(std::iter::once(own).chain(merged[id].iter().copied()).map(cube_mass))
            })
            .collect();
        if !exact {
            let mass = compensated_sum(measure.iter().copied());
            measure.iter_mut().for_each(|m| *m /= mass);
        }

        let mut grid = Self {
            gamma,
            r,
            side,
            dim: d,
            z_lo,
            z_count,
            cube_box,
            centers: lattice.iter().map(|z| z.iter().map(|&c| c as f64 * side).collect()).collect(),
            lattice,
            members: vec![Vec::new(); nb],
            point_box: Vec::with_capacity(cloud.len()),
            measure,
            bbox_lo,
            bbox_hi,
            merge_distance: (merge2 as f64).sqrt(),
            n: cloud.len(),
        };
        for i in 0..cloud.len() {
            let id = grid.locate(cloud.point(i)).ok_or_else(|| {
                Error::arg(format!("point {i} lies outside the granulated domain"))
            })?;
            grid.members[id].push(i);
            grid.point_box.push(id);
        }
        Ok(grid)
    }

    /// Box containing `x`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.dim {
            let c = (x[k] / self.side + 0.5).floor() as i64 - self.z_lo[k];
            if c < 0 || c as usize >= self.z_count[k] {
                return None;
            }
            idx += c as usize * stride;
            stride *= self.z_count[k];
        }
        let id = self.cube_box[idx];
        (id != NO_BOX).then_some(id)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// `|S_n|`.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn points(&self) -> usize {
        self.n
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i]
    }

    pub fn lattice_index(&self, i: usize) -> &[i64] {
        &self.lattice[i]
    }

    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    pub fn box_of(&self, point: usize) -> usize {
        self.point_box[point]
    }

    /// `nu(Q_i)`.
    pub fn measure(&self, i: usize) -> f64 {
        self.measure[i]
    }

    /// `nu(A ∩ Q_i)` for every box (`nu(Q_i)` when `a` is `None`), by a
    /// midpoint subgrid on each lattice cube clipped to the domain's
    /// bounding box, scaled by the same factor as [`BoxGrid::measure`].
    pub fn region_measures(&self, dd: &DomainDensity, a: Option<&CutSet>) -> Vec<f64> {
        let d = self.dim;
        let m: usize = match d {
            2 => 16,
            3 => 6,
            _ => 3,
        };
        let (dlo, dhi) = dd.bounds();
        let total: usize = self.z_count.iter().product();
        let mut sums = vec![CompensatedSum::new(); self.len()];
        let mut all = CompensatedSum::new();
        let mut x = vec![0.0; d];
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for idx in 0..total {
            let id = self.cube_box[idx];
            if id == NO_BOX {
                continue;
            }
            let mut rem = idx;
            for k in 0..d {
                let z = self.z_lo[k] + (rem % self.z_count[k]) as i64;
                rem /= self.z_count[k];
                lo[k] = (z as f64 - 0.5) * self.side;
                hi[k] = (z as f64 + 0.5) * self.side;
            }
            let h = self.side / m as f64;
            for sub in 0..m.pow(d as u32) {
                let mut rem = sub;
                let mut vol = 1.0;
                for k in 0..d {
                    let a0 = (lo[k] + (rem % m) as f64 * h).max(dlo[k]);
                    let b0 = (lo[k] + ((rem % m) + 1) as f64 * h).min(dhi[k]);
                    rem /= m;
                    vol *= (b0 - a0).max(0.0);
                    x[k] = 0.5 * (a0 + b0);
                }
                if vol == 0.0 || !dd.contains(&x) {
                    continue;
                }
                let w = vol * dd.density_unchecked(&x);
                all.add(w);
                if a.is_none_or(|set| set.contains(dd, &x)) {
                    sums[id].add(w);
                }
            }
        }
        // Match the normalisation of `measure`.
        let scale = compensated_sum(self.measure.iter().copied()) / all.value();
        sums.iter().map(|s| s.value() * scale).collect()
    }

    pub fn bounding_box(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.bbox_lo[i], &self.bbox_hi[i])
    }

    /// Largest distance, in cube sides, from a boundary cube to the interior
    /// cube it was merged into.
    pub fn merge_distance(&self) -> f64 {
        self.merge_distance
    }

    /// `C` with `diam(Q_i) <= C * gamma * r` for every box.
    pub fn diameter_constant(&self) -> f64 {
        3.0 * self.merge_distance + (self.dim as f64).sqrt()
    }

    /// Smallest and largest distance between the bounding boxes of `i`, `j`.
    pub fn box_distances(&self, i: usize, j: usize) -> (f64, f64) {
        let (alo, ahi) = self.bounding_box(i);
        let (blo, bhi) = self.bounding_box(j);
        let mut min2 = 0.0;
        let mut max2 = 0.0;
        for k in 0..self.dim {
            let gap = (blo[k] - ahi[k]).max(alo[k] - bhi[k]).max(0.0);
            let span = (bhi[k] - alo[k]).abs().max((ahi[k] - blo[k]).abs());
            min2 += gap * gap;
            max2 += span * span;
        }
        (min2.sqrt(), max2.sqrt())
    }

    /// Box ids whose bounding box may lie within `reach` of box `i`,
    /// ascending, including `i`.
    pub fn boxes_within(&self, i: usize, reach: f64) -> Vec<usize> {
        let d = self.dim;
        let k = (reach / self.side).ceil() as i64 + 2 * self.merge_distance.ceil() as i64 + 1;
        let mut out = Vec::new();
        let z = &self.lattice[i];
        let mut off = vec![-k; d];
        'outer: loop {
            let w: Vec<i64> = z.iter().zip(&off).map(|(a, o)| a + o).collect();
            if let Some(j) = self.interior_at(&w) {
                if self.box_distances(i, j).0 <= reach {
                    out.push(j);
                }
            }
            for o in off.iter_mut() {
                if *o < k {
                    *o += 1;
                    continue 'outer;
                }
                *o = -k;
            }
            break;
        }
        out.sort_unstable();
        out
    }

    fn interior_at(&self, z: &[i64]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.dim {
            let c = z[k] - self.z_lo[k];
            if c < 0 || c as usize >= self.z_count[k] {
                return None;
            }
            idx += c as usize * stride;
            stride *= self.z_count[k];
        }
        let id = self.cube_box[idx];
        (id != NO_BOX && self.lattice[id] == z).then_some(id)
    }

    /// Number of boxes holding each possible point count, as `(count, boxes)`.
    pub fn occupancy_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist: HashMap<usize, usize> = HashMap::new();
        for m in &self.members {
            *hist.entry(m.len()).or_default() += 1;
        }
        let mut out: Vec<(usize, usize)> = hist.into_iter().collect();
        out.sort_unstable();
        out
    }

    /// Boxes violating `|X ∩ Q_i| <= (1 + gamma) n nu(Q_i)` and
    /// `|X ∩ Q_i| >= (1 - gamma) n nu(Q_i)`, with the union-bound prediction
    /// `sum_i` of the two Chernoff tails.
    pub fn concentration_check(&self) -> ConcentrationReport {
        let n = self.n as f64;
        let mut upper = 0;
        let mut lower = 0;
        let mut predicted = CompensatedSum::new();
        for i in 0..self.len() {
            let c = self.members[i].len() as f64;
            let mean = n * self.measure[i];
            if c > (1.0 + self.gamma) * mean {
                upper += 1;
            }
            if c < (1.0 - self.gamma) * mean {
                lower += 1;
            }
            let p = self.measure[i].clamp(0.0, 1.0);
            predicted.add(chernoff_tail(self.n, p, (1.0 + self.gamma) * mean).unwrap_or(1.0));
            predicted.add(chernoff_tail(self.n, p, (1.0 - self.gamma) * mean).unwrap_or(1.0));
        }
        ConcentrationReport {
            boxes: self.len(),
            upper_violations: upper,
            lower_violations: lower,
            predicted_violations: predicted.value(),
        }
    }
}

/// Calls `f` with every integer offset of Chebyshev norm exactly `ring`.
fn for_each_ring_offset(d: usize, ring: i64, mut f: impl FnMut(&[i64])) {
    let mut off = vec![-ring; d];
    'outer: loop {
        if off.iter().any(|o| o.abs() == ring) {
            f(&off);
        }
        for o in off.iter_mut() {
            if *o < ring {
                *o += 1;
                continue 'outer;
            }
            *o = -ring;
        }
        break;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub boxes: usize,
    pub upper_violations: usize,
    pub lower_violations: usize,
    pub predicted_violations: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxColor {
    Black,
    White,
    Grey,
}

/// Colour of every box with respect to a partition. Boxes meeting neither
/// the black nor the white threshold are grey and flagged unclassifiable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxColors {
    pub labels: Vec<BoxColor>,
    pub unclassifiable: Vec<bool>,
    pub blacks: Vec<usize>,
    pub whites: Vec<usize>,
}

impl BoxColors {
    pub fn grey_count(&self) -> usize {
        self.labels.iter().filter(|&&c| c == BoxColor::Grey).count()
    }

    pub fn unclassifiable_count(&self) -> usize {
        self.unclassifiable.iter().filter(|&&u| u).count()
    }

    pub fn count(&self, color: BoxColor) -> usize {
        self.labels.iter().filter(|&&c| c == color).count()
    }
}

/// Per-box counts of members and non-members of `y`.
pub fn box_counts(grid: &BoxGrid, y: &Partition) -> (Vec<usize>, Vec<usize>) {
    let nb = grid.len();
    let mut blacks = vec![0; nb];
    let mut whites = vec![0; nb];
    for (i, m) in grid.members.iter().enumerate() {
        let b = m.iter().filter(|&&p| y.contains(p)).count();
        blacks[i] = b;
        whites[i] = m.len() - b;
    }
    (blacks, whites)
}

pub fn classify_boxes(grid: &BoxGrid, y: &Partition) -> BoxColors {
    assert_eq!(y.len(), grid.n, "partition size does not match the grid");
    let (blacks, whites) = box_counts(grid, y);
    let n = grid.n as f64;
    let mut labels = Vec::with_capacity(grid.len());
    let mut unclassifiable = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let mean = n * grid.measure[i];
        let (b, w) = (blacks[i] as f64, whites[i] as f64);
        let (label, odd) = if b.min(w) > grid.gamma * mean {
            (BoxColor::Grey, false)
        } else if b >= (1.0 - 2.0 * grid.gamma) * mean {
            (BoxColor::Black, false)
        } else if w >= (1.0 - 2.0 * grid.gamma) * mean {
            (BoxColor::White, false)
        } else {
            (BoxColor::Grey, true)
        };
        labels.push(label);
        unclassifiable.push(odd);
    }
    BoxColors {
        labels,
        unclassifiable,
        blacks,
        whites,
    }
}

/// `(phi_lo, phi_hi) = (phi(maxdist / r), phi(mindist / r))` over the
/// bounding boxes of `Q_i` and `Q_j`, zero beyond `r * R_cut`.
pub fn kernel_box_bounds(grid: &BoxGrid, kernel: &Kernel, r: f64, r_cut: f64, i: usize, j: usize) -> (f64, f64) {
    let (min, max) = grid.box_distances(i, j);
    let reach = r * r_cut;
    let eval = |dist: f64| if dist > reach { 0.0 } else { kernel.weight(dist / r) };
    (eval(max), eval(min))
}

/// Box-pair lower kernel bounds for every box and each box it can interact
/// with, shared by the modified functionals and greyscale removal.
#[derive(Debug, Clone)]
pub struct BoxKernel {
    /// `near[i]`: ascending `(j, phi_lo(i, j))` with `phi_lo > 0`.
    near: Vec<Vec<(usize, f64)>>,
}

impl BoxKernel {
    pub fn new(grid: &BoxGrid, g: &GeoGraph) -> Self {
        let reach = g.r() * g.r_cut();
        let near = (0..grid.len())
            .map(|i| {
                grid.boxes_within(i, reach)
                    .into_iter()
                    .map(|j| (j, kernel_box_bounds(grid, g.kernel(), g.r(), g.r_cut(), i, j).0))
                    .filter(|&(_, w)| w > 0.0)
                    .collect()
            })
            .collect();
        Self { near }
    }

    #[inline]
    pub fn near(&self, i: usize) -> &[(usize, f64)] {
        &self.near[i]
    }

    pub fn phi_lo(&self, i: usize, j: usize) -> f64 {
        let row = &self.near[i];
        row.binary_search_by_key(&j, |e| e.0).map_or(0.0, |k| row[k].1)
    }
}

/// `Cut'(Y) = sum_{i,j} phi_lo(i, j) |Y ∩ Q_i| |Y^c ∩ Q_j|`.
pub fn modified_cut(grid: &BoxGrid, bk: &BoxKernel, y: &Partition) -> f64 {
    let (blacks, whites) = box_counts(grid, y);
    modified_cut_counts(bk, &blacks, &whites)
}

pub(crate) fn modified_cut_counts(bk: &BoxKernel, blacks: &[usize], whites: &[usize]) -> f64 {
    let mut acc = CompensatedSum::new();
    for i in 0..blacks.len() {
        if blacks[i] == 0 {
            continue;
        }
        let row = compensated_sum(bk.near(i).iter().map(|&(j, w)| w * whites[j] as f64));
        acc.add(blacks[i] as f64 * row);
    }
    acc.value()
}

/// `|Y|` for `v = 1`; for `v = 2` the degree sum of `Y` with the kernel
/// replaced by `phi_lo` between distinct boxes and by zero inside a box.
pub fn modified_volume(grid: &BoxGrid, bk: &BoxKernel, y: &Partition, v: crate::objective::VolumeKind) -> f64 {
    use crate::objective::VolumeKind;
    match v {
        VolumeKind::Count => y.count() as f64,
        VolumeKind::Degree => {
            let (blacks, _) = box_counts(grid, y);
            let mut acc = CompensatedSum::new();
            for i in 0..grid.len() {
                if blacks[i] == 0 {
                    continue;
                }
                let row = compensated_sum(
                    bk.near(i)
                        .iter()
                        .filter(|&&(j, _)| j != i)
                        .map(|&(j, w)| w * grid.members[j].len() as f64),
                );
                acc.add(blacks[i] as f64 * row);
            }
            acc.value()
        }
    }
}

/// Part of `Cut'(Y)` from pairs of points in boxes of opposite colours.
pub fn boundary_flux(grid: &BoxGrid, bk: &BoxKernel, y: &Partition, colors: &BoxColors) -> Result<f64> {
    if colors.grey_count() > 0 {
        return Err(Error::Precondition(format!(
            "boundary flux needs a grey-free colouring, found {} grey boxes",
            colors.grey_count()
        )));
    }
    let (blacks, whites) = box_counts(grid, y);
    let mut acc = CompensatedSum::new();
    for i in 0..grid.len() {
        if colors.labels[i] != BoxColor::Black {
            continue;
        }
        for &(j, w) in bk.near(i) {
            if colors.labels[j] == BoxColor::White {
                acc.add(w * (blacks[i] * whites[j] + whites[i] * blacks[j]) as f64);
            }
        }
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geograph::DEFAULT_TAIL_EPS;
    use crate::objective::VolumeKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_grid(n: usize, r: f64, gamma: f64, seed: u64) -> (GeoGraph, BoxGrid) {
        let dd = DomainDensity::unit_square();
        let cloud = dd.sample_points(n, seed).unwrap();
        let grid = BoxGrid::build(&dd, &cloud, r, gamma).unwrap();
        let g = GeoGraph::build(cloud, r, Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS).unwrap();
        (g, grid)
    }

    #[test]
    fn gamma_examples() {
        let c = choose_gamma(32768, 0.0356, 2);
        assert_eq!(c.gamma, 0.5);
        assert!(c.in_regime);
        assert_eq!(choose_gamma(100, 0.9, 2).gamma, 0.5);
        // Below the clamp the choice decreases along r_n = 2 sqrt(log n / n).
        let r = |n: f64| 2.0 * (n.ln() / n).sqrt();
        let g1 = choose_gamma(1 << 20, r((1u64 << 20) as f64), 2);
        let g2 = choose_gamma(1 << 26, r((1u64 << 26) as f64), 2);
        assert!(g2.gamma <= g1.gamma);
        assert!(!choose_gamma(1000, 0.01, 2).in_regime);
    }

    #[test]
    fn chernoff_examples() {
        assert_eq!(chernoff_tail(100, 0.1, 10.0).unwrap(), 1.0);
        let v = chernoff_tail(100, 0.1, 20.0).unwrap();
        assert!((v - (-10.0 * (2.0 * 2f64.ln() - 1.0)).exp()).abs() < 1e-15);
        assert!((v - 0.02100).abs() < 1e-5);
        assert!((chernoff_tail(50, 0.2, 0.0).unwrap() - (-10f64).exp()).abs() < 1e-18);
        assert!(chernoff_tail(10, 0.5, -1.0).is_err());
        assert!(chernoff_tail(10, 1.5, 1.0).is_err());
    }

    #[test]
    fn quarter_grid_on_square() {
        let dd = DomainDensity::unit_square();
        let cloud = PointCloud::from_points(&[vec![0.1, 0.1], vec![0.5, 0.5]]).unwrap();
        let grid = BoxGrid::build(&dd, &cloud, 1.0, 0.25).unwrap();
        // Centres at 0.25, 0.5, 0.75 on each axis.
        assert_eq!(grid.len(), 9);
        let total: f64 = (0..grid.len()).map(|i| grid.measure(i)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let b = grid.locate(&[0.1, 0.1]).unwrap();
        assert_eq!(grid.center(b), &[0.25, 0.25]);
        assert_eq!(grid.members(b), &[0]);
    }

    #[test]
    fn boxes_partition_the_points() {
        let (_, grid) = square_grid(2000, 0.1, 0.3, 3);
        let mut seen = vec![0; 2000];
        for i in 0..grid.len() {
            for &p in grid.members(i) {
                seen[p] += 1;
                assert_eq!(grid.box_of(p), i);
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        let total: f64 = (0..grid.len()).map(|i| grid.measure(i)).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ball_grid_measures_sum_to_one() {
        let dd = DomainDensity::unit_ball(2);
        let cloud = dd.sample_points(500, 9).unwrap();
        let grid = BoxGrid::build(&dd, &cloud, 0.4, 0.5).unwrap();
        let total: f64 = (0..grid.len()).map(|i| grid.measure(i)).sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert_eq!((0..grid.len()).map(|i| grid.members(i).len()).sum::<usize>(), 500);
    }

    #[test]
    fn diameter_bound_holds() {
        for dd in [DomainDensity::unit_square(), DomainDensity::unit_ball(2)] {
            let cloud = dd.sample_points(3000, 4).unwrap();
            let grid = BoxGrid::build(&dd, &cloud, 0.13, 0.37).unwrap();
            let bound = grid.diameter_constant() * grid.side();
            for i in 0..grid.len() {
                let m = grid.members(i);
                for a in m {
                    for b in m {
                        assert!(cloud.dist2(*a, *b).sqrt() <= bound + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let dd = DomainDensity::unit_square();
        let cloud = PointCloud::from_points(&[vec![0.5, 0.5]]).unwrap();
        assert!(matches!(
            BoxGrid::build(&dd, &cloud, 1.0, 0.9),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn colour_thresholds() {
        let (_, grid) = square_grid(4000, 0.2, 0.3, 8);
        let all = classify_boxes(&grid, &Partition::full(4000));
        let none = classify_boxes(&grid, &Partition::empty(4000));
        for i in 0..grid.len() {
            assert_ne!(all.labels[i], BoxColor::White);
            assert_ne!(none.labels[i], BoxColor::Black);
        }
        // A 50/50 split of a well-filled box is grey.
        let i = (0..grid.len()).max_by_key(|&i| grid.members(i).len()).unwrap();
        let m = grid.members(i);
        let y = Partition::from_indices(4000, m[..m.len() / 2].iter().copied());
        let colours = classify_boxes(&grid, &y);
        assert_eq!(colours.labels[i], BoxColor::Grey);
        assert!(!colours.unclassifiable[i]);
    }

    #[test]
    fn empty_box_is_unclassifiable() {
        let dd = DomainDensity::unit_square();
        let cloud = PointCloud::from_points(&[vec![0.5, 0.5]]).unwrap();
        let grid = BoxGrid::build(&dd, &cloud, 1.0, 0.25).unwrap();
        let colours = classify_boxes(&grid, &Partition::full(1));
        let empty = grid.locate(&[0.25, 0.25]).unwrap();
        assert_eq!(colours.labels[empty], BoxColor::Grey);
        assert!(colours.unclassifiable[empty]);
    }

    #[test]
    fn kernel_bounds_sandwich() {
        let (g, grid) = square_grid(3000, 0.15, 0.4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let i = rng.random_range(0..grid.len());
            let j = rng.random_range(0..grid.len());
            let (lo, hi) = kernel_box_bounds(&grid, g.kernel(), g.r(), g.r_cut(), i, j);
            if i == j {
                assert_eq!(hi, 1.0);
            }
            for &a in grid.members(i) {
                for &b in grid.members(j) {
                    let w = g.kernel().weight(g.cloud().dist2(a, b).sqrt() / g.r());
                    assert!(lo <= w && w <= hi);
                }
            }
        }
    }

    #[test]
    fn separated_boxes_have_zero_lower_bound() {
        let dd = DomainDensity::uniform(Shape::Box {
            lo: vec![0.0; 2],
            hi: vec![3.0; 2],
        })
        .unwrap();
        let cloud = PointCloud::from_points(&[vec![1.0, 1.0], vec![2.0, 1.0]]).unwrap();
        let grid = BoxGrid::build(&dd, &cloud, 1.0, 0.1).unwrap();
        let (i, j) = (grid.box_of(0), grid.box_of(1));
        let kernel = Kernel::uniform(2).unwrap();
        let (lo, hi) = kernel_box_bounds(&grid, &kernel, 1.0, 1.0, i, j);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 1.0);
    }

    fn brute_modified(grid: &BoxGrid, bk: &BoxKernel, y: &Partition) -> (f64, f64) {
        let n = y.len();
        let mut cut = 0.0;
        let mut vol = 0.0;
        for a in 0..n {
            for b in 0..n {
                let (i, j) = (grid.box_of(a), grid.box_of(b));
                let w = bk.phi_lo(i, j);
                if y.contains(a) && !y.contains(b) {
                    cut += w;
                }
                if y.contains(a) && i != j {
                    vol += w;
                }
            }
        }
        (cut, vol)
    }

    #[test]
    fn modified_functionals_match_pair_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for seed in 0..5 {
            let (g, grid) = square_grid(200, 0.3, 0.4, seed);
            let bk = BoxKernel::new(&grid, &g);
            let y = Partition::new((0..200).map(|_| rng.random::<bool>()).collect());
            let (cut, vol) = brute_modified(&grid, &bk, &y);
            let mc = modified_cut(&grid, &bk, &y);
            let mv = modified_volume(&grid, &bk, &y, VolumeKind::Degree);
            assert!((mc - cut).abs() <= 1e-9 * cut.max(1.0));
            assert!((mv - vol).abs() <= 1e-9 * vol.max(1.0));
            assert!(mc <= g.cut_weight(&y) + 1e-9);
            assert_eq!(modified_volume(&grid, &bk, &y, VolumeKind::Count), y.count() as f64);
        }
    }

    #[test]
    fn modified_functionals_trivial_cases() {
        let (g, grid) = square_grid(300, 0.3, 0.4, 2);
        let bk = BoxKernel::new(&grid, &g);
        assert_eq!(modified_cut(&grid, &bk, &Partition::empty(300)), 0.0);
        // All points in a single box: no between-box volume.
        let dd = DomainDensity::unit_square();
        let cloud = PointCloud::from_points(&[vec![0.5, 0.5], vec![0.51, 0.5], vec![0.5, 0.52]]).unwrap();
        let grid = BoxGrid::build(&dd, &cloud, 0.5, 0.2).unwrap();
        let g = GeoGraph::build(cloud, 0.5, Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS).unwrap();
        let bk = BoxKernel::new(&grid, &g);
        assert_eq!(modified_volume(&grid, &bk, &Partition::full(3), VolumeKind::Degree), 0.0);
    }

    #[test]
    fn flux_of_pure_colourings() {
        let (g, grid) = square_grid(3000, 0.15, 0.5, 4);
        let bk = BoxKernel::new(&grid, &g);
        let all = Partition::full(3000);
        let colours = classify_boxes(&grid, &all);
        if colours.grey_count() == 0 {
            assert_eq!(boundary_flux(&grid, &bk, &all, &colours).unwrap(), 0.0);
        }
        // Box-pure left/right split.
        let y = Partition::new((0..3000).map(|p| grid.center(grid.box_of(p))[0] < 0.5).collect());
        let mut colours = classify_boxes(&grid, &y);
        for i in 0..grid.len() {
            if colours.labels[i] == BoxColor::Grey {
                colours.labels[i] = if colours.blacks[i] > 0 { BoxColor::Black } else { BoxColor::White };
            }
        }
        let z = boundary_flux(&grid, &bk, &y, &colours).unwrap();
        let cut = modified_cut(&grid, &bk, &y);
        // Pure boxes: every cross pair sits in boxes of opposite colours.
        assert!((z - cut).abs() <= 1e-9 * cut);
        let (blacks, whites) = box_counts(&grid, &y);
        let mut oracle = 0.0;
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                if colours.labels[i] == BoxColor::Black && colours.labels[j] == BoxColor::White {
                    oracle += bk.phi_lo(i, j) * (blacks[i] * whites[j] + whites[i] * blacks[j]) as f64;
                }
            }
        }
        assert!((z - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }

    #[test]
    fn flux_rejects_grey() {
        let (g, grid) = square_grid(3000, 0.15, 0.3, 4);
        let bk = BoxKernel::new(&grid, &g);
        let i = (0..grid.len()).max_by_key(|&i| grid.members(i).len()).unwrap();
        let m = grid.members(i);
        let y = Partition::from_indices(3000, m[..m.len() / 2].iter().copied());
        let colours = classify_boxes(&grid, &y);
        assert!(matches!(
            boundary_flux(&grid, &bk, &y, &colours),
            Err(Error::Precondition(_))
        ));
    }
}
