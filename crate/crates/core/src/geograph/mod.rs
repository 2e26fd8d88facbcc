//! Kernel-weighted random geometric graphs and the discrete cut functionals.

mod cloud;
mod partition;

use rayon::prelude::*;
use serde::Serialize;

pub use cloud::PointCloud;
pub use partition::Partition;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::objective::{BalanceKind, CheegerObjective, VolumeKind};

/// Default truncation level for kernels with unbounded support.
pub const DEFAULT_TAIL_EPS: f64 = 1e-12;

/// Vertices per block in parallel reductions. Fixed so that the summation
/// order, and therefore every functional, is independent of thread count.
const REDUCTION_BLOCK: usize = 4096;

/// Uniform grid of cubic cells over the bounding box of a point cloud.
/// Points are kept sorted by `(cell key, index)`.
#[derive(Debug, Clone)]
pub struct CellIndex {
    side: f64,
    lo: Vec<f64>,
    counts: Vec<u64>,
    entries: Vec<(u128, usize)>,
}

impl CellIndex {
    /// `None` when the cell keys would not fit into 128 bits.
    pub fn new(cloud: &PointCloud, side: f64) -> Option<Self> {
        let (lo, hi) = cloud.bounds();
        let mut counts = Vec::with_capacity(lo.len());
        let mut span: u128 = 1;
        for k in 0..lo.len() {
            let c = ((hi[k] - lo[k]) / side).floor() as u64 + 1;
            span = span.checked_mul(c as u128)?;
            counts.push(c);
        }
        let mut index = Self {
            side,
            lo,
            counts,
            entries: Vec::new(),
        };
        let mut entries: Vec<(u128, usize)> = (0..cloud.len()).map(|i| (index.key(cloud.point(i)), i)).collect();
        entries.par_sort_unstable();
        index.entries = entries;
        Some(index)
    }

    fn cell_of(&self, x: &[f64]) -> Vec<u64> {
        x.iter()
            .enumerate()
            .map(|(k, &c)| (((c - self.lo[k]) / self.side).floor().max(0.0) as u64).min(self.counts[k] - 1))
            .collect()
    }

    fn linear(&self, cell: &[u64]) -> u128 {
        let mut key = 0u128;
        for k in (0..cell.len()).rev() {
            key = key * self.counts[k] as u128 + cell[k] as u128;
        }
        key
    }

    fn key(&self, x: &[f64]) -> u128 {
        self.linear(&self.cell_of(x))
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Indices of the points in the cell with key `key`.
    fn bucket(&self, key: u128) -> &[(u128, usize)] {
        let start = self.entries.partition_point(|e| e.0 < key);
        let end = start + self.entries[start..].partition_point(|e| e.0 == key);
        &self.entries[start..end]
    }

    /// Calls `f` for every point in the `3^d` cells around the cell of `x`.
    pub fn for_each_near(&self, x: &[f64], mut f: impl FnMut(usize)) {
        let d = self.lo.len();
        let base = self.cell_of(x);
        let mut cell = vec![0u64; d];
        let mut offset = vec![0i8; d];
        offset.iter_mut().for_each(|o| *o = -1);
        'outer: loop {
            let mut valid = true;
            for k in 0..d {
                let c = base[k] as i64 + offset[k] as i64;
                if c < 0 || c >= self.counts[k] as i64 {
                    valid = false;
                    break;
                }
                cell[k] = c as u64;
            }
            if valid {
                for &(_, j) in self.bucket(self.linear(&cell)) {
                    f(j);
                }
            }
            for k in 0..d {
                if offset[k] < 1 {
                    offset[k] += 1;
                    continue 'outer;
                }
                offset[k] = -1;
            }
            break;
        }
    }
}

/// Summary printed by `graph stats`.
#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub n: usize,
    pub dim: usize,
    pub r: f64,
    pub r_cut: f64,
    pub edges: usize,
    pub vol2: f64,
    pub rescaled_vol2: f64,
    /// Bound `n^2 * tail_eps` on the truncation error of any functional.
    pub truncation_bound: f64,
    pub all_pairs: bool,
}

/// The graph `G_phi(X_n, r)` in compressed sparse row form. Neighbour lists
/// are sorted by index and carry `phi(|x - y| / r)`.
#[derive(Debug, Clone)]
pub struct GeoGraph {
    cloud: PointCloud,
    r: f64,
    kernel: Kernel,
    tail_eps: f64,
    r_cut: f64,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    degree: Vec<f64>,
    all_pairs: bool,
}

impl GeoGraph {
    pub fn build(cloud: PointCloud, r: f64, kernel: Kernel, tail_eps: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::arg(format!("radius must be positive, got {r}")));
        }
        if !(tail_eps > 0.0) {
            return Err(Error::arg("tail_eps must be positive"));
        }
        if kernel.dim() != cloud.dim() {
            return Err(Error::arg(format!(
                "kernel dimension {} does not match points of dimension {}",
                kernel.dim(),
                cloud.dim()
            )));
        }
        let r_cut = kernel.effective_support(tail_eps);
        let reach = r * r_cut;
        let (lo, hi) = cloud.bounds();
        let diam = lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt();
        let n = cloud.len();

        let index = if reach > diam { None } else { CellIndex::new(&cloud, reach) };
        if index.is_none() {
            log::warn!("interaction range {reach} exceeds the point cloud diameter {diam}; using all pairs");
        }
        let reach2 = reach * reach;
        let weight = |i: usize, j: usize| -> Option<f64> {
            let d2 = cloud.dist2(i, j);
            if i == j || d2 > reach2 {
                return None;
            }
            let w = kernel.weight(d2.sqrt() / r);
            (w > 0.0).then_some(w)
        };
        let lists: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                match &index {
                    Some(index) => index.for_each_near(cloud.point(i), |j| {
                        if let Some(w) = weight(i, j) {
                            out.push((j, w));
                        }
                    }),
                    None => {
                        for j in 0..n {
                            if let Some(w) = weight(i, j) {
                                out.push((j, w));
                            }
                        }
                    }
                }
                out.sort_unstable_by_key(|e| e.0);
                out
            })
            .collect();

        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let total: usize = lists.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut degree = Vec::with_capacity(n);
        for list in &lists {
            degree.push(compensated_sum(list.iter().map(|e| e.1)));
            for &(j, w) in list {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Ok(Self {
            cloud,
            r,
            kernel,
            tail_eps,
            r_cut,
            offsets,
            neighbors,
            weights,
            degree,
            all_pairs: index.is_none(),
        })
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim()
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn tail_eps(&self) -> f64 {
        self.tail_eps
    }

    pub fn r_cut(&self) -> f64 {
        self.r_cut
    }

    pub fn is_all_pairs(&self) -> bool {
        self.all_pairs
    }

    /// Neighbour indices (ascending) and weights of vertex `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.offsets[i]..self.offsets[i + 1];
        (&self.neighbors[range.clone()], &self.weights[range])
    }

    /// Weighted degree `sum_{j != i} phi(|x_i - x_j| / r)`.
    #[inline]
    pub fn degree(&self, i: usize) -> f64 {
        self.degree[i]
    }

    /// Edge weight between `i` and `j` (zero if not adjacent).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (nb, w) = self.neighbors(i);
        nb.binary_search(&j).map_or(0.0, |k| w[k])
    }

    /// Number of unordered pairs with positive stored weight.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn total_edge_weight(&self) -> f64 {
        0.5 * self.volume(&Partition::full(self.len()), VolumeKind::Degree)
    }

    /// Deterministic parallel sum of `f(i)` over all vertices.
    fn vertex_sum(&self, f: impl Fn(usize) -> f64 + Sync) -> f64 {
        let n = self.len();
        let blocks: Vec<f64> = (0..n.div_ceil(REDUCTION_BLOCK))
            .into_par_iter()
            .map(|b| {
                let mut acc = CompensatedSum::new();
                for i in b * REDUCTION_BLOCK..((b + 1) * REDUCTION_BLOCK).min(n) {
                    acc.add(f(i));
                }
                acc.value()
            })
            .collect();
        compensated_sum(blocks)
    }

    /// `Cut(Y) = sum_{y in Y} sum_{x not in Y} phi(|x - y| / r)`.
    pub fn cut_weight(&self, y: &Partition) -> f64 {
        self.check_len(y);
        self.vertex_sum(|i| {
            if !y.contains(i) {
                return 0.0;
            }
            let (nb, w) = self.neighbors(i);
            compensated_sum(nb.iter().zip(w).filter(|(&j, _)| !y.contains(j)).map(|(_, &w)| w))
        })
    }

    /// `Vol_{n,1}(Y) = |Y|`, `Vol_{n,2}(Y)` = weighted degree sum over `Y`.
    pub fn volume(&self, y: &Partition, v: VolumeKind) -> f64 {
        self.check_len(y);
        match v {
            VolumeKind::Count => y.count() as f64,
            VolumeKind::Degree => self.vertex_sum(|i| if y.contains(i) { self.degree[i] } else { 0.0 }),
        }
    }

    pub fn total_volume(&self, v: VolumeKind) -> f64 {
        match v {
            VolumeKind::Count => self.len() as f64,
            VolumeKind::Degree => self.vertex_sum(|i| self.degree[i]),
        }
    }

    /// `Bal_{n,v,b}(Y)`.
    pub fn balance(&self, y: &Partition, v: VolumeKind, b: BalanceKind) -> Result<f64> {
        let total = self.total_volume(v);
        if !(total > 0.0) {
            return Err(Error::DegenerateGraph("total volume is zero".into()));
        }
        let vol = self.volume(y, v);
        Ok(b.combine(vol, (total - vol).max(0.0), total))
    }

    /// `Cut(Y) / Bal_{n,v,b}(Y)` for a nontrivial `Y`.
    pub fn objective(&self, y: &Partition, obj: CheegerObjective) -> Result<f64> {
        self.check_len(y);
        if y.is_trivial() {
            return Err(Error::arg("the objective needs a nonempty proper subset"));
        }
        let cut = self.cut_weight(y);
        if cut == 0.0 {
            return Ok(0.0);
        }
        Ok(CheegerObjective::ratio(cut, self.balance(y, obj.volume, obj.balance)?))
    }

    pub fn stats(&self) -> GraphStats {
        let n = self.len();
        let vol2 = self.total_volume(VolumeKind::Degree);
        GraphStats {
            n,
            dim: self.dim(),
            r: self.r,
            r_cut: self.r_cut,
            edges: self.edge_count(),
            vol2,
            rescaled_vol2: vol2 / ((n * n) as f64 * self.r.powi(self.dim() as i32)),
            truncation_bound: (n * n) as f64 * self.tail_eps,
            all_pairs: self.all_pairs,
        }
    }

    fn check_len(&self, y: &Partition) {
        assert_eq!(y.len(), self.len(), "partition size does not match the graph");
    }
}

/// `value / (n^2 r^{d+1})`.
pub fn rescaled_estimator(value: f64, n: usize, r: f64, d: usize) -> f64 {
    value / ((n as f64) * (n as f64) * r.powi(d as i32 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainDensity;

    fn line3() -> GeoGraph {
        let cloud = PointCloud::from_points(&[vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.0]]).unwrap();
        GeoGraph::build(cloud, 1.0, Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS).unwrap()
    }

    #[test]
    fn two_point_edge() {
        let cloud = PointCloud::from_points(&[vec![0.0, 0.0], vec![0.5, 0.0]]).unwrap();
        let g = GeoGraph::build(cloud, 1.0, Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.weight(0, 1), 1.0);
    }

    #[test]
    fn closed_unit_interval() {
        let cloud = PointCloud::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let g = GeoGraph::build(cloud, 1.0, Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 2), 1.0);
        assert_eq!(g.weight(0, 2), 0.0);
    }

    #[test]
    fn collinear_functionals() {
        let g = line3();
        assert_eq!(g.cut_weight(&Partition::empty(3)), 0.0);
        assert_eq!(g.cut_weight(&Partition::from_indices(3, [0])), 2.0);
        assert_eq!(g.cut_weight(&Partition::from_indices(3, [0, 1])), 2.0);
        assert_eq!(g.volume(&Partition::full(3), VolumeKind::Degree), 6.0);
        let y = Partition::from_indices(3, [0]);
        let bal = g.balance(&y, VolumeKind::Degree, BalanceKind::Min).unwrap();
        assert!((bal - 1.0 / 3.0).abs() < 1e-15);
        for v in [1, 2] {
            let obj = CheegerObjective::new(v, 1).unwrap();
            assert!((g.objective(&y, obj).unwrap() - 6.0).abs() < 1e-12);
        }
        assert!(g.objective(&Partition::full(3), CheegerObjective::new(1, 1).unwrap()).is_err());
    }

    #[test]
    fn balance_counts() {
        let pts: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        let g = GeoGraph::build(PointCloud::from_points(&pts).unwrap(), 1.0, Kernel::uniform(2).unwrap(), 1e-12)
            .unwrap();
        let y = Partition::from_indices(4, [2]);
        assert_eq!(g.balance(&y, VolumeKind::Count, BalanceKind::Min).unwrap(), 0.25);
        assert_eq!(g.balance(&y, VolumeKind::Count, BalanceKind::Product).unwrap(), 3.0 / 16.0);
    }

    #[test]
    fn edgeless_graph() {
        let cloud = PointCloud::from_points(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let g = GeoGraph::build(cloud, 1.0, Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS).unwrap();
        assert_eq!(g.volume(&Partition::full(2), VolumeKind::Degree), 0.0);
        let y = Partition::from_indices(2, [0]);
        assert!(matches!(
            g.balance(&y, VolumeKind::Degree, BalanceKind::Min),
            Err(Error::DegenerateGraph(_))
        ));
        assert_eq!(g.objective(&y, CheegerObjective::new(1, 1).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn disconnected_clusters_have_zero_objective() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 0.0], vec![5.1, 0.0]];
        let g = GeoGraph::build(PointCloud::from_points(&pts).unwrap(), 1.0, Kernel::uniform(2).unwrap(), 1e-12)
            .unwrap();
        let y = Partition::from_indices(4, [0, 1]);
        assert_eq!(g.objective(&y, CheegerObjective::new(2, 2).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn rescaling() {
        assert_eq!(rescaled_estimator(8.0, 2, 1.0, 2), 2.0);
        assert_eq!(rescaled_estimator(0.0, 17, 0.3, 3), 0.0);
        assert!((rescaled_estimator(1.2e6, 10_000, 0.05, 2) - 96.0).abs() < 1e-9);
    }

    #[test]
    fn cell_list_matches_brute_force_count() {
        let cloud = DomainDensity::unit_square().sample_points(1000, 11).unwrap();
        let g = GeoGraph::build(cloud.clone(), 0.1, Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS).unwrap();
        assert!(!g.is_all_pairs());
        let mut pairs = 0usize;
        for i in 0..1000 {
            for j in i + 1..1000 {
                if cloud.dist2(i, j).sqrt() / 0.1 <= 1.0 {
                    pairs += 1;
                }
            }
        }
        assert_eq!(g.edge_count(), pairs);
        assert_eq!(g.total_edge_weight(), pairs as f64);
    }

    #[test]
    fn neighbour_lists_are_sorted_and_symmetric() {
        let cloud = DomainDensity::unit_square().sample_points(300, 5).unwrap();
        let g = GeoGraph::build(cloud, 0.2, Kernel::gaussian(2).unwrap(), DEFAULT_TAIL_EPS).unwrap();
        for i in 0..g.len() {
            let (nb, w) = g.neighbors(i);
            assert!(nb.windows(2).all(|p| p[0] < p[1]));
            assert!(!nb.contains(&i));
            for (&j, &wij) in nb.iter().zip(w) {
                assert_eq!(g.weight(j, i), wij);
            }
        }
    }

    #[test]
    fn large_radius_falls_back_to_all_pairs() {
        let cloud = DomainDensity::unit_square().sample_points(50, 1).unwrap();
        let g = GeoGraph::build(cloud, 3.0, Kernel::uniform(2).unwrap(), DEFAULT_TAIL_EPS).unwrap();
        assert!(g.is_all_pairs());
        assert_eq!(g.edge_count(), 50 * 49 / 2);
    }
}
