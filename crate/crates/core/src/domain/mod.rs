//! Bounded domains with a probability density, i.i.d. sampling, and the
//! continuum functionals: weighted volume, weighted perimeter `TV(1_A)`, and
//! the continuum Cheeger and bisection values.

mod continuum;
mod cutset;
mod density;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use continuum::{ContinuumOptimum, OptimumSource};
pub use cutset::{BoxUnion, CutSet};
pub use density::GridDensity;

use crate::error::{Error, Result};
use crate::geograph::PointCloud;
use crate::numeric::{integrate, unit_ball_volume, CompensatedSum};
use crate::objective::{BalanceKind, VolumeKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Open axis-aligned box `prod (lo_k, hi_k)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Box { lo, .. } => lo.len(),
            Shape::Ball { center, .. } => center.len(),
        }
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Shape::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(&c, (&l, &h))| c > l && c < h),
            Shape::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 < radius * radius
            }
        }
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Lebesgue measure.
    pub fn measure(&self) -> f64 {
        match self {
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
            Shape::Ball { center, radius } => unit_ball_volume(center.len()) * radius.powi(center.len() as i32),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt(),
            Shape::Ball { radius, .. } => 2.0 * radius,
        }
    }

    pub fn inradius(&self) -> f64 {
        match self {
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (h - l)).fold(f64::INFINITY, f64::min),
            Shape::Ball { radius, .. } => *radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Uniform,
    Tabulated(GridDensity),
}

/// A domain `D` together with a probability density `rho` on it.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDensity {
    shape: Shape,
    density: Density,
}

impl DomainDensity {
    pub fn new(shape: Shape, density: Density) -> Result<Self> {
        let d = shape.dim();
        if d == 0 {
            return Err(Error::arg("domain dimension must be positive"));
        }
        match &shape {
            Shape::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(h > l)) {
                    return Err(Error::arg("box needs lo < hi on every axis"));
                }
            }
            Shape::Ball { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::arg("ball radius must be positive"));
                }
            }
        }
        let density = match density {
            Density::Uniform => Density::Uniform,
            Density::Tabulated(g) => {
                if g.dim() != d {
                    return Err(Error::InvalidDensity(format!(
                        "density grid has dimension {}, domain has {d}",
                        g.dim()
                    )));
                }
                Density::Tabulated(g.normalized_on(&shape)?)
            }
        };
        Ok(Self { shape, density })
    }

    pub fn uniform(shape: Shape) -> Result<Self> {
        Self::new(shape, Density::Uniform)
    }

    pub fn unit_cube(d: usize) -> Self {
        Self::uniform(Shape::Box {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        })
        .expect("unit cube is valid")
    }

    pub fn unit_square() -> Self {
        Self::unit_cube(2)
    }

    pub fn unit_ball(d: usize) -> Self {
        Self::uniform(Shape::Ball {
            center: vec![0.0; d],
            radius: 1.0,
        })
        .expect("unit ball is valid")
    }

    /// `square`, `cube` or `ball` with a density of `uniform` or `file:PATH`.
    pub fn from_spec(domain: &str, dim: usize, density: &str) -> Result<Self> {
        let shape = match domain {
            "square" => {
                if dim != 2 {
                    return Err(Error::arg(format!("`square` is two-dimensional, got --dim {dim}")));
                }
                Shape::Box {
                    lo: vec![0.0; 2],
                    hi: vec![1.0; 2],
                }
            }
            "cube" => Shape::Box {
                lo: vec![0.0; dim],
                hi: vec![1.0; dim],
            },
            "ball" => Shape::Ball {
                center: vec![0.0; dim],
                radius: 1.0,
            },
            other => return Err(Error::arg(format!("unknown domain `{other}`"))),
        };
        let density = match density {
            "uniform" => Density::Uniform,
            s if s.starts_with("file:") => Density::Tabulated(GridDensity::from_csv(std::path::Path::new(&s[5..]))?),
            other => return Err(Error::arg(format!("unknown density `{other}`"))),
        };
        Self::new(shape, density)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn density_kind(&self) -> &Density {
        &self.density
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.density, Density::Uniform)
    }

    pub fn is_box(&self) -> bool {
        matches!(self.shape, Shape::Box { .. })
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.shape.contains(x)
    }

    /// Constant density value of the uniform law, `1/|D|`.
    fn uniform_value(&self) -> f64 {
        1.0 / self.shape.measure()
    }

    /// `rho(x)`, zero outside `D`.
    #[inline]
    pub fn density(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        self.density_unchecked(x)
    }

    /// `rho(x)` without the membership test.
    #[inline]
    pub fn density_unchecked(&self, x: &[f64]) -> f64 {
        match &self.density {
            Density::Uniform => self.uniform_value(),
            Density::Tabulated(g) => g.eval(x),
        }
    }

    pub fn rho_min(&self) -> f64 {
        match &self.density {
            Density::Uniform => self.uniform_value(),
            Density::Tabulated(g) => g.rho_min(),
        }
    }

    pub fn rho_max(&self) -> f64 {
        match &self.density {
            Density::Uniform => self.uniform_value(),
            Density::Tabulated(g) => g.rho_max(),
        }
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.shape.bounds()
    }

    pub fn diameter(&self) -> f64 {
        self.shape.diameter()
    }

    /// `n` i.i.d. draws from `rho` by rejection from the bounding box.
    pub fn sample_points(&self, n: usize, seed: u64) -> Result<PointCloud> {
        if n == 0 {
            return Err(Error::arg("need at least one point"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let mut coords = Vec::with_capacity(n * d);
        let mut x = vec![0.0; d];
        for _ in 0..n {
            self.sample_into(&mut rng, &mut x);
            coords.extend_from_slice(&x);
        }
        PointCloud::new(d, coords)
    }

    /// One draw from `rho` into `x`, by rejection from the bounding box.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64]) {
        let (lo, hi) = self.bounds();
        let rho_max = self.rho_max();
        loop {
            for k in 0..x.len() {
                x[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
            }
            if !self.contains(x) {
                continue;
            }
            if !self.is_uniform() && rng.random::<f64>() * rho_max >= self.density_unchecked(x) {
                continue;
            }
            return;
        }
    }

    /// Cells per axis of the fixed quadrature grid over the bounding box.
    pub(crate) fn quadrature_resolution(&self) -> usize {
        match self.dim() {
            1 => 4096,
            2 => 256,
            3 => 64,
            _ => 16,
        }
    }

    /// Midpoint rule for `\int_D f(x) dx` on the fixed grid.
    pub(crate) fn grid_quadrature<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        midpoint_quadrature(&self.shape, self.quadrature_resolution(), f)
    }

    /// `Vol_{nu,v}(D) = \int_D rho^v`.
    pub fn total_volume(&self, v: VolumeKind) -> f64 {
        match (&self.density, v) {
            (_, VolumeKind::Count) => 1.0,
            (Density::Uniform, VolumeKind::Degree) => self.uniform_value(),
            (Density::Tabulated(_), VolumeKind::Degree) => self.grid_quadrature(|x| {
                let r = self.density_unchecked(x);
                r * r
            }),
        }
    }

    /// `Vol_{nu,v}(A) = \int_A rho^v dx`.
    pub fn region_volume(&self, a: &CutSet, v: VolumeKind) -> Result<f64> {
        a.check_dim(self.dim())?;
        if self.is_uniform() {
            if let Some(lebesgue) = self.exact_lebesgue(a) {
                return Ok(self.uniform_value().powi(v.index() as i32) * lebesgue);
            }
        }
        if !matches!(a, CutSet::BoxUnion(_)) {
            if let Some(vol) = self.foliated_volume(a, v) {
                return Ok(vol);
            }
        }
        let p = v.index() as i32;
        Ok(self.grid_quadrature(|x| {
            if a.contains(self, x) {
                self.density_unchecked(x).powi(p)
            } else {
                0.0
            }
        }))
    }

    /// `nu(A)`.
    pub fn probability(&self, a: &CutSet) -> Result<f64> {
        self.region_volume(a, VolumeKind::Count)
    }

    /// `Bal_{nu,v,b}(A)`, taking the complement volume as `Vol(D) - Vol(A)`.
    pub fn balance(&self, a: &CutSet, v: VolumeKind, b: BalanceKind) -> Result<f64> {
        let total = self.total_volume(v);
        let vol = self.region_volume(a, v)?.clamp(0.0, total);
        Ok(b.combine(vol, total - vol, total))
    }

    /// Lebesgue measure of `A ∩ D` where a closed form is available.
    fn exact_lebesgue(&self, a: &CutSet) -> Option<f64> {
        match (&self.shape, a) {
            (Shape::Box { lo, hi }, CutSet::Halfspace { normal, offset }) => {
                let (k, lower, upper) = axis_interval(normal, *offset)?;
                let len = (upper.min(hi[k]) - lower.max(lo[k])).max(0.0);
                let rest: f64 = (0..lo.len()).filter(|&j| j != k).map(|j| hi[j] - lo[j]).product();
                Some(len * rest)
            }
            (Shape::Box { lo, hi }, CutSet::CornerDisc { radius, .. }) => {
                let min_side = lo.iter().zip(hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
                if *radius <= min_side {
                    let d = lo.len();
                    Some(unit_ball_volume(d) * radius.powi(d as i32) / (1u64 << d) as f64)
                } else {
                    None
                }
            }
            (Shape::Ball { center, radius }, CutSet::SphericalCap { direction, offset }) => {
                let norm = norm(direction);
                Some(cap_volume(center.len(), *radius, offset / norm))
            }
            (Shape::Ball { center, radius }, CutSet::Halfspace { normal, offset }) => {
                // {n.x < c} = ball minus the cap beyond h along n.
                let nn = norm(normal);
                let h = (offset - dot(normal, center)) / nn;
                Some(self.shape.measure() - cap_volume(center.len(), *radius, h))
            }
            (Shape::Box { lo, hi }, CutSet::BoxUnion(bu)) => Some(bu.box_overlap_volume(lo, hi)),
            _ => None,
        }
    }

    /// `TV(1_A) = \int_{∂A ∩ D} rho^2 dH^{d-1}`.
    pub fn continuum_tv(&self, a: &CutSet) -> Result<f64> {
        a.check_dim(self.dim())?;
        if let CutSet::BoxUnion(bu) = a {
            return Ok(bu.interior_face_tv(self));
        }
        if self.is_uniform() {
            if let Some(area) = self.exact_interface_area(a) {
                let r = self.uniform_value();
                return Ok(r * r * area);
            }
        }
        self.surface_quadrature(a)
    }

    fn exact_interface_area(&self, a: &CutSet) -> Option<f64> {
        let d = self.dim();
        match (&self.shape, a) {
            (Shape::Box { lo, hi }, CutSet::Halfspace { normal, offset }) => {
                let (k, lower, upper) = axis_interval(normal, *offset)?;
                let cut = if lower.is_finite() { lower } else { upper };
                if cut > lo[k] && cut < hi[k] {
                    Some((0..d).filter(|&j| j != k).map(|j| hi[j] - lo[j]).product())
                } else {
                    Some(0.0)
                }
            }
            (Shape::Box { lo, hi }, CutSet::CornerDisc { radius, .. }) => {
                let min_side = lo.iter().zip(hi).map(|(l, h)| h - l).fold(f64::INFINITY, f64::min);
                if *radius <= min_side {
                    Some(crate::numeric::unit_sphere_area(d) * radius.powi(d as i32 - 1) / (1u64 << d) as f64)
                } else {
                    None
                }
            }
            (Shape::Ball { radius, .. }, CutSet::SphericalCap { direction, offset }) => {
                Some(chord_area(d, *radius, offset / norm(direction)))
            }
            (Shape::Ball { center, radius }, CutSet::Halfspace { normal, offset }) => {
                let h = (offset - dot(normal, center)) / norm(normal);
                Some(chord_area(d, *radius, h))
            }
            _ => None,
        }
    }

    /// Writes `A ∩ D` as `{s_lo < score(x) < s_hi}` for a one-parameter
    /// foliation of the domain; `boundary` is the level carrying `∂A ∩ D`.
    fn foliation(&self, a: &CutSet) -> Option<(Foliation, f64, f64, f64)> {
        match (&self.shape, a) {
            (Shape::Box { lo, hi }, CutSet::Halfspace { normal, offset }) => {
                let (k, lower, upper) = axis_interval(normal, *offset)?;
                let boundary = if lower.is_finite() { lower } else { upper };
                let s_lo = lower.clamp(lo[k], hi[k]);
                let s_hi = upper.clamp(lo[k], hi[k]);
                Some((Foliation::Axis(k), s_lo, s_hi, boundary))
            }
            (Shape::Box { lo, hi }, CutSet::CornerDisc { corner, radius }) => {
                let (origin, inward) = corner_frame(lo, hi, *corner);
                let reach = self.shape.diameter();
                Some((Foliation::Sphere { origin, inward }, 0.0, radius.min(reach), *radius))
            }
            (Shape::Ball { center, radius }, CutSet::SphericalCap { direction, offset }) => {
                let nn = norm(direction);
                let u = direction.iter().map(|c| c / nn).collect();
                let t = offset / nn;
                Some((
                    Foliation::Plane { unit: u, center: center.clone(), radius: *radius },
                    t.clamp(-radius, *radius),
                    *radius,
                    t,
                ))
            }
            (Shape::Ball { center, radius }, CutSet::Halfspace { normal, offset }) => {
                let nn = norm(normal);
                let u = normal.iter().map(|c| c / nn).collect();
                let h = (offset - dot(normal, center)) / nn;
                Some((
                    Foliation::Plane { unit: u, center: center.clone(), radius: *radius },
                    -radius,
                    h.clamp(-radius, *radius),
                    h,
                ))
            }
            _ => None,
        }
    }

    /// `\int_{level s} rho^q dH^{d-1}` restricted to `D` (d = 2, 3).
    fn level_integral(&self, fol: &Foliation, s: f64, q: i32) -> f64 {
        let d = self.dim();
        let f = |x: &[f64]| self.density(x).powi(q);
        let mut acc = CompensatedSum::new();
        let mut x = vec![0.0; d];
        match fol {
            Foliation::Axis(k) => {
                let (lo, hi) = self.bounds();
                let others: Vec<usize> = (0..d).filter(|j| j != k).collect();
                let m: usize = if d == 2 { 512 } else { 64 };
                x[*k] = s;
                let cell: f64 = others.iter().map(|&j| (hi[j] - lo[j]) / m as f64).product();
                for idx in 0..m.pow(others.len() as u32) {
                    let mut rem = idx;
                    for &j in &others {
                        x[j] = lo[j] + ((rem % m) as f64 + 0.5) * (hi[j] - lo[j]) / m as f64;
                        rem /= m;
                    }
                    acc.add(f(&x) * cell);
                }
            }
            Foliation::Sphere { origin, inward } => {
                let quarter = std::f64::consts::FRAC_PI_2;
                if d == 2 {
                    let m = 512;
                    let dth = quarter / m as f64;
                    for i in 0..m {
                        let th = (i as f64 + 0.5) * dth;
                        x[0] = origin[0] + inward[0] * s * th.cos();
                        x[1] = origin[1] + inward[1] * s * th.sin();
                        acc.add(f(&x) * s * dth);
                    }
                } else {
                    let m = 64;
                    let dth = quarter / m as f64;
                    for i in 0..m {
                        let th = (i as f64 + 0.5) * dth;
                        for j in 0..m {
                            let ph = (j as f64 + 0.5) * dth;
                            x[0] = origin[0] + inward[0] * s * th.sin() * ph.cos();
                            x[1] = origin[1] + inward[1] * s * th.sin() * ph.sin();
                            x[2] = origin[2] + inward[2] * s * th.cos();
                            acc.add(f(&x) * s * s * th.sin() * dth * dth);
                        }
                    }
                }
            }
            Foliation::Plane { unit, center, radius } => {
                if s.abs() >= *radius {
                    return 0.0;
                }
                let half = (radius * radius - s * s).sqrt();
                let basis = orthonormal_complement(unit);
                if d == 2 {
                    let m = 512;
                    let ds = 2.0 * half / m as f64;
                    for i in 0..m {
                        let t = -half + (i as f64 + 0.5) * ds;
                        for k in 0..2 {
                            x[k] = center[k] + s * unit[k] + t * basis[0][k];
                        }
                        acc.add(f(&x) * ds);
                    }
                } else {
                    let m = 64;
                    let dr = half / m as f64;
                    let dpsi = 2.0 * std::f64::consts::PI / m as f64;
                    for i in 0..m {
                        let rr = (i as f64 + 0.5) * dr;
                        for j in 0..m {
                            let psi = (j as f64 + 0.5) * dpsi;
                            for k in 0..3 {
                                x[k] = center[k] + s * unit[k] + rr * (psi.cos() * basis[0][k] + psi.sin() * basis[1][k]);
                            }
                            acc.add(f(&x) * rr * dr * dpsi);
                        }
                    }
                }
            }
        }
        acc.value()
    }

    fn foliated_volume(&self, a: &CutSet, v: VolumeKind) -> Option<f64> {
        if !(self.dim() == 2 || self.dim() == 3) {
            return None;
        }
        let (fol, s_lo, s_hi, _) = self.foliation(a)?;
        let q = v.index() as i32;
        let (val, _) = integrate(|s| self.level_integral(&fol, s, q), s_lo, s_hi, 1e-10);
        Some(val)
    }

    /// Parametrised surface quadrature of `rho^2` over `∂A ∩ D` (d = 2, 3).
    fn surface_quadrature(&self, a: &CutSet) -> Result<f64> {
        let d = self.dim();
        if !(d == 2 || d == 3) {
            return Err(Error::UnsupportedDomain(format!(
                "surface quadrature is implemented for d = 2, 3 only (d = {d})"
            )));
        }
        let (fol, _, _, boundary) = self.foliation(a).ok_or_else(|| {
            Error::UnsupportedDomain(format!("no surface parametrisation for {} in this domain", a.family()))
        })?;
        Ok(self.level_integral(&fol, boundary, 2))
    }
}

enum Foliation {
    /// Hyperplanes `x_k = s`.
    Axis(usize),
    /// Spheres of radius `s` about a box corner, restricted to the inward orthant.
    Sphere { origin: Vec<f64>, inward: Vec<f64> },
    /// Planes `unit . (x - center) = s` cutting a ball.
    Plane { unit: Vec<f64>, center: Vec<f64>, radius: f64 },
}

pub(crate) fn midpoint_quadrature<F: Fn(&[f64]) -> f64>(shape: &Shape, m: usize, f: F) -> f64 {
    let (lo, hi) = shape.bounds();
    let d = lo.len();
    let h: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| (u - l) / m as f64).collect();
    let cell: f64 = h.iter().product();
    let total = m.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut acc = CompensatedSum::new();
    for idx in 0..total {
        let mut rem = idx;
        for k in 0..d {
            x[k] = lo[k] + ((rem % m) as f64 + 0.5) * h[k];
            rem /= m;
        }
        if shape.contains(&x) {
            acc.add(f(&x));
        }
    }
    acc.value() * cell
}

/// For an axis-aligned normal, the axis and the interval `(lower, upper)` of
/// that coordinate described by `normal . x < offset`.
pub(crate) fn axis_interval(normal: &[f64], offset: f64) -> Option<(usize, f64, f64)> {
    let mut axis = None;
    for (k, &c) in normal.iter().enumerate() {
        if c != 0.0 {
            if axis.is_some() {
                return None;
            }
            axis = Some(k);
        }
    }
    let k = axis?;
    let a = normal[k];
    if a > 0.0 {
        Some((k, f64::NEG_INFINITY, offset / a))
    } else {
        Some((k, offset / a, f64::INFINITY))
    }
}

/// Corner `bits` of a box (bit `k` set: upper face on axis `k`) and the
/// inward unit signs.
pub(crate) fn corner_frame(lo: &[f64], hi: &[f64], bits: usize) -> (Vec<f64>, Vec<f64>) {
    let d = lo.len();
    let origin = (0..d).map(|k| if bits >> k & 1 == 1 { hi[k] } else { lo[k] }).collect();
    let inward = (0..d).map(|k| if bits >> k & 1 == 1 { -1.0 } else { 1.0 }).collect();
    (origin, inward)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Volume of `{y in B(0, R) : y_1 > h}`.
pub(crate) fn cap_volume(d: usize, radius: f64, h: f64) -> f64 {
    if h >= radius {
        return 0.0;
    }
    if h <= -radius {
        return unit_ball_volume(d) * radius.powi(d as i32);
    }
    match d {
        2 => radius * radius * (h / radius).acos() - h * (radius * radius - h * h).sqrt(),
        3 => std::f64::consts::PI * (radius - h).powi(2) * (2.0 * radius + h) / 3.0,
        _ => {
            let w = unit_ball_volume(d - 1);
            let (v, _) = integrate(
                |s| w * (radius * radius - s * s).max(0.0).powf((d as f64 - 1.0) / 2.0),
                h,
                radius,
                1e-13,
            );
            v
        }
    }
}

/// `(d-1)`-volume of the planar section `{y_1 = h}` of `B(0, R)`.
pub(crate) fn chord_area(d: usize, radius: f64, h: f64) -> f64 {
    if h.abs() >= radius {
        return 0.0;
    }
    unit_ball_volume(d - 1) * (radius * radius - h * h).powf((d as f64 - 1.0) / 2.0)
}

/// Orthonormal basis of the complement of unit vector `u` (d = 2, 3).
fn orthonormal_complement(u: &[f64]) -> Vec<Vec<f64>> {
    match u.len() {
        2 => vec![vec![-u[1], u[0]]],
        _ => {
            let pick = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let p = dot(&pick, u);
            let mut e1: Vec<f64> = (0..3).map(|k| pick[k] - p * u[k]).collect();
            let n1 = norm(&e1);
            e1.iter_mut().for_each(|c| *c /= n1);
            let e2 = vec![
                u[1] * e1[2] - u[2] * e1[1],
                u[2] * e1[0] - u[0] * e1[2],
                u[0] * e1[1] - u[1] * e1[0],
            ];
            vec![e1, e2]
        }
    }
}
