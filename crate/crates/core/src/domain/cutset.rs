use serde::Serialize;

use super::{corner_frame, dot, DomainDensity, Shape};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// A subset `A` of the domain with piecewise smooth boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CutSet {
    /// `{x : normal . x < offset}`.
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// `{x : |x - c| < radius}` for the box corner `c` selected by the bits
    /// of `corner` (bit `k` set picks the upper face on axis `k`).
    CornerDisc { corner: usize, radius: f64 },
    /// `{x : direction . (x - center) > offset}` inside a ball.
    SphericalCap { direction: Vec<f64>, offset: f64 },
    BoxUnion(BoxUnion),
}

impl CutSet {
    /// `{x : x_axis < offset}`.
    pub fn axis_halfspace(dim: usize, axis: usize, offset: f64) -> Self {
        let mut normal = vec![0.0; dim];
        normal[axis] = 1.0;
        CutSet::Halfspace { normal, offset }
    }

    /// `{x : x_axis - c_axis > offset}`, or `< -offset` when `upper` is false.
    pub fn axis_cap(dim: usize, axis: usize, upper: bool, offset: f64) -> Self {
        let mut direction = vec![0.0; dim];
        direction[axis] = if upper { 1.0 } else { -1.0 };
        CutSet::SphericalCap { direction, offset }
    }

    pub fn family(&self) -> &'static str {
        match self {
            CutSet::Halfspace { .. } => "halfspace",
            CutSet::CornerDisc { .. } => "corner-disc",
            CutSet::SphericalCap { .. } => "spherical-cap",
            CutSet::BoxUnion(_) => "box-union",
        }
    }

    /// Complement within the domain, when it belongs to the same family.
    pub fn complement(&self) -> Option<CutSet> {
        match self {
            CutSet::Halfspace { normal, offset } => Some(CutSet::Halfspace {
                normal: normal.iter().map(|c| -c).collect(),
                offset: -offset,
            }),
            CutSet::SphericalCap { direction, offset } => Some(CutSet::SphericalCap {
                direction: direction.iter().map(|c| -c).collect(),
                offset: -offset,
            }),
            _ => None,
        }
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        let ok = match self {
            CutSet::Halfspace { normal, .. } => normal.len() == d && normal.iter().any(|&c| c != 0.0),
            CutSet::CornerDisc { corner, radius } => *corner < (1usize << d) && *radius >= 0.0,
            CutSet::SphericalCap { direction, .. } => direction.len() == d && direction.iter().any(|&c| c != 0.0),
            CutSet::BoxUnion(b) => b.lo.len() == d,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("{} does not describe a set in R^{d}", self.family())))
        }
    }

    /// Membership of `x` (assumed inside the domain).
    pub fn contains(&self, dd: &DomainDensity, x: &[f64]) -> bool {
        match self {
            CutSet::Halfspace { normal, offset } => dot(normal, x) < *offset,
            CutSet::CornerDisc { corner, radius } => {
                let d2: f64 = match dd.shape() {
                    Shape::Box { lo, hi } => x
                        .iter()
                        .enumerate()
                        .map(|(k, a)| {
                            let c = if corner >> k & 1 == 1 { hi[k] } else { lo[k] };
                            (a - c) * (a - c)
                        })
                        .sum(),
                    Shape::Ball { .. } => {
                        let (lo, hi) = dd.bounds();
                        let (origin, _) = corner_frame(&lo, &hi, *corner);
                        x.iter().zip(&origin).map(|(a, b)| (a - b) * (a - b)).sum()
                    }
                };
                d2 < radius * radius
            }
            CutSet::SphericalCap { direction, offset } => {
                let center = match dd.shape() {
                    Shape::Ball { center, .. } => center.clone(),
                    Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
                };
                let s: f64 = direction.iter().zip(x.iter().zip(&center)).map(|(u, (a, c))| u * (a - c)).sum();
                s > *offset
            }
            CutSet::BoxUnion(b) => b.contains(x),
        }
    }

    /// Parses `halfspace:axis,offset`, `corner:bits,radius` or
    /// `cap:axis,offset` (a negative axis written as `-k` flips direction).
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let (family, body) = spec
            .split_once(':')
            .ok_or_else(|| Error::arg(format!("expected family:args, got `{spec}`")))?;
        let (first, second) = body
            .split_once(',')
            .ok_or_else(|| Error::arg(format!("expected two arguments in `{spec}`")))?;
        let value: f64 = second
            .trim()
            .parse()
            .map_err(|_| Error::arg(format!("bad number in `{spec}`")))?;
        let first = first.trim();
        let set = match family {
            "halfspace" => {
                let axis: usize = first.parse().map_err(|_| Error::arg(format!("bad axis in `{spec}`")))?;
                if axis >= dim {
                    return Err(Error::arg(format!("axis {axis} out of range for d = {dim}")));
                }
                CutSet::axis_halfspace(dim, axis, value)
            }
            "corner" => CutSet::CornerDisc {
                corner: first.parse().map_err(|_| Error::arg(format!("bad corner in `{spec}`")))?,
                radius: value,
            },
            "cap" => {
                let (upper, digits) = match first.strip_prefix('-') {
                    Some(rest) => (false, rest),
                    None => (true, first),
                };
                let axis: usize = digits.parse().map_err(|_| Error::arg(format!("bad axis in `{spec}`")))?;
                if axis >= dim {
                    return Err(Error::arg(format!("axis {axis} out of range for d = {dim}")));
                }
                CutSet::axis_cap(dim, axis, upper, value)
            }
            other => return Err(Error::arg(format!("unknown cut family `{other}`"))),
        };
        set.check_dim(dim)?;
        Ok(set)
    }
}

/// Union of cells of a rectilinear grid `lo + spacing * index`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxUnion {
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    /// Cells per axis.
    pub shape: Vec<usize>,
    /// Sorted linear indices (axis 0 varies fastest).
    pub cells: Vec<usize>,
}

impl BoxUnion {
    pub fn new(lo: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>, mut cells: Vec<usize>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        Self { lo, spacing, shape, cells }
    }

    fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.lo.len() {
            let f = ((x[k] - self.lo[k]) / self.spacing[k]).floor();
            if f < 0.0 || f >= self.shape[k] as f64 {
                return None;
            }
            idx += f as usize * stride;
            stride *= self.shape[k];
        }
        Some(idx)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.cell_of(x).is_some_and(|c| self.cells.binary_search(&c).is_ok())
    }

    pub(crate) fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&s| {
                let i = idx % s;
                idx /= s;
                i
            })
            .collect()
    }

    pub(crate) fn center(&self, mi: &[usize]) -> Vec<f64> {
        mi.iter()
            .enumerate()
            .map(|(k, &i)| self.lo[k] + (i as f64 + 0.5) * self.spacing[k])
            .collect()
    }

    /// Lebesgue measure of the union intersected with the box `[lo, hi]`.
    pub(crate) fn box_overlap_volume(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut acc = CompensatedSum::new();
        for &c in &self.cells {
            let mi = self.multi_index(c);
            let mut vol = 1.0;
            for k in 0..lo.len() {
                let a = self.lo[k] + mi[k] as f64 * self.spacing[k];
                let b = a + self.spacing[k];
                vol *= (b.min(hi[k]) - a.max(lo[k])).max(0.0);
            }
            acc.add(vol);
        }
        acc.value()
    }

    /// Sum over faces between a member cell and a non-member cell, both with
    /// centre in `D`, of `rho^2` at the face centre times the face area.
    pub(crate) fn interior_face_tv(&self, dd: &DomainDensity) -> f64 {
        let d = self.lo.len();
        let face_area: Vec<f64> = (0..d)
            .map(|k| (0..d).filter(|&j| j != k).map(|j| self.spacing[j]).product())
            .collect();
        let mut acc = CompensatedSum::new();
        for &c in &self.cells {
            let mi = self.multi_index(c);
            let center = self.center(&mi);
            if !dd.contains(&center) {
                continue;
            }
            let mut stride = 1;
            for k in 0..d {
                for step in [-1i64, 1] {
                    let j = mi[k] as i64 + step;
                    if j < 0 || j >= self.shape[k] as i64 {
                        continue;
                    }
                    let neighbour = (c as i64 + step * stride as i64) as usize;
                    if self.cells.binary_search(&neighbour).is_ok() {
                        continue;
                    }
                    let mut nc = center.clone();
                    nc[k] += step as f64 * self.spacing[k];
                    if !dd.contains(&nc) {
                        continue;
                    }
                    let mut face = center.clone();
                    face[k] += 0.5 * step as f64 * self.spacing[k];
                    let r = dd.density_unchecked(&face);
                    acc.add(r * r * face_area[k]);
                }
                stride *= self.shape[k];
            }
        }
        acc.value()
    }
}
