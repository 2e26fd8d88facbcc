//! Monte Carlo quadrature for the nonlocal total variation of (scaled)
//! indicator functions and its small-`r` recovery of `sigma * TV`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{CutSet, DomainDensity};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Profile};
use crate::numeric::{unit_sphere_area, CompensatedSum};

/// Samples per RNG stream. Fixed so results do not depend on thread count.
pub const SAMPLE_BLOCK: usize = 8192;
pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const MIN_SAMPLES: usize = 10_000;
/// Tail cutoff for tabulated kernels.
const TAIL_EPS: f64 = 1e-12;
const RADIAL_TABLE: usize = 16_384;

#[derive(Debug, Clone, PartialEq)]
enum Support {
    Whole,
    Set(CutSet),
}

/// `a * 1_A` (or `a * 1_{D \ A}`) on the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    support: Support,
    complement: bool,
    amplitude: f64,
}

impl IndicatorField {
    pub fn of(set: CutSet) -> Self {
        Self {
            support: Support::Set(set),
            complement: false,
            amplitude: 1.0,
        }
    }

    /// `u = 1` on all of `D`.
    pub fn whole() -> Self {
        Self {
            support: Support::Whole,
            complement: false,
            amplitude: 1.0,
        }
    }

    /// `u = 0`.
    pub fn zero() -> Self {
        Self {
            complement: true,
            ..Self::whole()
        }
    }

    pub fn complement(&self) -> Self {
        Self {
            complement: !self.complement,
            ..self.clone()
        }
    }

    /// Multiplies the field by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            amplitude: self.amplitude * a,
            ..self.clone()
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn set(&self) -> Option<&CutSet> {
        match &self.support {
            Support::Set(s) => Some(s),
            Support::Whole => None,
        }
    }

    pub fn value(&self, dd: &DomainDensity, x: &[f64]) -> f64 {
        let inside = match &self.support {
            Support::Whole => true,
            Support::Set(s) => s.contains(dd, x),
        };
        if inside != self.complement {
            self.amplitude
        } else {
            0.0
        }
    }

    /// `TV(u)` against `rho^2`; zero for constant fields.
    pub fn continuum_tv(&self, dd: &DomainDensity) -> Result<f64> {
        match &self.support {
            Support::Whole => Ok(0.0),
            Support::Set(s) => Ok(self.amplitude.abs() * dd.continuum_tv(s)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Sampler for displacements `w` with density `phi(|w|) / I`.
enum Displacement {
    Ball,
    Normal,
    /// Inverse CDF of the radius on a uniform grid of probabilities.
    Radial(Vec<f64>),
}

struct KernelSampler {
    dim: usize,
    mass: f64,
    kind: Displacement,
}

impl KernelSampler {
    fn new(kernel: &Kernel) -> Result<Self> {
        let dim = kernel.dim();
        match kernel.profile() {
            Profile::Uniform => Ok(Self {
                dim,
                mass: kernel.total_mass()?,
                kind: Displacement::Ball,
            }),
            Profile::Gaussian => Ok(Self {
                dim,
                mass: kernel.total_mass()?,
                kind: Displacement::Normal,
            }),
            Profile::Tabulated(_) => {
                let support = kernel.effective_support(TAIL_EPS);
                if !(support > 0.0) {
                    return Err(Error::NonIntegrableKernel("kernel has empty support".into()));
                }
                // Trapezoid CDF of phi(t) t^{d-1}, then inverted on a probability grid.
                let m = RADIAL_TABLE;
                let h = support / m as f64;
                let dens = |t: f64| kernel.weight(t) * t.powi(dim as i32 - 1);
                let mut cdf = vec![0.0; m + 1];
                for k in 1..=m {
                    let (a, b) = ((k - 1) as f64 * h, k as f64 * h);
                    cdf[k] = cdf[k - 1] + 0.5 * h * (dens(a) + dens(b));
                }
                let total = cdf[m];
                let mass = unit_sphere_area(dim) * total;
                let mut inverse = Vec::with_capacity(m + 1);
                let mut k = 0;
                for q in 0..=m {
                    let target = total * q as f64 / m as f64;
                    while k < m && cdf[k + 1] < target {
                        k += 1;
                    }
                    let t = if k >= m {
                        support
                    } else {
                        let span = cdf[k + 1] - cdf[k];
                        let frac = if span > 0.0 { (target - cdf[k]) / span } else { 0.0 };
                        (k as f64 + frac.clamp(0.0, 1.0)) * h
                    };
                    inverse.push(t);
                }
                Ok(Self {
                    dim,
                    mass,
                    kind: Displacement::Radial(inverse),
                })
            }
        }
    }

    fn direction<R: Rng>(&self, rng: &mut R, w: &mut [f64]) {
        loop {
            let mut norm2 = 0.0;
            for c in w.iter_mut() {
                *c = rng.sample::<f64, _>(StandardNormal);
                norm2 += *c * *c;
            }
            if norm2 > 0.0 {
                let norm = norm2.sqrt();
                w.iter_mut().for_each(|c| *c /= norm);
                return;
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, w: &mut [f64]) {
        match &self.kind {
            Displacement::Normal => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for c in w.iter_mut() {
                    *c = s * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Displacement::Ball => {
                self.direction(rng, w);
                let rad = rng.random::<f64>().powf(1.0 / self.dim as f64);
                w.iter_mut().for_each(|c| *c *= rad);
            }
            Displacement::Radial(inv) => {
                self.direction(rng, w);
                let m = inv.len() - 1;
                let q = rng.random::<f64>() * m as f64;
                let k = (q as usize).min(m - 1);
                let rad = inv[k] + (inv[k + 1] - inv[k]) * (q - k as f64);
                w.iter_mut().for_each(|c| *c *= rad);
            }
        }
    }
}

/// Per-block RNG stream, independent of how blocks are scheduled.
fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

/// Estimates `r^{-d-1} \iint phi(|x-y|/r) |u(x)-u(y)| nu(dx) nu(dy)` with
/// `x ~ nu` and `y = x + r w`, `w` drawn from the normalised kernel.
pub fn nonlocal_tv(
    dd: &DomainDensity,
    kernel: &Kernel,
    r: f64,
    u: &IndicatorField,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::arg(format!("r must be positive, got {r}")));
    }
    if samples < MIN_SAMPLES {
        return Err(Error::arg(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    if kernel.dim() != dd.dim() {
        return Err(Error::arg(format!(
            "kernel dimension {} does not match domain dimension {}",
            kernel.dim(),
            dd.dim()
        )));
    }
    let sampler = KernelSampler::new(kernel)?;
    let d = dd.dim();
    let blocks = samples.div_ceil(SAMPLE_BLOCK);
    let partial: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let count = SAMPLE_BLOCK.min(samples - b * SAMPLE_BLOCK);
            let mut x = vec![0.0; d];
            let mut w = vec![0.0; d];
            let mut y = vec![0.0; d];
            let mut sum = CompensatedSum::new();
            let mut sum2 = CompensatedSum::new();
            for _ in 0..count {
                dd.sample_into(&mut rng, &mut x);
                sampler.draw(&mut rng, &mut w);
                for k in 0..d {
                    y[k] = x[k] + r * w[k];
                }
                let f = if dd.contains(&y) {
                    (u.value(dd, &x) - u.value(dd, &y)).abs() * dd.density_unchecked(&y)
                } else {
                    0.0
                };
                sum.add(f);
                sum2.add(f * f);
            }
            (sum.value(), sum2.value())
        })
        .collect();
    let mut sum = CompensatedSum::new();
    let mut sum2 = CompensatedSum::new();
    for (s, s2) in partial {
        sum.add(s);
        sum2.add(s2);
    }
    let n = samples as f64;
    let mean = sum.value() / n;
    let var = ((sum2.value() / n - mean * mean) * n / (n - 1.0)).max(0.0);
    let scale = sampler.mass / r;
    Ok(Estimate {
        mean: scale * mean,
        stderr: scale * (var / n).sqrt(),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub r: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// `sigma * TV(u)`.
    pub target: f64,
}

/// One estimate per radius (same seed throughout) with the continuum
/// target alongside.
pub fn recovery_curve(
    dd: &DomainDensity,
    kernel: &Kernel,
    u: &IndicatorField,
    r_list: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<RecoveryRow>> {
    if r_list.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::arg("radii must be strictly decreasing"));
    }
    let target = kernel.surface_tension()? * u.continuum_tv(dd)?;
    r_list
        .iter()
        .map(|&r| {
            let e = nonlocal_tv(dd, kernel, r, u, samples, seed)?;
            Ok(RecoveryRow {
                r,
                estimate: e.mean,
                stderr: e.stderr,
                target,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halfspace() -> IndicatorField {
        IndicatorField::of(CutSet::axis_halfspace(2, 0, 0.5))
    }

    #[test]
    fn constant_field_has_zero_variation() {
        let dd = DomainDensity::unit_square();
        let k = Kernel::uniform(2).unwrap();
        let e = nonlocal_tv(&dd, &k, 0.1, &IndicatorField::whole(), MIN_SAMPLES, 1).unwrap();
        assert_eq!((e.mean, e.stderr), (0.0, 0.0));
        let rows = recovery_curve(&dd, &k, &IndicatorField::zero(), &[0.2, 0.1], MIN_SAMPLES, 1).unwrap();
        assert!(rows.iter().all(|r| r.estimate == 0.0 && r.target == 0.0));
    }

    #[test]
    fn halfspace_recovers_surface_tension() {
        let dd = DomainDensity::unit_square();
        let k = Kernel::uniform(2).unwrap();
        let e = nonlocal_tv(&dd, &k, 0.05, &halfspace(), 200_000, 7).unwrap();
        let target = 4.0 / 3.0;
        assert!((e.mean - target).abs() <= 0.05 * target + 3.0 * e.stderr, "{e:?}");
        let coarse = nonlocal_tv(&dd, &k, 0.4, &halfspace(), 200_000, 7).unwrap();
        assert!((e.mean - target).abs() < (coarse.mean - target).abs());
    }

    #[test]
    fn gaussian_and_tabulated_kernels() {
        let dd = DomainDensity::unit_square();
        let g = Kernel::gaussian(2).unwrap();
        let e = nonlocal_tv(&dd, &g, 0.02, &halfspace(), 200_000, 3).unwrap();
        let target = std::f64::consts::PI.sqrt();
        assert!((e.mean - target).abs() <= 0.05 * target + 3.0 * e.stderr, "{e:?}");
        // Tabulated tent profile phi(t) = 1 - t on [0, 1].
        let tab = crate::kernel::Tabulated::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        let k = Kernel::new(Profile::Tabulated(tab), 2).unwrap();
        let e = nonlocal_tv(&dd, &k, 0.03, &halfspace(), 200_000, 3).unwrap();
        let target = k.surface_tension().unwrap();
        assert!((e.mean - target).abs() <= 0.05 * target + 3.0 * e.stderr, "{e:?} vs {target}");
    }

    #[test]
    fn complement_symmetry_and_homogeneity() {
        let dd = DomainDensity::unit_square();
        let k = Kernel::uniform(2).unwrap();
        let a = nonlocal_tv(&dd, &k, 0.1, &halfspace(), 100_000, 11).unwrap();
        let b = nonlocal_tv(&dd, &k, 0.1, &halfspace().complement(), 100_000, 12).unwrap();
        assert!((a.mean - b.mean).abs() <= 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt());
        let c = nonlocal_tv(&dd, &k, 0.1, &halfspace().scaled(2.5), 100_000, 11).unwrap();
        assert!((c.mean - 2.5 * a.mean).abs() <= 1e-12 * c.mean);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let dd = DomainDensity::unit_square();
        let k = Kernel::uniform(2).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| nonlocal_tv(&dd, &k, 0.1, &halfspace(), 50_000, 5).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn preconditions() {
        let dd = DomainDensity::unit_square();
        let k = Kernel::uniform(2).unwrap();
        assert!(nonlocal_tv(&dd, &k, 0.0, &halfspace(), MIN_SAMPLES, 1).is_err());
        assert!(nonlocal_tv(&dd, &k, 0.1, &halfspace(), 10, 1).is_err());
        assert!(recovery_curve(&dd, &k, &halfspace(), &[0.1, 0.2], MIN_SAMPLES, 1).is_err());
    }
}
