//! Radial weight profiles `phi` and their integral constants.
//!
//! A [`Kernel`] pairs a nonincreasing profile with the ambient dimension.
//! Two constants drive every limit in this crate:
//!
//! * the surface tension `sigma = \int phi(|x|) |x_1| dx`, and
//! * the total mass `I = \int phi(|x|) dx`.
//!
//! Both reduce to one-dimensional radial integrals times an angular factor,
//! so they are computed by adaptive quadrature for arbitrary profiles and by
//! closed forms for the uniform and gaussian profiles.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{gamma_half, integrate, unit_ball_volume, unit_sphere_area};

/// Tail level used to truncate profiles with unbounded support when
/// integrating numerically.
pub const QUADRATURE_TAIL_EPS: f64 = 1e-14;
const QUADRATURE_TOL: f64 = 1e-10;

/// Piecewise-linear profile sampled on `0 = t_0 < t_1 < ... < t_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    t: Vec<f64>,
    phi: Vec<f64>,
}

impl Tabulated {
    pub fn new(t: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if t.len() != phi.len() || t.len() < 2 {
            return Err(Error::InvalidKernel(
                "need at least two (t, phi) nodes of equal length".into(),
            ));
        }
        if t[0] != 0.0 {
            return Err(Error::InvalidKernel("first node must be at t = 0".into()));
        }
        if !(phi[0] > 0.0) {
            return Err(Error::InvalidKernel("phi(0) must be positive".into()));
        }
        for w in t.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidKernel("t must be strictly increasing".into()));
            }
        }
        for (k, w) in phi.windows(2).enumerate() {
            if !w[1].is_finite() || w[1] < 0.0 {
                return Err(Error::InvalidKernel(format!("phi at node {} is not a finite nonnegative value", k + 1)));
            }
            if w[1] > w[0] {
                return Err(Error::InvalidKernel(format!(
                    "profile increases between t = {} and t = {}",
                    t[k],
                    t[k + 1]
                )));
            }
        }
        Ok(Self { t, phi })
    }

    /// Reads a CSV file with header `t,phi`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "phi" {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: "expected header `t,phi`".into(),
            });
        }
        let mut t = Vec::new();
        let mut phi = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("`{s}`: {e}"),
                })
            };
            t.push(parse(&rec[0])?);
            phi.push(parse(&rec[1])?);
        }
        Self::new(t, phi)
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.t, &self.phi)
    }

    fn eval(&self, t: f64) -> f64 {
        let last = *self.t.last().unwrap();
        if t > last {
            return 0.0;
        }
        let k = self.t.partition_point(|&x| x <= t);
        if k == 0 {
            return self.phi[0];
        }
        if k >= self.t.len() {
            return *self.phi.last().unwrap();
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let (p0, p1) = (self.phi[k - 1], self.phi[k]);
        p0 + (p1 - p0) * (t - t0) / (t1 - t0)
    }

    fn support(&self, eps: f64) -> f64 {
        for k in 0..self.t.len() {
            if self.phi[k] <= eps {
                if k == 0 {
                    return 0.0;
                }
                let (t0, t1) = (self.t[k - 1], self.t[k]);
                let (p0, p1) = (self.phi[k - 1], self.phi[k]);
                return t0 + (t1 - t0) * (p0 - eps) / (p0 - p1);
            }
        }
        *self.t.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// Indicator of `[0, 1]`.
    Uniform,
    /// `exp(-t^2)`.
    Gaussian,
    Tabulated(Tabulated),
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Uniform => "uniform",
            Profile::Gaussian => "gaussian",
            Profile::Tabulated(_) => "tabulated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    profile: Profile,
    dim: usize,
}

/// Derived constants, as printed by `kernel info`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelInfo {
    pub profile: String,
    pub dim: usize,
    pub sigma: f64,
    pub mass: f64,
    pub r_cut: f64,
}

impl Kernel {
    pub fn new(profile: Profile, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::arg(format!("dimension must be at least 2, got {dim}")));
        }
        Ok(Self { profile, dim })
    }

    pub fn uniform(dim: usize) -> Result<Self> {
        Self::new(Profile::Uniform, dim)
    }

    pub fn gaussian(dim: usize) -> Result<Self> {
        Self::new(Profile::Gaussian, dim)
    }

    /// Parses `uniform`, `gaussian` or `file:PATH`.
    pub fn from_spec(spec: &str, dim: usize) -> Result<Self> {
        let profile = match spec {
            "uniform" => Profile::Uniform,
            "gaussian" => Profile::Gaussian,
            s if s.starts_with("file:") => Profile::Tabulated(Tabulated::from_csv(Path::new(&s[5..]))?),
            other => return Err(Error::arg(format!("unknown kernel `{other}`"))),
        };
        Self::new(profile, dim)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `phi(t)` for `t >= 0`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::arg(format!("kernel argument must be nonnegative, got {t}")));
        }
        Ok(self.weight(t))
    }

    /// Unchecked `phi(t)`; callers guarantee `t >= 0`.
    #[inline]
    pub fn weight(&self, t: f64) -> f64 {
        match &self.profile {
            Profile::Uniform => {
                if t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Gaussian => (-t * t).exp(),
            Profile::Tabulated(tab) => tab.eval(t),
        }
    }

    pub fn phi0(&self) -> f64 {
        self.weight(0.0)
    }

    /// Smallest `R` with `phi(t) <= tail_eps` for every `t >= R`.
    pub fn effective_support(&self, tail_eps: f64) -> f64 {
        debug_assert!(tail_eps > 0.0);
        if tail_eps >= self.phi0() {
            return 0.0;
        }
        match &self.profile {
            Profile::Uniform => 1.0,
            Profile::Gaussian => (1.0 / tail_eps).ln().sqrt(),
            Profile::Tabulated(tab) => tab.support(tail_eps),
        }
    }

    /// `\int_0^cutoff phi(rho) rho^power d rho` by adaptive quadrature.
    pub fn radial_moment(&self, power: i32, cutoff: f64) -> Result<f64> {
        let f = |rho: f64| self.weight(rho) * rho.powi(power);
        let mut breaks = vec![0.0];
        match &self.profile {
            Profile::Uniform => breaks.push(cutoff.min(1.0)),
            Profile::Gaussian => breaks.push(cutoff),
            Profile::Tabulated(tab) => {
                breaks.extend(tab.t.iter().copied().filter(|&t| t > 0.0 && t < cutoff));
                breaks.push(cutoff.min(*tab.t.last().unwrap()));
            }
        }
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (v, _) = integrate(f, w[0], w[1], QUADRATURE_TOL / breaks.len() as f64);
            total += v;
        }
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::NonIntegrableKernel(format!(
                "radial moment of order {power} evaluated to {total}"
            )));
        }
        Ok(total)
    }

    fn quadrature_cutoff(&self) -> f64 {
        self.effective_support(QUADRATURE_TAIL_EPS)
    }

    /// `\int_{S^{d-1}} |theta_1| d theta`.
    fn abs_first_coordinate_sphere_integral(&self) -> f64 {
        2.0 * PI.powf((self.dim as f64 - 1.0) / 2.0) / gamma_half(self.dim as u32 + 1)
    }

    /// Surface tension by radial quadrature, integrating out to `cutoff`.
    pub fn surface_tension_truncated(&self, cutoff: f64) -> Result<f64> {
        Ok(self.abs_first_coordinate_sphere_integral() * self.radial_moment(self.dim as i32, cutoff)?)
    }

    /// Surface tension by radial quadrature.
    pub fn surface_tension_quadrature(&self) -> Result<f64> {
        self.surface_tension_truncated(self.quadrature_cutoff())
    }

    /// `sigma_phi`; closed form for the uniform and gaussian profiles.
    pub fn surface_tension(&self) -> Result<f64> {
        let d = self.dim as f64;
        match self.profile {
            Profile::Uniform => Ok(2.0 * PI.powf((d - 1.0) / 2.0) / ((d + 1.0) * gamma_half(self.dim as u32 + 1))),
            Profile::Gaussian => Ok(PI.powf((d - 1.0) / 2.0)),
            Profile::Tabulated(_) => self.surface_tension_quadrature(),
        }
    }

    pub fn total_mass_quadrature(&self) -> Result<f64> {
        Ok(unit_sphere_area(self.dim) * self.radial_moment(self.dim as i32 - 1, self.quadrature_cutoff())?)
    }

    /// `I_phi = \int phi(|x|) dx`; closed form for uniform and gaussian.
    pub fn total_mass(&self) -> Result<f64> {
        match self.profile {
            Profile::Uniform => Ok(unit_ball_volume(self.dim)),
            Profile::Gaussian => Ok(PI.powf(self.dim as f64 / 2.0)),
            Profile::Tabulated(_) => self.total_mass_quadrature(),
        }
    }

    pub fn info(&self) -> Result<KernelInfo> {
        Ok(KernelInfo {
            profile: self.profile.name().to_string(),
            dim: self.dim,
            sigma: self.surface_tension()?,
            mass: self.total_mass()?,
            r_cut: self.quadrature_cutoff(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn evaluate_examples() {
        let u = Kernel::uniform(2).unwrap();
        assert_eq!(u.evaluate(0.5).unwrap(), 1.0);
        assert_eq!(u.evaluate(1.0).unwrap(), 1.0);
        assert_eq!(u.evaluate(1.5).unwrap(), 0.0);
        let g = Kernel::gaussian(2).unwrap();
        assert!((g.evaluate(1.0).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(matches!(u.evaluate(-0.1), Err(Error::Argument(_))));
    }

    #[test]
    fn surface_tension_examples() {
        let s2 = Kernel::uniform(2).unwrap().surface_tension().unwrap();
        assert!((s2 - 4.0 / 3.0).abs() < 1e-14);
        let s3 = Kernel::uniform(3).unwrap().surface_tension().unwrap();
        assert!((s3 - PI / 2.0).abs() < 1e-14);
        let g2 = Kernel::gaussian(2).unwrap().surface_tension().unwrap();
        assert!((g2 - 1.772_453_850_905_516).abs() < 1e-12);
    }

    // Monte Carlo estimate of \int phi(|x|) |x_1| dx over [-R, R]^2, kept
    // independent of the radial reduction.
    #[test]
    fn surface_tension_matches_planar_monte_carlo() {
        let k = Kernel::uniform(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = 400_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            acc += k.weight((x * x + y * y).sqrt()) * x.abs();
        }
        let est = 4.0 * acc / samples as f64;
        assert!(rel(est, 4.0 / 3.0) < 0.01, "{est}");
    }

    #[test]
    fn total_mass_examples() {
        assert!((Kernel::uniform(2).unwrap().total_mass().unwrap() - PI).abs() < 1e-14);
        assert!((Kernel::gaussian(2).unwrap().total_mass().unwrap() - PI).abs() < 1e-14);
        assert!((Kernel::uniform(3).unwrap().total_mass().unwrap() - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        for d in 2..=4 {
            for k in [Kernel::uniform(d).unwrap(), Kernel::gaussian(d).unwrap()] {
                assert!(rel(k.surface_tension_quadrature().unwrap(), k.surface_tension().unwrap()) < 1e-4);
                assert!(rel(k.total_mass_quadrature().unwrap(), k.total_mass().unwrap()) < 1e-4);
            }
        }
    }

    #[test]
    fn gaussian_truncation_is_negligible() {
        let g = Kernel::gaussian(2).unwrap();
        let cut = g.effective_support(1e-12);
        let trunc = g.surface_tension_truncated(cut).unwrap();
        assert!(rel(trunc, g.surface_tension().unwrap()) <= 1e-8);
    }

    #[test]
    fn effective_support_examples() {
        assert_eq!(Kernel::uniform(2).unwrap().effective_support(1e-12), 1.0);
        let g = Kernel::gaussian(2).unwrap();
        assert!((g.effective_support((-9f64).exp()) - 3.0).abs() < 1e-12);
        assert!((g.effective_support(1e-12) - 5.256_521_769_756_932).abs() < 1e-9);
    }

    #[test]
    fn tabulated_profile_interpolates_and_validates() {
        let tab = Tabulated::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.5, 0.0]).unwrap();
        let k = Kernel::new(Profile::Tabulated(tab), 2).unwrap();
        assert!((k.weight(0.25) - 0.75).abs() < 1e-15);
        assert_eq!(k.weight(2.0), 0.0);
        assert!((k.effective_support(0.25) - 0.75).abs() < 1e-12);
        // phi(t) = 1 - t on [0, 1]: sigma = 4 * \int (1-rho) rho^2 = 1/3.
        assert!(rel(k.surface_tension().unwrap(), 1.0 / 3.0) < 1e-9);

        assert!(Tabulated::new(vec![0.0, 1.0], vec![0.5, 0.7]).is_err());
        assert!(Tabulated::new(vec![0.1, 1.0], vec![1.0, 0.0]).is_err());
        assert!(Tabulated::new(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(Tabulated::new(vec![0.0, 0.0], vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn tabulated_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.csv");
        std::fs::write(&p, "t,phi\n0,1\n0.5,1\n1,0\n").unwrap();
        let k = Kernel::from_spec(&format!("file:{}", p.display()), 3).unwrap();
        assert_eq!(k.weight(0.4), 1.0);
        std::fs::write(&p, "x,y\n0,1\n").unwrap();
        assert!(Kernel::from_spec(&format!("file:{}", p.display()), 3).is_err());
    }

    #[test]
    fn monotone_on_grid() {
        for k in [Kernel::uniform(2).unwrap(), Kernel::gaussian(3).unwrap()] {
            let vals: Vec<f64> = (0..400).map(|i| k.weight(i as f64 * 0.01)).collect();
            assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
