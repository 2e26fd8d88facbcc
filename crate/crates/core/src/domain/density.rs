use std::path::Path;

use super::{midpoint_quadrature, Shape};
use crate::error::{Error, Result};

/// Positive density tabulated on a tensor grid and multilinearly
/// interpolated (clamped to the grid hull). Values are rescaled so that the
/// density integrates to one over its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    axes: Vec<Vec<f64>>,
    /// Node values, axis 0 varying fastest.
    values: Vec<f64>,
    scale: f64,
}

impl GridDensity {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidDensity("no axes".into()));
        }
        for (k, ax) in axes.iter().enumerate() {
            if ax.len() < 2 || ax.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidDensity(format!(
                    "axis {k} needs at least two strictly increasing nodes"
                )));
            }
        }
        let expected: usize = axes.iter().map(Vec::len).product();
        if values.len() != expected {
            return Err(Error::InvalidDensity(format!(
                "grid needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidDensity(format!("density values must be positive, found {bad}")));
        }
        Ok(Self { axes, values, scale: 1.0 })
    }

    /// Reads a CSV with header `x1,...,xd,rho` whose rows cover a full grid.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = rdr.headers()?.clone();
        let d = headers.len().saturating_sub(1);
        let well_formed = d >= 1
            && &headers[d] == "rho"
            && (0..d).all(|k| headers[k] == *format!("x{}", k + 1));
        if !well_formed {
            return Err(parse_err("expected header `x1,...,xd,rho`".into()));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let row = row.map_err(|e| parse_err(format!("line {}: {e}", line + 2)))?;
            if row.len() != d + 1 {
                return Err(parse_err(format!("line {} has {} columns", line + 2, row.len())));
            }
            rows.push(row);
        }
        let mut axes: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let mut ax: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                ax.sort_by(f64::total_cmp);
                ax.dedup();
                ax
            })
            .collect();
        axes.iter_mut().for_each(|a| a.shrink_to_fit());
        let expected: usize = axes.iter().map(Vec::len).product();
        if expected != rows.len() {
            return Err(parse_err(format!(
                "{} rows do not form a full {} grid",
                rows.len(),
                axes.iter().map(|a| a.len().to_string()).collect::<Vec<_>>().join("x")
            )));
        }
        let mut values = vec![f64::NAN; expected];
        for row in &rows {
            let mut idx = 0;
            let mut stride = 1;
            for k in 0..d {
                let i = axes[k].binary_search_by(|v| v.total_cmp(&row[k])).expect("node present");
                idx += i * stride;
                stride *= axes[k].len();
            }
            values[idx] = row[d];
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(parse_err("duplicate grid node".into()));
        }
        Self::new(axes, values)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn rho_min(&self) -> f64 {
        self.scale * self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn rho_max(&self) -> f64 {
        self.scale * self.values.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn normalized_on(mut self, shape: &Shape) -> Result<Self> {
        self.scale = 1.0;
        let m = match shape.dim() {
            1 => 4096,
            2 => 256,
            3 => 64,
            _ => 16,
        };
        let mass = midpoint_quadrature(shape, m, |x| self.eval(x));
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidDensity(format!("density integrates to {mass}")));
        }
        self.scale = 1.0 / mass;
        Ok(self)
    }

    /// Multilinear interpolation, clamped to the grid hull.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.axes.len();
        let mut base = 0;
        let mut stride = 1;
        let mut frac = [0f64; 8];
        let mut strides = [0usize; 8];
        debug_assert!(d <= 8);
        for k in 0..d {
            let ax = &self.axes[k];
            let c = x[k].clamp(ax[0], ax[ax.len() - 1]);
            let i = ax.partition_point(|&v| v <= c).clamp(1, ax.len() - 1) - 1;
            frac[k] = (c - ax[i]) / (ax[i + 1] - ax[i]);
            strides[k] = stride;
            base += i * stride;
            stride *= ax.len();
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    idx += strides[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        acc * self.scale
    }
}
