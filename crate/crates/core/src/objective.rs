//! Volume and balance selectors for the four Cheeger-type objectives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the size of a vertex set is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VolumeKind {
    /// Number of vertices (`v = 1`).
    Count,
    /// Weighted degree sum (`v = 2`).
    Degree,
}

/// How the two volumes are combined into a balance term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BalanceKind {
    /// `min(Vol(Y), Vol(Y^c)) / Vol(X)` (`b = 1`).
    Min,
    /// `Vol(Y) Vol(Y^c) / Vol(X)^2` (`b = 2`).
    Product,
}

impl VolumeKind {
    pub fn from_index(v: u8) -> Result<Self> {
        match v {
            1 => Ok(VolumeKind::Count),
            2 => Ok(VolumeKind::Degree),
            _ => Err(Error::arg(format!("volume index must be 1 or 2, got {v}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            VolumeKind::Count => 1,
            VolumeKind::Degree => 2,
        }
    }
}

impl BalanceKind {
    pub fn from_index(b: u8) -> Result<Self> {
        match b {
            1 => Ok(BalanceKind::Min),
            2 => Ok(BalanceKind::Product),
            _ => Err(Error::arg(format!("balance index must be 1 or 2, got {b}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            BalanceKind::Min => 1,
            BalanceKind::Product => 2,
        }
    }

    /// Combines `vol_a`, its complement volume and the total.
    #[inline]
    pub fn combine(self, vol_a: f64, vol_rest: f64, total: f64) -> f64 {
        match self {
            BalanceKind::Min => vol_a.min(vol_rest) / total,
            BalanceKind::Product => vol_a * vol_rest / (total * total),
        }
    }
}

/// One of the four objectives `Cut / Bal_{v,b}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CheegerObjective {
    pub volume: VolumeKind,
    pub balance: BalanceKind,
}

impl CheegerObjective {
    pub fn new(v: u8, b: u8) -> Result<Self> {
        Ok(Self {
            volume: VolumeKind::from_index(v)?,
            balance: BalanceKind::from_index(b)?,
        })
    }

    /// Ratio `cut / balance` with the conventions of the discrete minimum:
    /// zero cut gives zero, zero balance with positive cut gives infinity.
    #[inline]
    pub fn ratio(cut: f64, balance: f64) -> f64 {
        if cut == 0.0 {
            0.0
        } else if balance <= 0.0 {
            f64::INFINITY
        } else {
            cut / balance
        }
    }
}

impl fmt::Display for CheegerObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "che:{},{}", self.volume.index(), self.balance.index())
    }
}

impl FromStr for CheegerObjective {
    type Err = Error;

    /// Parses `che:v,b`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .strip_prefix("che:")
            .ok_or_else(|| Error::arg(format!("expected `che:v,b`, got `{s}`")))?;
        let (v, b) = body
            .split_once(',')
            .ok_or_else(|| Error::arg(format!("expected `che:v,b`, got `{s}`")))?;
        let v: u8 = v.trim().parse().map_err(|_| Error::arg(format!("bad volume index in `{s}`")))?;
        let b: u8 = b.trim().parse().map_err(|_| Error::arg(format!("bad balance index in `{s}`")))?;
        Self::new(v, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for v in 1..=2 {
            for b in 1..=2 {
                let o = CheegerObjective::new(v, b).unwrap();
                assert_eq!(o.to_string().parse::<CheegerObjective>().unwrap(), o);
            }
        }
        assert!("che:3,1".parse::<CheegerObjective>().is_err());
        assert!("mbis".parse::<CheegerObjective>().is_err());
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(CheegerObjective::ratio(0.0, 0.0), 0.0);
        assert_eq!(CheegerObjective::ratio(1.0, 0.0), f64::INFINITY);
        assert_eq!(CheegerObjective::ratio(2.0, 0.5), 4.0);
    }
}
