use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Membership mask over the points; `true` marks a member of `Y` ("black").
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    members: Vec<bool>,
}

impl Partition {
    pub fn new(members: Vec<bool>) -> Self {
        Self { members }
    }

    pub fn empty(n: usize) -> Self {
        Self::new(vec![false; n])
    }

    pub fn full(n: usize) -> Self {
        Self::new(vec![true; n])
    }

    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut members = vec![false; n];
        for i in indices {
            members[i] = true;
        }
        Self::new(members)
    }

    /// Low `n` bits of `mask`, bit `i` for point `i`.
    pub fn from_bits(n: usize, mask: u64) -> Self {
        Self::new((0..n).map(|i| mask >> i & 1 == 1).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.members[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.members[i] = value;
    }

    pub fn count(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_trivial(&self) -> bool {
        let c = self.count();
        c == 0 || c == self.len()
    }

    pub fn complement(&self) -> Self {
        Self::new(self.members.iter().map(|m| !m).collect())
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.members
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    /// One `0`/`1` per line.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut members = Vec::new();
        for (k, line) in text.lines().enumerate() {
            match line.trim() {
                "" => continue,
                "0" => members.push(false),
                "1" => members.push(true),
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        msg: format!("line {}: expected 0 or 1, got `{other}`", k + 1),
                    })
                }
            }
        }
        Ok(Self::new(members))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for &m in &self.members {
            writeln!(out, "{}", m as u8)?;
        }
        Ok(())
    }
}
