use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint penalty groups covering the penalized coordinates `0..dim`,
/// each with a positive weight.
///
/// For the multinomial model coordinate `(j, k)` of the `p x K` regression
/// matrix is `j * K + k`; for the ordinal model coordinate `j` is the
/// `j`-th regression coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGroups", into = "RawGroups")]
pub struct GroupStructure {
    dim: usize,
    groups: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGroups {
    dim: usize,
    groups: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl TryFrom<RawGroups> for GroupStructure {
    type Error = Error;
    fn try_from(r: RawGroups) -> Result<Self> {
        Self::new(r.dim, r.groups, Some(r.weights))
    }
}

impl From<GroupStructure> for RawGroups {
    fn from(g: GroupStructure) -> Self {
        RawGroups {
            dim: g.dim,
            groups: g.groups,
            weights: g.weights,
        }
    }
}

impl GroupStructure {
    /// Validates disjointness and coverage. Weights default to `sqrt(|G|)`.
    pub fn new(dim: usize, groups: Vec<Vec<usize>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidGroups(format!("group {g} is empty")));
            }
            for &i in members {
                if i >= dim {
                    return Err(Error::IndexOutOfRange { index: i, len: dim });
                }
                if seen[i] {
                    return Err(Error::InvalidGroups(format!("coordinate {i} appears twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidGroups(format!("coordinate {i} is not in any group")));
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != groups.len() {
                    return Err(Error::LengthMismatch { left: groups.len(), right: w.len() });
                }
                if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidGroups("weights must be positive and finite".into()));
                }
                w
            }
            None => groups.iter().map(|g| (g.len() as f64).sqrt()).collect(),
        };
        Ok(Self { dim, groups, weights })
    }

    /// One group per row of a `p x K` matrix.
    pub fn rows(p: usize, k: usize) -> Self {
        let groups = (0..p).map(|j| (j * k..(j + 1) * k).collect()).collect();
        Self::new(p * k, groups, None).expect("row groups are a partition")
    }

    /// Every coordinate on its own (plain lasso).
    pub fn entrywise(dim: usize) -> Self {
        Self::new(dim, (0..dim).map(|i| vec![i]).collect(), None).expect("singletons are a partition")
    }

    /// Rectangles `rows x cols` of a `p x K` matrix.
    pub fn rectangles(p: usize, k: usize, blocks: &[(Vec<usize>, Vec<usize>)]) -> Result<Self> {
        let mut groups = Vec::with_capacity(blocks.len());
        for (rows, cols) in blocks {
            let mut g = Vec::with_capacity(rows.len() * cols.len());
            for &r in rows {
                for &c in cols {
                    if r >= p || c >= k {
                        return Err(Error::IndexOutOfRange { index: r.max(c), len: p.max(k) });
                    }
                    g.push(r * k + c);
                }
            }
            groups.push(g);
        }
        Self::new(p * k, groups, None)
    }

    pub fn with_weights(self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, self.groups, Some(weights))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest group size.
    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn block_norm(&self, g: usize, v: &[f64]) -> f64 {
        self.groups[g].iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() < self.dim {
            return Err(Error::IndexOutOfRange { index: self.dim - 1, len: v.len() });
        }
        Ok(())
    }

    /// `sum_j w_j ||v_{G_j}||_2`. Entries beyond `dim` are ignored.
    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        self.check(v)?;
        Ok(self.norm_unchecked(v))
    }

    pub(crate) fn norm_unchecked(&self, v: &[f64]) -> f64 {
        (0..self.len()).map(|g| self.weights[g] * self.block_norm(g, v)).sum()
    }

    /// `max_j ||v_{G_j}||_2 / w_j`, the dual of the group norm.
    pub fn dual_norm(&self, v: &[f64]) -> Result<f64> {
        self.check(v)?;
        Ok((0..self.len())
            .map(|g| self.block_norm(g, v) / self.weights[g])
            .fold(0.0, f64::max))
    }

    /// In-place block soft-threshold with level `t`. Entries beyond `dim`
    /// pass through.
    pub fn prox_in_place(&self, v: &mut [f64], t: f64) {
        debug_assert!(v.len() >= self.dim);
        if t <= 0.0 {
            return;
        }
        for g in 0..self.len() {
            let norm = self.block_norm(g, v);
            let shrink = if norm > 0.0 {
                (1.0 - t * self.weights[g] / norm).max(0.0)
            } else {
                0.0
            };
            for &i in &self.groups[g] {
                v[i] *= shrink;
            }
        }
    }

    /// Indices of groups with a nonzero block.
    pub fn support(&self, v: &[f64]) -> Vec<usize> {
        (0..self.len()).filter(|&g| self.groups[g].iter().any(|&i| v[i] != 0.0)).collect()
    }
}

/// Weighted group norm of `v` (see [`GroupStructure::norm`]).
pub fn group_norm(v: &[f64], gs: &GroupStructure) -> Result<f64> {
    gs.norm(v)
}

/// Proximal map of `t * group_norm`.
pub fn prox_group(v: &[f64], gs: &GroupStructure, t: f64) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::InvalidConfig(format!("negative prox level {t}")));
    }
    gs.check(v)?;
    let mut out = v.to_vec();
    gs.prox_in_place(&mut out, t);
    Ok(out)
}
