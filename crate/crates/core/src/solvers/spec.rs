//! Constraint data for `2K`-transition solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum separation of consecutive quantities in the ordering chain.
pub const MIN_SEPARATION: i64 = 3;

/// Which state a constraint family keeps the solution close to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    V0,
    W0,
}

/// One tile-wise L^2 ball constraint `||u - phi||_{L^2(T_tile)} <= rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileConstraint {
    /// 1-based index into `m`, `l` and `rho`.
    pub family: usize,
    pub tile: i64,
    pub target: Target,
    pub rho: f64,
}

/// `K` blocks of four constraint families, each family a run of `l_i` tiles
/// anchored at `m_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub k: usize,
    pub m: Vec<i64>,
    pub l: Vec<i64>,
    pub rho: Vec<f64>,
    pub alphabet_size: usize,
}

impl TransitionSpec {
    pub fn new(m: Vec<i64>, l: Vec<i64>, rho: Vec<f64>, alphabet_size: usize) -> Result<Self> {
        if !m.len().is_multiple_of(4) || l.len() != m.len() || rho.len() != m.len() {
            return Err(Error::Config(format!(
                "m, l and rho need a common length divisible by 4 (got {}, {}, {})",
                m.len(),
                l.len(),
                rho.len()
            )));
        }
        let spec = Self {
            k: m.len() / 4,
            m,
            l,
            rho,
            alphabet_size,
        };
        spec.check_structure()?;
        Ok(spec)
    }

    /// The empty spec: no transitions.
    pub fn empty() -> Self {
        Self {
            k: 0,
            m: vec![],
            l: vec![],
            rho: vec![],
            alphabet_size: 0,
        }
    }

    /// Default single block: `m = (0, 12, 30, 42)`, `l = 4`, `rho = 0.1`.
    pub fn default_block() -> Self {
        Self::new(vec![0, 12, 30, 42], vec![4; 4], vec![0.1; 4], 1).expect("valid default")
    }

    /// The ordering chain: per block `m1 < m2 < m2+l2+l3 < m3 < m4`, and
    /// between blocks `m4 < m4+l4+l5 < m5`.
    pub fn chain(&self) -> Vec<i64> {
        let mut q = Vec::with_capacity(6 * self.k);
        for j in 0..self.k {
            let b = 4 * j;
            q.push(self.m[b]);
            q.push(self.m[b + 1]);
            q.push(self.m[b + 1] + self.l[b + 1] + self.l[b + 2]);
            q.push(self.m[b + 2]);
            q.push(self.m[b + 3]);
            if j + 1 < self.k {
                q.push(self.m[b + 3] + self.l[b + 3] + self.l[b + 4]);
            }
        }
        q
    }

    fn check_structure(&self) -> Result<()> {
        if let Some(i) = self.l.iter().position(|&l| l < 1) {
            return Err(Error::Config(format!("l_{} = {} must be positive", i + 1, self.l[i])));
        }
        let chain = self.chain();
        for w in chain.windows(2) {
            if w[1] - w[0] <= MIN_SEPARATION {
                return Err(Error::Config(format!(
                    "ordering chain {chain:?}: {} and {} are not separated by more than {MIN_SEPARATION}",
                    w[0], w[1]
                )));
            }
        }
        let distinct = self.distinct_rho();
        if self.k > 0 && distinct > self.alphabet_size {
            return Err(Error::Config(format!(
                "{distinct} distinct rho values exceed alphabet size {}",
                self.alphabet_size
            )));
        }
        Ok(())
    }

    pub fn distinct_rho(&self) -> usize {
        let mut r: Vec<u64> = self.rho.iter().map(|v| v.to_bits()).collect();
        r.sort_unstable();
        r.dedup();
        r.len()
    }

    /// Full validation against the gap width `rho_bar`.
    pub fn validate(&self, rho_bar: f64) -> Result<()> {
        self.check_structure()?;
        if let Some((i, r)) = self.rho.iter().enumerate().find(|(_, r)| !(**r > 0.0 && **r < rho_bar)) {
            return Err(Error::Config(format!("rho_{} = {r} not in (0, {rho_bar})", i + 1)));
        }
        Ok(())
    }

    /// Every tile constraint, family by family.
    pub fn constraints(&self) -> Vec<TileConstraint> {
        let mut out = Vec::new();
        for idx in 0..4 * self.k {
            let (m, l, rho) = (self.m[idx], self.l[idx], self.rho[idx]);
            let (tiles, target) = match idx % 4 {
                0 => (m - l..=m - 1, Target::V0),
                1 => (m..=m + l - 1, Target::W0),
                2 => (m - l..=m - 1, Target::W0),
                _ => (m..=m + l - 1, Target::V0),
            };
            out.extend(tiles.map(|tile| TileConstraint {
                family: idx + 1,
                tile,
                target,
                rho,
            }));
        }
        out
    }

    /// First and last constrained tile.
    pub fn span(&self) -> Option<(i64, i64)> {
        if self.k == 0 {
            return None;
        }
        let last = 4 * self.k - 1;
        Some((self.m[0] - self.l[0], self.m[last] + self.l[last] - 1))
    }

    /// Strip leaving `pad` free tiles beyond both outermost constraint regions.
    pub fn strip_bounds(&self, pad: i64) -> (i64, i64) {
        match self.span() {
            Some((lo, hi)) => (lo - pad - 1, hi + pad + 2),
            None => (-pad, pad),
        }
    }

    /// Tiles strictly between the two families of each transition, as
    /// `(first, last)` per transition in x1 order.
    pub fn transition_gaps(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::with_capacity(2 * self.k);
        for j in 0..self.k {
            let b = 4 * j;
            out.push((self.m[b], self.m[b + 1] - 1));
            out.push((self.m[b + 2], self.m[b + 3] - 1));
        }
        out
    }

    /// Natural repetition period of a single block: its constrained span plus
    /// a free gap as wide as the block's inner `w0` gap.
    pub fn block_period(&self) -> Result<i64> {
        if self.k != 1 {
            return Err(Error::Config("block period is defined for K = 1 specs".into()));
        }
        let inner = (self.m[2] - self.l[2]) - (self.m[1] + self.l[1]);
        Ok((self.m[3] + self.l[3]) - (self.m[0] - self.l[0]) + inner)
    }

    /// Copies of a single block shifted by `j * period` for every `j` in `blocks`.
    pub fn replicate(&self, blocks: std::ops::RangeInclusive<i64>, period: i64) -> Result<Self> {
        if self.k != 1 {
            return Err(Error::Config("only K = 1 blocks can be replicated".into()));
        }
        let (mut m, mut l, mut rho) = (vec![], vec![], vec![]);
        for j in blocks {
            m.extend(self.m.iter().map(|v| v + j * period));
            l.extend(&self.l);
            rho.extend(&self.rho);
        }
        TransitionSpec::new(m, l, rho, self.alphabet_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_block_geometry() {
        let s = TransitionSpec::default_block();
        assert_eq!(s.chain(), vec![0, 12, 20, 30, 42]);
        assert_eq!(s.span(), Some((-4, 45)));
        assert_eq!(s.strip_bounds(10), (-15, 57));
        assert_eq!(s.block_period().unwrap(), 60);
        let c = s.constraints();
        assert_eq!(c.len(), 16);
        assert_eq!(c[0].tile, -4);
        assert_eq!(c[3].tile, -1);
        assert_eq!((c[4].tile, c[4].target), (12, Target::W0));
        assert_eq!((c[8].tile, c[8].target), (26, Target::W0));
        assert_eq!((c[15].tile, c[15].target), (45, Target::V0));
        assert_eq!(s.transition_gaps(), vec![(0, 11), (30, 41)]);
        s.validate(1.0).unwrap();
    }

    #[test]
    fn rejects_unseparated_chain() {
        let e = TransitionSpec::new(vec![0, 3, 30, 42], vec![4; 4], vec![0.1; 4], 1);
        assert!(matches!(e, Err(Error::Config(_))));
        let e = TransitionSpec::new(vec![0, 12, 18, 42], vec![4; 4], vec![0.1; 4], 1);
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_rho_and_alphabet() {
        let s = TransitionSpec::new(vec![0, 12, 30, 42], vec![4; 4], vec![0.1, 0.2, 0.1, 0.2], 2).unwrap();
        assert!(s.validate(1.0).is_ok());
        assert!(s.validate(0.15).is_err());
        assert!(TransitionSpec::new(vec![0, 12, 30, 42], vec![4; 4], vec![0.1, 0.2, 0.3, 0.2], 2).is_err());
        assert!(TransitionSpec::new(vec![0, 12, 30], vec![4; 3], vec![0.1; 3], 1).is_err());
    }

    #[test]
    fn replication_keeps_the_chain_separated() {
        let s = TransitionSpec::default_block();
        let r = s.replicate(-1..=1, 60).unwrap();
        assert_eq!(r.k, 3);
        assert_eq!(r.m[..4], [-60, -48, -30, -18]);
        assert_eq!(r.distinct_rho(), 1);
        // 42 tiles is too short a period for this block
        assert!(s.replicate(0..=1, 42).is_err());
    }

    #[test]
    fn empty_spec() {
        let s = TransitionSpec::empty();
        assert!(s.constraints().is_empty());
        assert_eq!(s.span(), None);
    }
}
