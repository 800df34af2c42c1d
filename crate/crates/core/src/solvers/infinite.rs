//! Infinite-transition surrogates: the base block replicated `K` times for
//! increasing `K`, compared on a fixed window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::heteroclinic::HeteroPair;
use super::multi::{solve_multitransition_from, ResumePoint};
use super::{Problem, SolveReport, SolverOptions, TransitionSpec};
use crate::error::{Error, Result};
use crate::grid::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfiniteMode {
    /// Blocks added towards `+inf`.
    Right,
    /// Blocks added towards `-inf`.
    Left,
    /// Blocks added alternately on the right and the left.
    Bilateral,
}

impl InfiniteMode {
    /// Block indices used for `k` copies.
    pub fn blocks(self, k: usize) -> std::ops::RangeInclusive<i64> {
        let k = k as i64;
        match self {
            InfiniteMode::Right => 0..=k - 1,
            InfiniteMode::Left => -(k - 1)..=0,
            InfiniteMode::Bilateral => -((k - 1) / 2)..=k / 2,
        }
    }
}

impl std::str::FromStr for InfiniteMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "right" => Ok(InfiniteMode::Right),
            "left" => Ok(InfiniteMode::Left),
            "bilateral" => Ok(InfiniteMode::Bilateral),
            other => Err(Error::Config(format!("unknown infinite mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct InfiniteResult {
    pub mode: InfiniteMode,
    pub window: (i64, i64),
    pub k_list: Vec<usize>,
    pub specs: Vec<TransitionSpec>,
    pub reports: Vec<SolveReport>,
    /// `(K_{i+1}, ||U_{K_{i+1}} - U_{K_i}||_{L^2(window)})`
    pub cauchy: Vec<(usize, f64)>,
}

impl InfiniteResult {
    pub fn cauchy_csv(&self, config_hash: &str) -> String {
        let mut s = format!("# config_hash={config_hash}\nK,diff\n");
        for (k, d) in &self.cauchy {
            s.push_str(&format!("{k},{d:.16e}\n"));
        }
        s
    }
}

/// `||u - v||_{L^2}` over tiles `p..=q` for fields on different strips of
/// the same resolution.
pub fn window_l2(u: &Field, v: &Field, p: i64, q: i64) -> Result<f64> {
    let (gu, gv) = (*u.grid(), *v.grid());
    if gu.dim() != gv.dim() || gu.points_per_unit() != gv.points_per_unit() {
        return Err(Error::Shape("fields have different resolutions".into()));
    }
    let n = gu.points_per_unit() as i64;
    let tl = gu.transverse_len();
    let vol = gu.cell_volume();
    let mut acc = 0.0;
    for i in p..=q {
        let lines = gu.tile_lines(i)?;
        gv.check_tile(i)?;
        let shift = (gu.left() - gv.left()) * n;
        for k in lines {
            let kv = (k as i64 + shift) as usize;
            let w = gu.tile_line_weight(i, k) * vol;
            for t in 0..tl {
                let (a, b) = (k * tl + t, kv * tl + t);
                let d = (u.wells()[a] - v.wells()[b]) as f64 + (u.offsets()[a] - v.offsets()[b]);
                acc += w * d * d;
            }
        }
    }
    Ok(acc.sqrt())
}

fn check_window(base: &TransitionSpec, mode: InfiniteMode, window: (i64, i64), period: i64) -> Result<()> {
    let (p, q) = window;
    let (lo, hi) = base.span().ok_or_else(|| Error::Config("base spec has no blocks".into()))?;
    let ok = p <= q
        && match mode {
            InfiniteMode::Right => q < lo + period,
            InfiniteMode::Left => p > hi - period,
            InfiniteMode::Bilateral => p > hi - period && q < lo + period,
        };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "window [{p}, {q}] overlaps blocks added in {mode:?} mode (period {period})"
        )))
    }
}

/// Solve the replicated spec for every `K` in `k_list` (independently, in
/// parallel) and tabulate successive window differences.
pub fn approximate_infinite(
    problem: &Problem,
    pair: &HeteroPair,
    base: &TransitionSpec,
    mode: InfiniteMode,
    k_list: &[usize],
    window: (i64, i64),
    opts: &SolverOptions,
    resume: Option<&ResumePoint>,
) -> Result<InfiniteResult> {
    if k_list.is_empty() || k_list[0] == 0 || k_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("K list {k_list:?} must be positive and strictly increasing")));
    }
    if base.distinct_rho() > base.alphabet_size {
        return Err(Error::Config("base spec exceeds its rho alphabet".into()));
    }
    let period = base.block_period()?;
    check_window(base, mode, window, period)?;
    let specs = k_list
        .iter()
        .map(|&k| base.replicate(mode.blocks(k), period))
        .collect::<Result<Vec<_>>>()?;
    let reports = specs
        .par_iter()
        .zip(k_list.par_iter())
        .map(|(spec, k)| solve_multitransition_from(problem, spec, pair, opts, resume, &format!("infinite/K{k}")))
        .collect::<Result<Vec<_>>>()?;
    let cauchy = reports
        .windows(2)
        .zip(&k_list[1..])
        .map(|(w, &k)| Ok((k, window_l2(&w[1].minimizer, &w[0].minimizer, window.0, window.1)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(InfiniteResult {
        mode,
        window,
        k_list: k_list.to_vec(),
        specs,
        reports,
        cauchy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn block_indices() {
        assert_eq!(InfiniteMode::Right.blocks(3), 0..=2);
        assert_eq!(InfiniteMode::Left.blocks(2), -1..=0);
        assert_eq!(InfiniteMode::Bilateral.blocks(1), 0..=0);
        assert_eq!(InfiniteMode::Bilateral.blocks(2), 0..=1);
        assert_eq!(InfiniteMode::Bilateral.blocks(3), -1..=1);
    }

    #[test]
    fn window_must_avoid_added_blocks() {
        let b = TransitionSpec::default_block();
        assert!(check_window(&b, InfiniteMode::Bilateral, (18, 22), 60).is_ok());
        assert!(check_window(&b, InfiniteMode::Right, (-12, -8), 60).is_ok());
        assert!(check_window(&b, InfiniteMode::Right, (50, 60), 60).is_err());
        assert!(check_window(&b, InfiniteMode::Bilateral, (-20, -10), 60).is_err());
    }

    #[test]
    fn window_distance_across_strips() {
        let a = GridSpec::strip(1, -5, 5, 8).unwrap();
        let b = GridSpec::strip(1, -9, 3, 8).unwrap();
        let u = Field::from_fn(a, |x| x[0] * 0.1);
        let v = Field::from_fn(b, |x| x[0] * 0.1 + 0.5);
        assert!((window_l2(&u, &v, -2, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!(window_l2(&u, &v, 2, 3).is_err());
    }
}
