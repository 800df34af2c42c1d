//! Constrained `2K`-transition minimizers.

use serde::{Deserialize, Serialize};

use super::heteroclinic::{kink_position, kink_positions, HeteroPair};
use super::penalty::{minimize_ordered, project_feasible, PenaltyKind};
use super::{ConstraintMargin, Direction, Problem, SolveReport, SolverOptions, Target, TransitionSpec};
use crate::energy::{end_mask, glue, GlueSide};
use crate::error::{Error, Result};
use crate::grid::{tile_l2_distance, Field, GridSpec};
use crate::optimize::OptimizerState;

/// Where an interrupted solve stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResumePoint {
    pub stage: String,
    pub state: OptimizerState,
    pub iterate: Vec<f64>,
}

/// `{rho_-(tau_{-i} U)}` (or `rho_+`) over the tiles of the heteroclinic
/// strip, for the state each constraint family is measured against:
/// families 1 and 2 use the `v0 -> w0` heteroclinic, 3 and 4 the reverse.
pub fn forbidden_rho_samples(problem: &Problem, pair: &HeteroPair) -> Result<[Vec<f64>; 4]> {
    let sample = |dir: Direction, target: Target| -> Result<Vec<f64>> {
        let u = &pair.get(dir).minimizer;
        let g = *u.grid();
        let phi = problem.target(g, target)?;
        (g.left()..g.right()).map(|i| tile_l2_distance(u, &phi, i)).collect()
    };
    Ok([
        sample(Direction::VW, Target::V0)?,
        sample(Direction::VW, Target::W0)?,
        sample(Direction::WV, Target::W0)?,
        sample(Direction::WV, Target::V0)?,
    ])
}

/// Reject radii within `gap` of a sampled forbidden value.
pub fn check_admissible(spec: &TransitionSpec, samples: &[Vec<f64>; 4], gap: f64) -> Result<()> {
    for (idx, &rho) in spec.rho.iter().enumerate() {
        if let Some(s) = samples[idx % 4].iter().find(|s| (*s - rho).abs() <= gap) {
            return Err(Error::Config(format!(
                "rho_{} = {rho} is within {gap} of the sampled forbidden value {s}",
                idx + 1
            )));
        }
    }
    Ok(())
}

/// Copy of `u` (on its own strip) shifted right by `shift` tiles and
/// resampled onto `grid`, clamping to `u`'s end lines outside its strip.
fn shifted_onto(u: &Field, shift: i64, grid: GridSpec) -> Result<Field> {
    let src = *u.grid();
    if src.dim() != grid.dim() || src.points_per_unit() != grid.points_per_unit() {
        return Err(Error::Shape("heteroclinic resolution differs from the target strip".into()));
    }
    let n = grid.points_per_unit() as i64;
    let tl = grid.transverse_len();
    let base = (grid.left() - shift - src.left()) * n;
    let last = src.nx1() as i64 - 1;
    let mut out = Field::zeros(grid);
    for k in 0..grid.nx1() {
        let ks = (k as i64 + base).clamp(0, last) as usize;
        for t in 0..tl {
            out.copy_node(k * tl + t, u, ks * tl + t);
        }
    }
    Ok(out)
}

/// Concatenation `v0 | U | w0 | U' | v0 ...`: each transition is a
/// heteroclinic translated so its centre falls in the middle tile of its gap,
/// kept for `halfwidth` tiles on either side and glued to the flats across
/// one tile each way.
pub fn build_initial_guess(
    problem: &Problem,
    grid: GridSpec,
    spec: &TransitionSpec,
    pair: &HeteroPair,
    halfwidth: i64,
) -> Result<Field> {
    build_guess_with_centers(problem, grid, spec, pair, halfwidth, None)
}

/// As [`build_initial_guess`] with explicit centre tiles per transition.
pub fn build_guess_with_centers(
    problem: &Problem,
    grid: GridSpec,
    spec: &TransitionSpec,
    pair: &HeteroPair,
    halfwidth: i64,
    centers: Option<&[i64]>,
) -> Result<Field> {
    let v0 = problem.v0(grid)?;
    let w0 = problem.w0(grid)?;
    if spec.k == 0 {
        return Ok(v0);
    }
    if halfwidth < 0 {
        return Err(Error::Config(format!("glue halfwidth {halfwidth} < 0")));
    }
    let gaps = spec.transition_gaps();
    let centers: Vec<i64> = match centers {
        Some(c) if c.len() == gaps.len() => c.to_vec(),
        Some(c) => {
            return Err(Error::Config(format!("{} centres for {} transitions", c.len(), gaps.len())));
        }
        None => gaps.iter().map(|&(a, b)| (a + b).div_euclid(2)).collect(),
    };
    let tl = grid.transverse_len();
    let n = grid.points_per_unit() as i64;

    // flats: v0 before the first centre, alternating afterwards
    let mut out = v0.clone();
    for k in 0..grid.nx1() {
        let x = grid.x1(k);
        let passed = centers.iter().filter(|&&c| (c as f64) + 0.5 <= x).count();
        if passed % 2 == 1 {
            for t in 0..tl {
                out.copy_node(k * tl + t, &w0, k * tl + t);
            }
        }
    }

    for (t_idx, (&c, &(first, last))) in centers.iter().zip(&gaps).enumerate() {
        let (lo, hi) = (c - halfwidth - 1, c + halfwidth + 1);
        if lo < first || hi > last {
            return Err(Error::Config(format!(
                "transition piece on tiles [{lo}, {hi}] does not fit in the free gap [{first}, {last}]"
            )));
        }
        grid.check_tile(lo)?;
        grid.check_tile(hi)?;
        let (dir, before, after) = if t_idx % 2 == 0 {
            (Direction::VW, &v0, &w0)
        } else {
            (Direction::WV, &w0, &v0)
        };
        let het = &pair.get(dir).minimizer;
        let x_k = kink_position(het, &problem.v0(*het.grid())?)?;
        let piece = shifted_onto(het, c - x_k.floor() as i64, grid)?;
        let piece = glue(&piece, before, lo, GlueSide::Right)?;
        let piece = glue(&piece, after, hi, GlueSide::Left)?;
        let k0 = ((lo - grid.left()) * n) as usize;
        let k1 = ((hi + 1 - grid.left()) * n) as usize;
        for k in k0..=k1 {
            for t in 0..tl {
                out.copy_node(k * tl + t, &piece, k * tl + t);
            }
        }
    }
    Ok(out)
}

/// Margins `rho - ||u - phi||_{L^2(T_i)}` of every constraint.
pub fn constraint_margins(problem: &Problem, u: &Field, spec: &TransitionSpec) -> Result<Vec<ConstraintMargin>> {
    let g = *u.grid();
    let (v0, w0) = (problem.v0(g)?, problem.w0(g)?);
    spec.constraints()
        .iter()
        .map(|c| {
            let phi = if c.target == Target::V0 { &v0 } else { &w0 };
            let distance = tile_l2_distance(u, phi, c.tile)?;
            Ok(ConstraintMargin {
                family: c.family,
                tile: c.tile,
                rho: c.rho,
                distance,
                margin: c.rho - distance,
            })
        })
        .collect()
}

/// Constrained minimizer of strip `J_1` over the class defined by `spec`,
/// with `v0` pinned at both strip ends.
pub fn solve_multitransition(
    problem: &Problem,
    spec: &TransitionSpec,
    pair: &HeteroPair,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    solve_multitransition_from(problem, spec, pair, opts, None, "multi")
}

pub fn solve_multitransition_from(
    problem: &Problem,
    spec: &TransitionSpec,
    pair: &HeteroPair,
    opts: &SolverOptions,
    resume: Option<&ResumePoint>,
    stage: &str,
) -> Result<SolveReport> {
    let rho_bar = problem.rho_bar()?;
    spec.validate(rho_bar)?;
    check_admissible(spec, &forbidden_rho_samples(problem, pair)?, opts.admissibility_gap)?;
    let (lo, hi) = spec.strip_bounds(opts.pad);
    let grid = problem.strip(lo, hi)?;
    let guess = build_initial_guess(problem, grid, spec, pair, opts.glue_halfwidth)?;
    solve_from_guess(problem, spec, guess, opts, resume, stage)
}

/// Penalty continuation from `u`; the caller has validated `spec`.
fn solve_from_guess(
    problem: &Problem,
    spec: &TransitionSpec,
    mut u: Field,
    opts: &SolverOptions,
    resume: Option<&ResumePoint>,
    stage: &str,
) -> Result<SolveReport> {
    let rho_bar = problem.rho_bar()?;
    let constraints = spec.constraints();
    let fixed = end_mask(u.grid());
    let mut mu = opts.penalty_start;
    let mut iterations = 0;
    let mut round_energies = Vec::new();
    let mut trace = Vec::new();
    let mut violation = f64::INFINITY;
    for round in 0..opts.penalty_rounds.max(1) {
        let start = project_feasible(problem, &u, &constraints)?;
        let name = format!("{stage}/round{round}");
        let (next, r, it) = minimize_ordered(problem, start, &fixed, &constraints, mu, PenaltyKind::Hinge, &opts.minimize, &name, resume)?;
        u = next;
        iterations += it;
        trace = r.trace;
        round_energies.push(problem.energy(&u));
        violation = constraint_margins(problem, &u, spec)?
            .iter()
            .map(|m| -m.margin)
            .fold(f64::NEG_INFINITY, f64::max);
        if violation <= 0.0 {
            break;
        }
        mu *= opts.penalty_factor;
    }
    if violation > opts.feasibility_tol {
        return Err(Error::Infeasible {
            violation,
            rounds: round_energies.len(),
        });
    }
    let margins = constraint_margins(problem, &u, spec)?;
    let threshold = opts.inactive_factor * rho_bar;
    Ok(SolveReport {
        objective: problem.energy(&u),
        pde_residual: problem.pde_residual(&u)?,
        strictly_inactive: margins.iter().all(|m| m.margin > threshold),
        margins,
        minimizer: u,
        iterations,
        converged: true,
        trace,
        round_energies,
    })
}

/// Restarts of the constrained solve from guesses whose transitions sit
/// `shift` tiles off the gap centres, compared with a reference solve.
///
/// Integer translates of a transition inside its free gap differ in energy
/// only through exponentially small tails, so restarts may settle on a
/// translated copy: `max_node_diff` is then O(1) while `objective_spread`
/// and `max_offset_fraction` stay at rounding level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartAgreement {
    /// Shifts that produced a guess fitting inside every gap.
    pub shifts: Vec<i64>,
    pub objectives: Vec<f64>,
    /// Largest `|b - b_ref|` over the restarts.
    pub objective_spread: f64,
    /// Largest nodewise `|u - u_ref|` over the restarts.
    pub max_node_diff: f64,
    /// Per restart, transition positions minus the reference ones.
    pub kink_offsets: Vec<Vec<f64>>,
    /// Largest distance of any offset to the nearest integer.
    pub max_offset_fraction: f64,
}

pub fn multi_start_agreement(
    problem: &Problem,
    spec: &TransitionSpec,
    pair: &HeteroPair,
    opts: &SolverOptions,
    reference: &SolveReport,
    shifts: &[i64],
    stage: &str,
) -> Result<StartAgreement> {
    let grid = *reference.minimizer.grid();
    let mids: Vec<i64> = spec.transition_gaps().iter().map(|&(a, b)| (a + b).div_euclid(2)).collect();
    let mut out = StartAgreement {
        shifts: vec![],
        objectives: vec![],
        objective_spread: 0.0,
        max_node_diff: 0.0,
        kink_offsets: vec![],
        max_offset_fraction: 0.0,
    };
    let v0 = problem.v0(grid)?;
    let ref_kinks = kink_positions(&reference.minimizer, &v0)?;
    for &s in shifts {
        let centers: Vec<i64> = mids.iter().map(|c| c + s).collect();
        let guess = match build_guess_with_centers(problem, grid, spec, pair, opts.glue_halfwidth, Some(&centers)) {
            Ok(g) => g,
            Err(Error::Config(_)) => continue,
            Err(e) => return Err(e),
        };
        let r = solve_from_guess(problem, spec, guess, opts, None, &format!("{stage}/shift{s}"))?;
        let diff = r.minimizer.max_abs_diff(&reference.minimizer)?;
        out.objective_spread = out.objective_spread.max((r.objective - reference.objective).abs());
        out.max_node_diff = out.max_node_diff.max(diff);
        let kinks = kink_positions(&r.minimizer, &v0)?;
        let offsets: Vec<f64> = if kinks.len() == ref_kinks.len() {
            kinks.iter().zip(&ref_kinks).map(|(a, b)| a - b).collect()
        } else {
            vec![f64::NAN]
        };
        for d in &offsets {
            let frac = if d.is_finite() { (d - d.round()).abs() } else { f64::INFINITY };
            out.max_offset_fraction = out.max_offset_fraction.max(frac);
        }
        out.kink_offsets.push(offsets);
        out.shifts.push(s);
        out.objectives.push(r.objective);
    }
    Ok(out)
}

/// One shrunken copy of the block geometry.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometryTrial {
    pub scale: f64,
    pub m: Vec<i64>,
    pub l: Vec<i64>,
    pub objective: Option<f64>,
    pub min_margin: Option<f64>,
    pub strictly_inactive: bool,
    /// Why no solve happened or why it failed.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometryScan {
    pub trials: Vec<GeometryTrial>,
    /// Index into `trials` of the shortest geometry passing the
    /// strict-inactivity audit.
    pub smallest_passing: Option<usize>,
}

fn scaled_parts(spec: &TransitionSpec, scale: f64) -> (Vec<i64>, Vec<i64>) {
    let m0 = spec.m.first().copied().unwrap_or(0);
    let m = spec.m.iter().map(|&m| m0 + (scale * (m - m0) as f64).round() as i64).collect();
    let l = spec.l.iter().map(|&l| ((scale * l as f64).round() as i64).max(1)).collect();
    (m, l)
}

/// `m_i -> m_1 + round(s (m_i - m_1))`, `l_i -> max(1, round(s l_i))`.
pub fn scaled_spec(spec: &TransitionSpec, scale: f64) -> Result<TransitionSpec> {
    let (m, l) = scaled_parts(spec, scale);
    TransitionSpec::new(m, l, spec.rho.clone(), spec.alphabet_size)
}

/// Solve the constrained problem on each scaled geometry and report which
/// ones keep every constraint strictly inactive. Only interruption aborts
/// the scan; other failures are recorded per trial.
pub fn scan_geometry(
    problem: &Problem,
    spec: &TransitionSpec,
    pair: &HeteroPair,
    opts: &SolverOptions,
    scales: &[f64],
    stage: &str,
) -> Result<GeometryScan> {
    let mut trials = Vec::new();
    for (i, &scale) in scales.iter().enumerate() {
        let (m, l) = scaled_parts(spec, scale);
        let mut t = GeometryTrial {
            scale,
            m,
            l,
            objective: None,
            min_margin: None,
            strictly_inactive: false,
            error: None,
        };
        let solved = scaled_spec(spec, scale)
            .and_then(|s| solve_multitransition_from(problem, &s, pair, opts, None, &format!("{stage}/scale{i}")));
        match solved {
            Ok(r) => {
                t.objective = Some(r.objective);
                t.min_margin = r.min_margin();
                t.strictly_inactive = r.strictly_inactive;
            }
            Err(e @ Error::Interrupted { .. }) => return Err(e),
            Err(e) => t.error = Some(e.to_string()),
        }
        trials.push(t);
    }
    let span = |t: &GeometryTrial| t.m.last().zip(t.m.first()).map(|(b, a)| b - a).unwrap_or(0);
    let smallest_passing = trials
        .iter()
        .enumerate()
        .filter(|(_, t)| t.strictly_inactive)
        .min_by_key(|(_, t)| span(t))
        .map(|(i, _)| i);
    Ok(GeometryScan { trials, smallest_passing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyLedger;
    use crate::optimize::MinimizeOptions;
    use crate::potential::Potential;

    fn small() -> (Problem, SolverOptions, HeteroPair) {
        let n = 16;
        let p = Problem::new(Potential::default(), 1, n, &MinimizeOptions::for_resolution(n)).unwrap();
        let mut o = SolverOptions::for_resolution(n);
        o.hetero_half_length = 12;
        o.pad = 6;
        let pair = HeteroPair::solve(&p, &o).unwrap();
        (p, o, pair)
    }

    #[test]
    fn empty_spec_gives_v0() {
        let (p, o, pair) = small();
        let g = p.strip(-6, 6).unwrap();
        let u = build_initial_guess(&p, g, &TransitionSpec::empty(), &pair, o.glue_halfwidth).unwrap();
        assert_eq!(u, p.v0(g).unwrap());
    }

    #[test]
    fn guess_is_feasible_with_flat_constraint_regions() {
        let (p, o, pair) = small();
        let spec = TransitionSpec::default_block();
        let (lo, hi) = spec.strip_bounds(o.pad);
        let g = p.strip(lo, hi).unwrap();
        let u = build_initial_guess(&p, g, &spec, &pair, o.glue_halfwidth).unwrap();
        for m in constraint_margins(&p, &u, &spec).unwrap() {
            assert!(m.margin >= 0.9 * m.rho, "{m:?}");
        }
        let ledger = EnergyLedger::build(&u, &p.potential, p.c0).unwrap();
        assert!(ledger.total <= 2.0 * (pair.c1() + pair.c1_prime()) + 1.0);
        assert_eq!(u.value(0), 0.0);
        assert_eq!(u.value(g.nx1() - 1), 0.0);
    }

    #[test]
    fn piece_that_does_not_fit_is_rejected() {
        let (p, _, pair) = small();
        let spec = TransitionSpec::default_block();
        let g = p.strip(-15, 57).unwrap();
        let e = build_initial_guess(&p, g, &spec, &pair, 6);
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn forbidden_radius_is_rejected() {
        let (p, o, pair) = small();
        let samples = forbidden_rho_samples(&p, &pair).unwrap();
        let bad = samples[0].iter().copied().find(|s| *s > 0.01 && *s < 0.99).unwrap();
        let spec = TransitionSpec::new(vec![0, 12, 30, 42], vec![4; 4], vec![bad; 4], 1).unwrap();
        let e = solve_multitransition(&p, &spec, &pair, &o);
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn shifted_starts_reach_the_same_minimizer() {
        let (p, o, pair) = small();
        let spec = TransitionSpec::default_block();
        let r = solve_multitransition(&p, &spec, &pair, &o).unwrap();
        let a = multi_start_agreement(&p, &spec, &pair, &o, &r, &[-2, 2, 40], "t").unwrap();
        // a shift of 40 puts the pieces outside their gaps and is skipped
        assert_eq!(a.shifts, vec![-2, 2]);
        assert!(a.objective_spread < 1e-8, "{a:?}");
        // the restarts land on whole-tile translates of the reference transitions
        assert!(a.max_offset_fraction < 1e-6, "{a:?}");
        assert!(a.kink_offsets.iter().all(|o| o.len() == 2));
    }

    #[test]
    fn geometry_scan_finds_the_structural_floor() {
        let (p, o, pair) = small();
        let spec = TransitionSpec::default_block();
        assert_eq!(scaled_spec(&spec, 1.0).unwrap(), spec);
        assert_eq!(scaled_spec(&spec, 0.5).unwrap().m, vec![0, 6, 15, 21]);
        let scan = scan_geometry(&p, &spec, &pair, &o, &[1.0, 0.5, 0.25], "t").unwrap();
        assert!(scan.trials[0].strictly_inactive);
        // m = (0, 3, 8, 11) breaks the chain separation
        assert!(scan.trials[2].error.as_deref().unwrap().contains("separated"));
        assert_eq!(scan.trials[2].m, vec![0, 3, 8, 11]);
        let best = scan.smallest_passing.unwrap();
        assert!(best <= 1 && scan.trials[best].strictly_inactive);
    }
}
