//! Quadratic-hinge penalty for tile-wise L^2 ball constraints, and the
//! ordered (`v0 <= u <= w0`) minimization loop shared by all solvers.

use super::heteroclinic::{box_bounds, run_stage};
use super::{Problem, ResumePoint, Target, TileConstraint};
use crate::energy::{raw_gradient, strip_energy, Hessian};
use crate::error::{Error, Result};
use crate::grid::{tile_l2_distance, Field};
use crate::optimize::{HessianModel, MinimizeOptions, MinimizeResult, Objective, Projection, RankOne};
use crate::potential::Potential;

/// How a tile constraint enters the penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyKind {
    /// `(mu/2) max(0, q - rho^2)^2`: the ball `q <= rho^2`.
    Hinge,
    /// `(mu/2) (q - rho^2)^2`: the sphere `q = rho^2`.
    Equality,
}

/// One constraint resolved against a template's wells:
/// `q(x) = sum_i w_i (base_i + x_i)^2` compared with `rho^2`.
struct Ball {
    nodes: Vec<(usize, f64, f64)>,
    rho2: f64,
}

impl Ball {
    fn q(&self, x: &[f64]) -> f64 {
        self.nodes
            .iter()
            .map(|&(i, w, b)| {
                let d = b + x[i];
                w * d * d
            })
            .sum()
    }
}

/// Strip `J_1` plus `(mu/2) sum max(0, q_c - rho_c^2)^2`.
pub struct PenaltyObjective<'a> {
    pot: &'a Potential,
    c0: f64,
    template: Field,
    balls: Vec<Ball>,
    mu: f64,
    kind: PenaltyKind,
}

impl<'a> PenaltyObjective<'a> {
    pub fn new(problem: &'a Problem, template: Field, constraints: &[TileConstraint], mu: f64) -> Result<Self> {
        Self::with_kind(problem, template, constraints, mu, PenaltyKind::Hinge)
    }

    pub fn with_kind(
        problem: &'a Problem,
        template: Field,
        constraints: &[TileConstraint],
        mu: f64,
        kind: PenaltyKind,
    ) -> Result<Self> {
        let g = *template.grid();
        let (v0, w0) = (problem.v0(g)?, problem.w0(g)?);
        let tl = g.transverse_len();
        let vol = g.cell_volume();
        let mut balls = Vec::with_capacity(constraints.len());
        for c in constraints {
            let phi = match c.target {
                Target::V0 => &v0,
                Target::W0 => &w0,
            };
            let mut nodes = Vec::new();
            for k in g.tile_lines(c.tile)? {
                let w = g.tile_line_weight(c.tile, k) * vol;
                for t in 0..tl {
                    let i = k * tl + t;
                    let base = (template.wells()[i] - phi.wells()[i]) as f64 - phi.offsets()[i];
                    nodes.push((i, w, base));
                }
            }
            balls.push(Ball {
                nodes,
                rho2: c.rho * c.rho,
            });
        }
        Ok(Self {
            pot: &problem.potential,
            c0: problem.c0,
            template,
            balls,
            mu,
            kind,
        })
    }

    pub fn field(&self, x: &[f64]) -> Field {
        let mut f = self.template.clone();
        f.offsets_mut().copy_from_slice(x);
        f
    }

    /// `q - rho^2` where the penalty is active, zero elsewhere.
    fn excess(&self, b: &Ball, x: &[f64]) -> f64 {
        let v = b.q(x) - b.rho2;
        match self.kind {
            PenaltyKind::Hinge => v.max(0.0),
            PenaltyKind::Equality => v,
        }
    }

    pub fn penalty(&self, x: &[f64]) -> f64 {
        self.balls
            .iter()
            .map(|b| {
                let v = self.excess(b, x);
                0.5 * self.mu * v * v
            })
            .sum()
    }
}

impl Objective for PenaltyObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        strip_energy(&self.field(x), self.pot, self.c0) + self.penalty(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        raw_gradient(&self.field(x), self.pot, out);
        for b in &self.balls {
            let v = self.excess(b, x);
            if v != 0.0 {
                for &(i, w, base) in &b.nodes {
                    out[i] += self.mu * v * 2.0 * w * (base + x[i]);
                }
            }
        }
    }

    fn weights(&self) -> Vec<f64> {
        let g = self.template.grid();
        (0..g.len()).map(|i| g.node_weight(i)).collect()
    }

    fn hessian(&self, x: &[f64]) -> Option<HessianModel> {
        let mut base = Hessian::at(&self.field(x), self.pot);
        let mut rank_one = Vec::new();
        for b in &self.balls {
            let v = self.excess(b, x);
            if v != 0.0 || self.kind == PenaltyKind::Equality {
                let diag = base.potential_diag_mut();
                for &(i, w, _) in &b.nodes {
                    diag[i] += self.mu * v * 2.0 * w;
                }
                rank_one.push(RankOne {
                    coef: self.mu,
                    entries: b.nodes.iter().map(|&(i, w, base)| (i, 2.0 * w * (base + x[i]))).collect(),
                });
            }
        }
        Some(HessianModel { base, rank_one })
    }
}

/// Scale `u - phi` towards the target on every violated tile so all
/// constraints hold. Nodes shared by two tiles take the smaller factor.
pub fn project_feasible(problem: &Problem, u: &Field, constraints: &[TileConstraint]) -> Result<Field> {
    let g = *u.grid();
    let (v0, w0) = (problem.v0(g)?, problem.w0(g)?);
    let tl = g.transverse_len();
    let mut factor = vec![(1.0f64, Target::V0); g.nx1()];
    for c in constraints {
        let phi = if c.target == Target::V0 { &v0 } else { &w0 };
        let d = tile_l2_distance(u, phi, c.tile)?;
        if d > c.rho {
            let s = c.rho / d;
            for k in g.tile_lines(c.tile)? {
                if s < factor[k].0 {
                    factor[k] = (s, c.target);
                }
            }
        }
    }
    let mut out = u.clone();
    for (k, &(s, target)) in factor.iter().enumerate() {
        if s < 1.0 {
            let phi = if target == Target::V0 { &v0 } else { &w0 };
            for t in 0..tl {
                let i = k * tl + t;
                out.set_parts(i, phi.wells()[i], phi.offsets()[i] + s * u.diff_at(phi, i));
            }
        }
    }
    Ok(out)
}

/// Minimize the penalized energy over `v0 <= u <= w0` from `start`. Wells are
/// re-split after each pass so tails near `w0` keep full precision, and the
/// pass is repeated until they settle.
#[allow(clippy::too_many_arguments)]
pub(crate) fn minimize_ordered(
    problem: &Problem,
    start: Field,
    fixed: &[bool],
    constraints: &[TileConstraint],
    mu: f64,
    kind: PenaltyKind,
    opts: &MinimizeOptions,
    stage: &str,
    resume: Option<&ResumePoint>,
) -> Result<(Field, MinimizeResult, usize)> {
    let grid = *start.grid();
    let v0 = problem.v0(grid)?;
    let mut u = start;
    u.normalize();
    let mut total = 0;
    for pass in 0..4 {
        let (lower, upper) = box_bounds(&u, &v0);
        let proj = Projection::Box {
            fixed,
            lower: &lower,
            upper: &upper,
        };
        let obj = PenaltyObjective::with_kind(problem, u.clone(), constraints, mu, kind)?;
        let name = format!("{stage}/pass{pass}");
        let r = run_stage(&name, &obj, &proj, u.offsets().to_vec(), opts, resume)?;
        total += r.iterations;
        let mut next = obj.field(&r.x);
        next.normalize();
        let settled = next.wells() == u.wells();
        u = next;
        if settled {
            return Ok((u, r, total));
        }
    }
    Err(Error::Numerical(format!("{stage}: wells did not settle")))
}
