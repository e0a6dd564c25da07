//! The energy functional
//! `I(u) = ½⟨Bu, u⟩_w − 1/(q+1)·Σ|u_j|^{q+1} w_j`,
//! its gradient, the scaling onto the set `T = {I = 0} \ {0}`, the
//! Nehari-manifold projection, and nodal diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compensated::residual_vector;
use crate::discretize::DiscreteOperator;
use crate::error::{invalid, Result};
use crate::seed::task_rng;

/// Relative threshold below which entries are ignored when counting sign changes.
pub const SIGN_THRESHOLD: f64 = 1e-8;

/// `|u|^{q−1}u`, entrywise.
pub fn nonlinearity(u: &[f64], q: f64) -> Vec<f64> {
    u.iter().map(|v| v.abs().powf(q - 1.0) * v).collect()
}

pub fn functional_i(op: &DiscreteOperator, u: &[f64]) -> Result<f64> {
    op.grid.check(u)?;
    let q = op.q();
    Ok(0.5 * op.quadratic_form(u) - op.grid.power_sum(u, q + 1.0) / (q + 1.0))
}

/// `Bu − |u|^{q−1}u`, the gradient of `I` in the weighted inner product.
pub fn gradient_i(op: &DiscreteOperator, u: &[f64]) -> Result<Vec<f64>> {
    op.grid.check(u)?;
    let q = op.q();
    Ok(op
        .apply(u)
        .into_iter()
        .zip(u)
        .map(|(b, v)| b - v.abs().powf(q - 1.0) * v)
        .collect())
}

/// The unique `a > 0` with `I(a·u) = 0`:
/// `a = ((q+1)⟨Bu,u⟩_w / (2Σ|u|^{q+1}w))^{1/(q−1)}`.
pub fn nehari_scale(op: &DiscreteOperator, u: &[f64]) -> Result<f64> {
    ray_ratio(op, u).map(|r| ((op.q() + 1.0) / 2.0 * r).powf(1.0 / (op.q() - 1.0)))
}

/// The maximizer `t* > 0` of `t ↦ I(t·u)`; `t*·u` lies on the Nehari manifold
/// `⟨Bu,u⟩_w = Σ|u|^{q+1}w`. Related to [`nehari_scale`] by
/// `a = ((q+1)/2)^{1/(q−1)}·t*`.
pub fn ray_maximizer(op: &DiscreteOperator, u: &[f64]) -> Result<f64> {
    ray_ratio(op, u).map(|r| r.powf(1.0 / (op.q() - 1.0)))
}

fn ray_ratio(op: &DiscreteOperator, u: &[f64]) -> Result<f64> {
    op.grid.check(u)?;
    let p = op.grid.power_sum(u, op.q() + 1.0);
    if p == 0.0 {
        return Err(invalid("ray scaling needs a nonzero vector"));
    }
    Ok(op.quadratic_form(u) / p)
}

/// `E(u) = Σ|u_j|^{q+1} w_j`.
pub fn energy(op: &DiscreteOperator, u: &[f64]) -> Result<f64> {
    op.grid.check(u)?;
    Ok(op.grid.power_sum(u, op.q() + 1.0))
}

/// `‖Bu − |u|^{q−1}u‖_w`, evaluated in double-word arithmetic.
pub fn residual(op: &DiscreteOperator, u: &[f64]) -> Result<f64> {
    residual_split(op, u, &vec![0.0; u.len()])
}

/// Residual of the unevaluated sum `hi + lo`.
pub fn residual_split(op: &DiscreteOperator, hi: &[f64], lo: &[f64]) -> Result<f64> {
    op.grid.check(hi)?;
    op.grid.check(lo)?;
    Ok(op.grid.norm(&residual_vector(op, hi, lo)))
}

pub fn sign_changes(u: &[f64]) -> usize {
    sign_changes_with_threshold(u, SIGN_THRESHOLD)
}

/// Counts sign alternations among entries with `|u_j| > sigma·max|u|`.
pub fn sign_changes_with_threshold(u: &[f64], sigma: f64) -> usize {
    let max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    let cut = sigma * max;
    let mut last: Option<bool> = None;
    let mut count = 0;
    for v in u.iter().filter(|v| v.abs() > cut) {
        let positive = *v > 0.0;
        if let Some(prev) = last {
            if prev != positive {
                count += 1;
            }
        }
        last = Some(positive);
    }
    count
}

/// A discrete profile together with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub u: Vec<f64>,
    /// Low-order parts: the profile is the unevaluated sum `u + u_lo`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub u_lo: Vec<f64>,
    pub residual: f64,
    pub i_value: f64,
    pub e_value: f64,
    pub sign_changes: usize,
    /// Provenance tag, e.g. `mountain_pass+newton`.
    pub solver: String,
    pub iterations: usize,
    pub converged: bool,
    /// Converged to (numerically) the zero solution.
    pub trivial: bool,
}

impl SolutionRecord {
    /// Evaluates all diagnostics of `u`.
    pub fn evaluate(
        op: &DiscreteOperator,
        u: Vec<f64>,
        solver: impl Into<String>,
        iterations: usize,
        tol_residual: f64,
    ) -> Result<Self> {
        Self::evaluate_split(op, u, Vec::new(), solver, iterations, tol_residual)
    }

    /// As [`SolutionRecord::evaluate`] for the pair `hi + lo` (`lo` empty means zero).
    pub fn evaluate_split(
        op: &DiscreteOperator,
        u: Vec<f64>,
        u_lo: Vec<f64>,
        solver: impl Into<String>,
        iterations: usize,
        tol_residual: f64,
    ) -> Result<Self> {
        let residual = if u_lo.is_empty() {
            residual(op, &u)?
        } else {
            residual_split(op, &u, &u_lo)?
        };
        let i_value = functional_i(op, &u)?;
        let e_value = energy(op, &u)?;
        let trivial = op.grid.norm(&u) <= 1e-10 * op.grid.total_weight().sqrt();
        Ok(Self {
            sign_changes: sign_changes(&u),
            u,
            u_lo,
            residual,
            i_value,
            e_value,
            solver: solver.into(),
            iterations,
            converged: residual < tol_residual,
            trivial,
        })
    }

    /// `|I − (½ − 1/(q+1))E| / max(1, E)`, which vanishes at exact solutions.
    pub fn identity_defect(&self, q: f64) -> f64 {
        (self.i_value - (0.5 - 1.0 / (q + 1.0)) * self.e_value).abs() / self.e_value.max(1.0)
    }
}

/// `(Σ|u|^{q+1}w)^{1/(q+1)} / ⟨Bu,u⟩_w^{1/2}`.
pub fn embedding_ratio(op: &DiscreteOperator, u: &[f64]) -> Result<f64> {
    op.grid.check(u)?;
    let q = op.q();
    let num = op.grid.power_sum(u, q + 1.0).powf(1.0 / (q + 1.0));
    let den = op.norm_b(u);
    if den == 0.0 {
        return Err(invalid("embedding ratio of the zero vector"));
    }
    Ok(num / den)
}

/// Result of [`sobolev_ascent`].
#[derive(Debug, Clone)]
pub struct Ascent {
    /// Maximizer, normalized to `⟨Bu,u⟩_w = 1`.
    pub u: Vec<f64>,
    /// `Σ|u|^{q+1}w` at the maximizer.
    pub power: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `F` never decreased by more than rounding along the iteration.
    pub monotone: bool,
}

/// Maximizes `F(u) = Σ|u|^{q+1}w` over `{⟨Bu,u⟩_w = 1}` intersected with the
/// range of `project` (a w-orthogonal projector commuting with `B`).
///
/// Each sweep is the preconditioned gradient step
/// `u ← P B⁻¹ P(|u|^{q−1}u)` followed by renormalization. Because `F` is convex
/// this is a conditional-gradient step on the ellipsoid and `F` is
/// non-decreasing along the iterates.
pub fn sobolev_ascent(
    op: &DiscreteOperator,
    start: &[f64],
    project: impl Fn(&mut [f64]),
    max_iter: usize,
    tol: f64,
) -> Result<Ascent> {
    op.grid.check(start)?;
    let q = op.q();
    let mut u = start.to_vec();
    project(&mut u);
    let nrm = op.norm_b(&u);
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(invalid("ascent start vanishes after projection"));
    }
    u.iter_mut().for_each(|v| *v /= nrm);
    let mut power = op.grid.power_sum(&u, q + 1.0);
    let mut monotone = true;
    let mut quiet = 0;
    for it in 1..=max_iter {
        let mut rhs = nonlinearity(&u, q);
        project(&mut rhs);
        let mut next = op.solve(&rhs)?;
        project(&mut next);
        let nrm = op.norm_b(&next);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(invalid("ascent collapsed to zero"));
        }
        next.iter_mut().for_each(|v| *v /= nrm);
        let next_power = op.grid.power_sum(&next, q + 1.0);
        if next_power < power * (1.0 - 1e-12) {
            monotone = false;
        }
        let change = (next_power - power).abs() / power;
        u = next;
        power = next_power;
        if change < tol {
            quiet += 1;
            if quiet >= 3 {
                return Ok(Ascent {
                    u,
                    power,
                    iterations: it,
                    converged: true,
                    monotone,
                });
            }
        } else {
            quiet = 0;
        }
    }
    Ok(Ascent {
        u,
        power,
        iterations: max_iter,
        converged: false,
        monotone,
    })
}

/// Uniform white noise in `[-1, 1]` on every cell.
pub(crate) fn random_start(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Lower bound for the best constant in `|u|_{q+1} ≤ C·⟨Bu,u⟩^{1/2}`: the
/// largest ratio reached by [`sobolev_ascent`] from `trials` seeded random
/// starts (the constant function is always included as a candidate).
pub fn embedding_constant_probe(op: &DiscreteOperator, trials: usize, seed: u64) -> Result<f64> {
    let n = op.len();
    let mut best = embedding_ratio(op, &vec![1.0; n])?;
    let q = op.q();
    for trial in 0..trials {
        let mut rng = task_rng(seed, &[0x70_72_6f_62, trial as u64]);
        let start = random_start(n, &mut rng);
        let run = sobolev_ascent(op, &start, |_| {}, 2000, 1e-13)?;
        best = best.max(run.power.powf(1.0 / (q + 1.0)));
    }
    Ok(best)
}
