//! Critical points of `I`: damped Newton, a path-deformation mountain pass,
//! and the constrained levels `d_m` over `T ∩ E_m^⊥`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compensated::{accumulate, residual_vector};
use crate::discretize::{eigenbasis, DiscreteOperator, Eigenbasis};
use crate::error::{invalid, Result};
use crate::seed::task_rng;
use crate::variational::{
    functional_i, gradient_i, nehari_scale, random_start, ray_maximizer, residual, sobolev_ascent,
    SolutionRecord,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Iteration cap for the path deformation and for each constrained ascent.
    pub max_iter: usize,
    pub tol_residual: f64,
    /// First trial step of the Newton line search.
    pub newton_damping: f64,
    pub mpa_path_points: usize,
    /// Initial path-point move, relative to the point's B-norm.
    pub mpa_step: f64,
    pub dm_max_m: usize,
    pub seed: u64,
    /// Random restarts per `d_m`.
    pub seeds: usize,
    pub newton_max_iter: usize,
    /// Residual at which the mountain pass hands its point to Newton.
    pub mpa_tol: f64,
    /// Relative stagnation of the constrained ascent.
    pub dm_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol_residual: 1e-8,
            newton_damping: 1.0,
            mpa_path_points: 21,
            mpa_step: 0.1,
            dm_max_m: 8,
            seed: 0,
            seeds: 20,
            newton_max_iter: 60,
            mpa_tol: 1e-4,
            dm_tol: 1e-14,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_residual", self.tol_residual),
            ("mpa_step", self.mpa_step),
            ("mpa_tol", self.mpa_tol),
            ("dm_tol", self.dm_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.newton_damping > 0.0 && self.newton_damping <= 1.0) {
            return Err(invalid(format!(
                "newton_damping must lie in (0, 1], got {}",
                self.newton_damping
            )));
        }
        if self.mpa_path_points < 3 {
            return Err(invalid(format!(
                "mpa_path_points must be at least 3, got {}",
                self.mpa_path_points
            )));
        }
        if self.seeds == 0 || self.max_iter == 0 || self.newton_max_iter == 0 {
            return Err(invalid("seeds, max_iter and newton_max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Per-iteration data of a Newton run.
#[derive(Debug, Clone, Default)]
pub struct NewtonTrace {
    /// Residual before the first step and after every accepted step.
    pub residuals: Vec<f64>,
    /// Steps taken with a shifted Jacobian.
    pub shifted: usize,
}

pub fn newton_refine(op: &DiscreteOperator, u0: &[f64], cfg: &SolverConfig) -> Result<SolutionRecord> {
    newton_refine_traced(op, u0, cfg).map(|(r, _)| r)
}

/// Damped Newton on `F(u) = Bu − |u|^{q−1}u`.
///
/// The iterate is the pair `hi + lo`; `F` is evaluated in double-word
/// arithmetic and the correction solved in working precision.
pub fn newton_refine_traced(
    op: &DiscreteOperator,
    u0: &[f64],
    cfg: &SolverConfig,
) -> Result<(SolutionRecord, NewtonTrace)> {
    cfg.validate()?;
    op.grid.check(u0)?;
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("Newton start is not finite"));
    }
    let q = op.q();
    let n = op.len();
    let norm_b = op.paneitz.max_abs();
    let mut hi = u0.to_vec();
    let mut lo = vec![0.0; n];
    let mut f = residual_vector(op, &hi, &lo);
    let mut r = op.grid.norm(&f);
    let mut trace = NewtonTrace {
        residuals: vec![r],
        shifted: 0,
    };
    let mut iterations = 0;
    while r >= cfg.tol_residual && iterations < cfg.newton_max_iter {
        iterations += 1;
        let mut jac = op.paneitz.clone();
        let diag: Vec<f64> = hi.iter().map(|v| -q * v.abs().powf(q - 1.0)).collect();
        jac.add_diagonal(&diag);
        let lu = match jac.lu() {
            Ok(lu) if lu.pivot_ratio() > 1e-15 => lu,
            _ => {
                trace.shifted += 1;
                jac.shift(1e-8 * norm_b);
                jac.lu().map_err(|e| invalid(format!("shifted Jacobian still singular: {e}")))?
            }
        };
        let mut delta: Vec<f64> = f.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut delta);

        let mut step = cfg.newton_damping;
        let mut accepted = None;
        for _ in 0..40 {
            let (mut th, mut tl) = (hi.clone(), lo.clone());
            let scaled: Vec<f64> = delta.iter().map(|d| step * d).collect();
            accumulate(&mut th, &mut tl, &scaled);
            let tf = residual_vector(op, &th, &tl);
            let tr = op.grid.norm(&tf);
            if tr < (1.0 - 1e-4 * step) * r {
                accepted = Some((th, tl, tf, tr));
                break;
            }
            step *= 0.5;
        }
        let Some((th, tl, tf, tr)) = accepted else {
            break;
        };
        hi = th;
        lo = tl;
        f = tf;
        r = tr;
        trace.residuals.push(r);
    }
    let record = SolutionRecord::evaluate_split(op, hi, lo, "newton", iterations, cfg.tol_residual)?;
    Ok((record, trace))
}

/// Result of [`mountain_pass`].
#[derive(Debug, Clone)]
pub struct MountainPass {
    pub record: SolutionRecord,
    /// Maximum of `I` over the path nodes, one entry per deformation step.
    pub path_max: Vec<f64>,
    pub deformation_steps: usize,
}

/// Path-deformation mountain pass from the segment `0 → e`.
///
/// The path node carrying the maximum of `I` is moved along the Sobolev
/// gradient `B⁻¹∇I`; a move is kept only if it lowers `I` at the node and
/// the midpoints to both neighbours stay below the previous maximum, so the
/// path maximum never increases. Long segments are bisected. Once the
/// maximizing node has residual below `mpa_tol` it is polished by Newton.
pub fn mountain_pass(op: &DiscreteOperator, e: &[f64], cfg: &SolverConfig) -> Result<MountainPass> {
    cfg.validate()?;
    op.grid.check(e)?;
    let ie = functional_i(op, e)?;
    if !(ie < 0.0) {
        return Err(invalid(format!("mountain pass needs I(e) < 0, got {ie}")));
    }
    let k = cfg.mpa_path_points - 1;
    let mut path: Vec<Vec<f64>> = (0..=k)
        .map(|i| e.iter().map(|v| v * i as f64 / k as f64).collect())
        .collect();
    let mut values: Vec<f64> = path.iter().map(|p| functional_i(op, p)).collect::<Result<_>>()?;
    let mut steps: Vec<f64> = vec![cfg.mpa_step; path.len()];
    let segment_cap = 2.0 * op.norm_b(e) / k as f64;
    let max_nodes = 8 * cfg.mpa_path_points;

    let mut path_max = Vec::new();
    let mut deformation_steps = 0;
    let mut candidate = None;
    for _ in 0..cfg.max_iter {
        let (imax, &vmax) = values[1..values.len() - 1]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i + 1, v))
            .expect("path has interior nodes");
        path_max.push(vmax);
        let p = &path[imax];
        if residual(op, p)? < cfg.mpa_tol {
            candidate = Some(p.clone());
            break;
        }
        deformation_steps += 1;
        let g = gradient_i(op, p)?;
        let dir = op.solve(&g)?;
        let dir_norm = op.norm_b(&dir);
        let p_norm = op.norm_b(p);
        let mut moved = false;
        for _ in 0..60 {
            let len = (steps[imax] * p_norm).min(dir_norm);
            let trial: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a - len / dir_norm * d).collect();
            let it = functional_i(op, &trial)?;
            let ok = it < vmax
                && [imax - 1, imax + 1].iter().all(|&nb| {
                    let mid: Vec<f64> = trial.iter().zip(&path[nb]).map(|(a, b)| 0.5 * (a + b)).collect();
                    functional_i(op, &mid).map(|v| v <= vmax).unwrap_or(false)
                });
            if ok {
                path[imax] = trial;
                values[imax] = it;
                steps[imax] = (steps[imax] * 1.5).min(1.0);
                moved = true;
                break;
            }
            steps[imax] *= 0.5;
        }
        if !moved {
            // no admissible move: the node is as low as this path allows
            candidate = Some(path[imax].clone());
            break;
        }
        for nb in [imax + 1, imax] {
            if path.len() >= max_nodes {
                break;
            }
            let d: Vec<f64> = path[nb].iter().zip(&path[nb - 1]).map(|(a, b)| a - b).collect();
            if op.norm_b(&d) > segment_cap {
                let mid: Vec<f64> = path[nb].iter().zip(&path[nb - 1]).map(|(a, b)| 0.5 * (a + b)).collect();
                let vm = functional_i(op, &mid)?;
                path.insert(nb, mid);
                values.insert(nb, vm);
                steps.insert(nb, cfg.mpa_step);
            }
        }
    }
    let (start, tag) = match candidate {
        Some(u) => (u, "mountain_pass+newton"),
        None => {
            let (imax, _) = values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty path");
            (path[imax].clone(), "mountain_pass(stalled)+newton")
        }
    };
    let mut record = newton_refine(op, &start, cfg)?;
    record.solver = tag.to_string();
    record.iterations += deformation_steps;
    Ok(MountainPass {
        record,
        path_max,
        deformation_steps,
    })
}

/// Result of [`dm_minimize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmOutcome {
    pub m: usize,
    /// Smallest `⟨Bu,u⟩_w` found over `T ∩ E_m^⊥`.
    pub d_m: f64,
    /// The minimizer itself, lying on `T`.
    pub raw: SolutionRecord,
    /// Newton refinement started from the Nehari point on the minimizer's ray.
    pub refined: SolutionRecord,
    /// `d_m` reached by each restart, in seed order.
    pub levels: Vec<f64>,
    /// `(max − min)/min` of `levels`.
    pub spread: f64,
    /// The refined record has a component in `E_m` above `1e-6` relative.
    pub escaped: bool,
    /// Every restart met the ascent stagnation test.
    pub ascent_converged: bool,
}

impl DmOutcome {
    /// Restart spread above 1 % indicates competing local minimizers.
    pub fn spread_warning(&self) -> bool {
        self.spread > 0.01
    }
}

/// `d_m = inf{⟨Bu,u⟩_w : u ∈ T, u ⊥_w e_1..e_m}` over `cfg.seeds` restarts.
///
/// On `T` the form equals `2/(q+1)·Σ|u|^{q+1}w`, so the problem is the
/// maximization of `Σ|u|^{q+1}w` on the unit B-ellipsoid inside `E_m^⊥`,
/// solved by [`sobolev_ascent`] with the projector onto `E_m^⊥` applied at every
/// sweep, then rescaled onto `T`.
pub fn dm_minimize(op: &DiscreteOperator, m: usize, cfg: &SolverConfig) -> Result<DmOutcome> {
    cfg.validate()?;
    if m >= op.len() {
        return Err(invalid(format!("m = {m} must be below the grid size {}", op.len())));
    }
    let basis = eigenbasis(&op.grid, m.max(1))?;
    dm_with_basis(op, m, &basis, cfg)
}

fn dm_with_basis(op: &DiscreteOperator, m: usize, basis: &Eigenbasis, cfg: &SolverConfig) -> Result<DmOutcome> {
    let q = op.q();
    let n = op.len();
    // warm the shared factorization before fanning out
    op.solve(&vec![0.0; n])?;
    let runs = (0..cfg.seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = task_rng(cfg.seed, &[m as u64, s as u64]);
            let start = random_start(n, &mut rng);
            sobolev_ascent(op, &start, |u| basis.project_out(u, m), cfg.max_iter, cfg.dm_tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let level = |power: f64| ((q + 1.0) / (2.0 * power)).powf(2.0 / (q - 1.0));
    let levels: Vec<f64> = runs.iter().map(|r| level(r.power)).collect();
    let (best, d_m) = levels
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("at least one restart");
    let hi = levels.iter().cloned().fold(f64::MIN, f64::max);
    let v = &runs[best].u;

    let a = nehari_scale(op, v)?;
    let raw_u: Vec<f64> = v.iter().map(|x| a * x).collect();
    let raw = SolutionRecord::evaluate(op, raw_u, format!("dm{m}"), runs[best].iterations, cfg.tol_residual)?;

    let t = ray_maximizer(op, v)?;
    let start: Vec<f64> = v.iter().map(|x| t * x).collect();
    let mut refined = newton_refine(op, &start, cfg)?;
    refined.solver = format!("dm{m}+newton");
    let escaped = m > 0 && basis.leakage(&refined.u, m) > 1e-6;
    Ok(DmOutcome {
        m,
        d_m,
        raw,
        refined,
        spread: (hi - d_m) / d_m,
        levels,
        escaped,
        ascent_converged: runs.iter().all(|r| r.converged),
    })
}

/// Result of [`high_energy_sweep`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sweep {
    /// One entry per `m = 0..=dm_max_m`.
    pub rows: Vec<DmOutcome>,
    /// Refined records, deduplicated (with `u ~ −u`) and sorted by `I`.
    pub records: Vec<SolutionRecord>,
}

/// Runs [`dm_minimize`] for `m = 0..=cfg.dm_max_m` and collects the distinct
/// Newton-refined profiles.
pub fn high_energy_sweep(op: &DiscreteOperator, cfg: &SolverConfig) -> Result<Sweep> {
    cfg.validate()?;
    let top = cfg.dm_max_m;
    if top >= op.len() {
        return Err(invalid(format!("dm_max_m = {top} must be below the grid size {}", op.len())));
    }
    let basis = eigenbasis(&op.grid, top.max(1))?;
    let rows = (0..=top)
        .into_par_iter()
        .map(|m| dm_with_basis(op, m, &basis, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut records: Vec<SolutionRecord> = Vec::new();
    for row in &rows {
        if !records.iter().any(|r| same_profile(op, r, &row.refined)) {
            records.push(row.refined.clone());
        }
    }
    records.sort_by(|a, b| a.i_value.total_cmp(&b.i_value));
    Ok(Sweep { rows, records })
}

/// Relative w-distance below `1e-6`, identifying `u` with `−u`.
fn same_profile(op: &DiscreteOperator, a: &SolutionRecord, b: &SolutionRecord) -> bool {
    let g = &op.grid;
    let scale = g.norm(&a.u).max(g.norm(&b.u));
    if scale == 0.0 {
        return true;
    }
    let diff: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
    let sum: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x + y).collect();
    g.norm(&diff).min(g.norm(&sum)) < 1e-6 * scale
}
