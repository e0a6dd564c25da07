//! Radial shooting for `Δ²w = |w|^{q−1}w` in `ℝ^s` (`w⁗ = |w|^{q−1}w` when `s = 1`).
//!
//! The fourth-order radial equation is integrated as the system
//! `w″ = v − (s−1)w′/r`, `v″ = |w|^{q−1}w − (s−1)v′/r` with `v = Δw`, from regular
//! data `w(0) = 1`, `w′(0) = w‴(0) = 0`, `w″(0) = γ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Radius at which the Taylor starter hands over to the integrator.
pub const START_RADIUS: f64 = 1e-3;
/// `|w|` above which a shot is classified as blowing up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "radius", rename_all = "snake_case")]
pub enum Classification {
    /// First zero of `w`.
    SignChange(f64),
    /// Radius where `|w|` crossed the blow-up threshold.
    BlowUp(f64),
    /// Stayed positive and bounded up to this horizon.
    PositiveToHorizon(f64),
    /// Step size underflowed at this radius.
    IntegrationFailure(f64),
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Self::SignChange(_) => "sign_change",
            Self::BlowUp(_) => "blow_up",
            Self::PositiveToHorizon(_) => "positive_to_horizon",
            Self::IntegrationFailure(_) => "integration_failure",
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            Self::SignChange(r) | Self::BlowUp(r) | Self::PositiveToHorizon(r) | Self::IntegrationFailure(r) => r,
        }
    }
}

/// `(r, w, w′, w″, w‴)` at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub r: f64,
    pub w: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingOutcome {
    pub s: usize,
    pub q: f64,
    pub gamma: f64,
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TracePoint>>,
}

type State = [f64; 4];

#[derive(Debug, Clone, Copy)]
struct Rhs {
    /// `s − 1`; zero gives the one-dimensional equation.
    curvature: f64,
    q: f64,
}

impl Rhs {
    fn eval(&self, r: f64, y: &State) -> State {
        let [w, w1, v, v1] = *y;
        let k = self.curvature / r;
        [w1, v - k * w1, v1, w.abs().powf(self.q - 1.0) * w - k * v1]
    }

    fn trace_point(&self, r: f64, y: &State) -> TracePoint {
        let [w, w1, v, v1] = *y;
        let c = self.curvature;
        let w2 = v - c * w1 / r;
        TracePoint {
            r,
            w,
            w1,
            w2,
            w3: v1 - c * (w2 / r - w1 / (r * r)),
        }
    }
}

/// Regular radial expansion about the origin, accurate to `O(r⁴)` in `w`.
fn taylor_start(s: usize, gamma: f64, r: f64) -> State {
    let s = s as f64;
    let c4 = 1.0 / (8.0 * s * (s + 2.0));
    [
        1.0 + 0.5 * gamma * r * r + c4 * r.powi(4),
        gamma * r + 4.0 * c4 * r.powi(3),
        s * gamma + r * r / (2.0 * s),
        r / s,
    ]
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Continuous extension of one accepted step.
#[derive(Debug, Clone, Copy)]
struct Dense {
    r0: f64,
    h: f64,
    coef: [State; 5],
}

impl Dense {
    fn eval(&self, r: f64) -> State {
        let th = (r - self.r0) / self.h;
        let th1 = 1.0 - th;
        let c = &self.coef;
        std::array::from_fn(|i| c[0][i] + th * (c[1][i] + th1 * (c[2][i] + th * (c[3][i] + th1 * c[4][i]))))
    }
}

struct Stepper {
    rhs: Rhs,
    tol: f64,
}

struct Step {
    y: State,
    k_last: State,
    err: f64,
    dense: Dense,
}

impl Stepper {
    fn step(&self, r: f64, y: &State, k1: &State, h: f64) -> Step {
        let mut k = [[0.0; 4]; 7];
        k[0] = *k1;
        for stage in 1..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(stage) {
                let a = A[stage][j];
                if a != 0.0 {
                    for i in 0..4 {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k[stage] = self.rhs.eval(r + C[stage] * h, &ys);
        }
        let mut y1 = *y;
        for (j, kj) in k.iter().enumerate().take(6) {
            for i in 0..4 {
                y1[i] += h * A[6][j] * kj[i];
            }
        }
        let mut err = 0.0;
        for i in 0..4 {
            let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * h;
            let sc = self.tol * (1.0 + y[i].abs().max(y1[i].abs()));
            err += (e / sc).powi(2);
        }
        let mut coef = [[0.0; 4]; 5];
        for i in 0..4 {
            let diff = y1[i] - y[i];
            let bspl = h * k[0][i] - diff;
            coef[0][i] = y[i];
            coef[1][i] = diff;
            coef[2][i] = bspl;
            coef[3][i] = diff - h * k[6][i] - bspl;
            coef[4][i] = h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>();
        }
        Step {
            y: y1,
            k_last: k[6],
            err: (err / 4.0).sqrt(),
            dense: Dense { r0: r, h, coef },
        }
    }
}

/// Piecewise dense solution on `[r_start, r_end]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    rhs_curvature: f64,
    q: f64,
    segments: Vec<Dense>,
    pub classification: Classification,
}

impl Trajectory {
    pub fn start(&self) -> f64 {
        self.segments.first().map_or(START_RADIUS, |d| d.r0)
    }

    /// Last radius covered (the event radius when one fired).
    pub fn end(&self) -> f64 {
        self.classification.radius()
    }

    /// `(r, w, w′, w″, w‴)` from the dense output; `None` outside the covered range.
    pub fn eval(&self, r: f64) -> Option<TracePoint> {
        if self.segments.is_empty() || r < self.start() || r > self.end() {
            return None;
        }
        let idx = self.segments.partition_point(|d| d.r0 + d.h < r).min(self.segments.len() - 1);
        let y = self.segments[idx].eval(r);
        let rhs = Rhs {
            curvature: self.rhs_curvature,
            q: self.q,
        };
        Some(rhs.trace_point(r, &y))
    }
}

fn integrate(s: usize, q: f64, gamma: f64, r_max: f64, tol: f64, r0: f64, keep: bool) -> Result<(Trajectory, Vec<TracePoint>)> {
    if s == 0 {
        return Err(invalid("dimension s must be at least 1"));
    }
    let rhs = Rhs {
        curvature: s as f64 - 1.0,
        q,
    };
    integrate_rhs(rhs, s, gamma, r_max, tol, r0, keep)
}

fn integrate_rhs(
    rhs: Rhs,
    s: usize,
    gamma: f64,
    r_max: f64,
    tol: f64,
    r0: f64,
    keep: bool,
) -> Result<(Trajectory, Vec<TracePoint>)> {
    let q = rhs.q;
    if !(q > 1.0) {
        return Err(invalid(format!("shooting requires q > 1, got {q}")));
    }
    if !(r_max > r0 && r_max.is_finite()) {
        return Err(invalid(format!("horizon must exceed {r0}, got {r_max}")));
    }
    if !(tol > 0.0 && tol < 1.0) || !gamma.is_finite() {
        return Err(invalid("tolerance must lie in (0, 1) and gamma must be finite"));
    }
    let stepper = Stepper { rhs, tol };
    let mut r = r0;
    let mut y = taylor_start(s, gamma, r0);
    let mut k1 = rhs.eval(r, &y);
    let mut h = (0.01 * r_max).min(0.1);
    let mut segments = Vec::new();
    let mut trace = Vec::new();
    if keep {
        trace.push(rhs.trace_point(r, &y));
    }
    let done = |segments: Vec<Dense>, c| Trajectory {
        rhs_curvature: rhs.curvature,
        q,
        segments,
        classification: c,
    };
    loop {
        h = h.min(r_max - r);
        if h <= 1e-14 * r.max(1.0) {
            return Err(Error::IntegrationFailure { radius: r });
        }
        let st = stepper.step(r, &y, &k1, h);
        let finite = st.y.iter().all(|v| v.is_finite());
        if !finite || st.err > 1.0 {
            let fac = if finite { (0.9 * st.err.powf(-0.2)).max(0.2) } else { 0.2 };
            h *= fac;
            continue;
        }
        let r1 = r + h;
        segments.push(st.dense);
        if st.y[0] <= 0.0 {
            let root = bracket_root(&st.dense, r, r1);
            if keep {
                trace.push(rhs.trace_point(root, &st.dense.eval(root)));
            }
            return Ok((done(segments, Classification::SignChange(root)), trace));
        }
        if st.y[0].abs() > BLOW_UP_THRESHOLD {
            let root = bracket_level(&st.dense, r, r1, BLOW_UP_THRESHOLD);
            if keep {
                trace.push(rhs.trace_point(root, &st.dense.eval(root)));
            }
            return Ok((done(segments, Classification::BlowUp(root)), trace));
        }
        r = r1;
        y = st.y;
        k1 = st.k_last;
        if keep {
            trace.push(rhs.trace_point(r, &y));
        }
        if r >= r_max {
            return Ok((done(segments, Classification::PositiveToHorizon(r_max)), trace));
        }
        h *= (0.9 * st.err.max(1e-10).powf(-0.2)).min(5.0);
    }
}

/// First zero of `w` in `[a, b]` given `w(a) > 0 ≥ w(b)` on the dense output.
fn bracket_root(d: &Dense, a: f64, b: f64) -> f64 {
    bracket_level(d, a, b, 0.0)
}

/// Radius in `[a, b]` where `w` crosses `level`, by bisection on the dense output.
fn bracket_level(d: &Dense, mut a: f64, mut b: f64, level: f64) -> f64 {
    let below = |r: f64| d.eval(r)[0] - level <= 0.0;
    let start_below = below(a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if below(mid) == start_below {
            a = mid;
        } else {
            b = mid;
        }
    }
    b
}

fn outcome(s: usize, q: f64, gamma: f64, c: Classification, trace: Option<Vec<TracePoint>>) -> ShootingOutcome {
    ShootingOutcome {
        s,
        q,
        gamma,
        classification: c,
        trace,
    }
}

/// Classifies the regular radial solution with `w″(0) = γ` up to `r_max`.
pub fn shoot(s: usize, q: f64, gamma: f64, r_max: f64, tol: f64) -> Result<ShootingOutcome> {
    let (t, _) = integrate(s, q, gamma, r_max, tol, START_RADIUS, false)?;
    Ok(outcome(s, q, gamma, t.classification, None))
}

/// As [`shoot`], keeping every accepted step.
pub fn shoot_with_trace(s: usize, q: f64, gamma: f64, r_max: f64, tol: f64) -> Result<ShootingOutcome> {
    let (t, trace) = integrate(s, q, gamma, r_max, tol, START_RADIUS, true)?;
    Ok(outcome(s, q, gamma, t.classification, Some(trace)))
}

/// Dense solution for evaluation at arbitrary radii.
pub fn trajectory(s: usize, q: f64, gamma: f64, r_max: f64, tol: f64) -> Result<Trajectory> {
    integrate(s, q, gamma, r_max, tol, START_RADIUS, false).map(|(t, _)| t)
}

/// State at `START_RADIUS` reached by integrating from a smaller starting radius.
pub fn starter_consistency(s: usize, q: f64, gamma: f64, r_from: f64, tol: f64) -> Result<f64> {
    let rhs = Rhs {
        curvature: s as f64 - 1.0,
        q,
    };
    let (t, _) = integrate(s, q, gamma, START_RADIUS, tol, r_from, false)?;
    let want = rhs.trace_point(START_RADIUS, &taylor_start(s, gamma, START_RADIUS));
    let got = t.eval(START_RADIUS).expect("end of range");
    Ok((got.w - want.w).abs())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillationSweep {
    pub s: usize,
    pub q: f64,
    pub r_max: f64,
    pub outcomes: Vec<ShootingOutcome>,
}

impl OscillationSweep {
    /// Fraction of shots classified `sign_change`.
    pub fn sign_change_fraction(&self) -> f64 {
        let hits = self
            .outcomes
            .iter()
            .filter(|o| matches!(o.classification, Classification::SignChange(_)))
            .count();
        hits as f64 / self.outcomes.len() as f64
    }
}

/// `count` equispaced values covering `[a, b]`.
pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// One shot per `γ`; step-size underflow is recorded as `integration_failure`.
pub fn oscillation_sweep(s: usize, q: f64, gammas: &[f64], r_max: f64, tol: f64) -> Result<OscillationSweep> {
    if gammas.is_empty() {
        return Err(invalid("gamma grid is empty"));
    }
    let outcomes = gammas
        .par_iter()
        .map(|&g| match shoot(s, q, g, r_max, tol) {
            Err(Error::IntegrationFailure { radius }) => Ok(outcome(s, q, g, Classification::IntegrationFailure(radius), None)),
            other => other,
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OscillationSweep { s, q, r_max, outcomes })
}
