//! Isoparametric foliations reduced to one-dimensional data, and the
//! dimension-dependent constants of the Paneitz-type problem.
//!
//! A proper isoparametric function on a closed manifold `M^n` is encoded by the
//! distance `t ∈ (0, D)` to the first focal variety, the level-set volume
//! `A(t)` and the mean curvature `h(t) = (log A)'(t)`. Near a focal variety of
//! dimension `m` the level sets are tubes, so `A(t) ~ t^{n-m-1}`.

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::spline::CubicSpline;

/// How `log A` is evaluated.
#[derive(Debug, Clone)]
pub enum ProfileShape {
    /// Distance to a point on the round `S^n`: `A = sin^{n-1} t` on `(0, π)`.
    SpherePoint,
    /// Distance to a totally geodesic `S^k ⊂ S^n`: `A = cos^k t · sin^{n-k-1} t` on `(0, π/2)`.
    SphereSubsphere { k: usize },
    /// Tabulated `log A`; the spline carries the regular part
    /// `log A − p0·log t − p1·log(D − t)`.
    Tabulated { regular: CubicSpline },
}

#[derive(Debug, Clone)]
pub struct FoliationProfile {
    pub name: String,
    /// Ambient dimension.
    pub n: usize,
    /// Dimension of the focal variety at `t = 0`.
    pub m0: usize,
    /// Dimension of the focal variety at `t = length`.
    pub m1: usize,
    /// Distance `D` between the focal varieties.
    pub length: f64,
    pub shape: ProfileShape,
}

impl FoliationProfile {
    /// Tube exponents `(n − m0 − 1, n − m1 − 1)`.
    fn exponents(&self) -> (f64, f64) {
        (
            self.n as f64 - self.m0 as f64 - 1.0,
            self.n as f64 - self.m1 as f64 - 1.0,
        )
    }

    pub fn log_volume(&self, t: f64) -> f64 {
        match &self.shape {
            ProfileShape::SpherePoint => (self.n as f64 - 1.0) * t.sin().ln(),
            ProfileShape::SphereSubsphere { k } => {
                let k = *k as f64;
                k * t.cos().ln() + (self.n as f64 - k - 1.0) * t.sin().ln()
            }
            ProfileShape::Tabulated { regular } => {
                let (p0, p1) = self.exponents();
                regular.value(t) + p0 * t.ln() + p1 * (self.length - t).ln()
            }
        }
    }

    /// Level-set volume `A(t)`; zero at and beyond the focal ends.
    pub fn volume(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.length {
            return 0.0;
        }
        self.log_volume(t).exp()
    }

    /// Mean curvature `h(t)` of the level set at distance `t`.
    pub fn mean_curvature(&self, t: f64) -> f64 {
        match &self.shape {
            ProfileShape::SpherePoint => (self.n as f64 - 1.0) / t.tan(),
            ProfileShape::SphereSubsphere { k } => {
                let k = *k as f64;
                (self.n as f64 - k - 1.0) / t.tan() - k * t.tan()
            }
            ProfileShape::Tabulated { regular } => {
                let (p0, p1) = self.exponents();
                regular.derivative(t) + p0 / t - p1 / (self.length - t)
            }
        }
    }

    /// `min(m0, m1)`.
    pub fn min_focal_dimension(&self) -> usize {
        self.m0.min(self.m1)
    }

    /// Samples of `(t, log A)` on `count` interior midpoints, for export.
    pub fn samples(&self, count: usize) -> Vec<(f64, f64)> {
        let dt = self.length / count as f64;
        (0..count)
            .map(|j| {
                let t = (j as f64 + 0.5) * dt;
                (t, self.log_volume(t))
            })
            .collect()
    }
}

/// Constructs one of the shipped sphere foliations.
pub fn builtin_profile(name: &str, n: usize, k: Option<usize>) -> Result<FoliationProfile> {
    if n < 5 {
        return Err(invalid(format!("ambient dimension n = {n} must be at least 5")));
    }
    match name {
        "sphere_point" => Ok(FoliationProfile {
            name: name.to_string(),
            n,
            m0: 0,
            m1: 0,
            length: std::f64::consts::PI,
            shape: ProfileShape::SpherePoint,
        }),
        "sphere_subsphere" => {
            let k = k.ok_or_else(|| invalid("sphere_subsphere needs k"))?;
            if k < 1 || k > n - 2 {
                return Err(invalid(format!("k = {k} outside 1..={}", n - 2)));
            }
            Ok(FoliationProfile {
                name: format!("{name}_k{k}"),
                n,
                m0: k,
                m1: n - k - 1,
                length: std::f64::consts::FRAC_PI_2,
                shape: ProfileShape::SphereSubsphere { k },
            })
        }
        other => Err(Error::UnknownProfile(other.to_string())),
    }
}

/// Names accepted by [`builtin_profile`].
pub const BUILTIN_PROFILES: [&str; 2] = ["sphere_point", "sphere_subsphere"];

/// Builds a profile from tabulated `(t, log A)` pairs.
///
/// The leading tube powers `t^{n-m0-1}` and `(D-t)^{n-m1-1}` are divided out
/// before interpolation, so `h` has the right poles by construction. Data whose
/// end behaviour contradicts the declared focal dimensions is rejected.
pub fn load_profile(
    name: &str,
    samples: &[(f64, f64)],
    n: usize,
    m0: usize,
    m1: usize,
    length: f64,
) -> Result<FoliationProfile> {
    if samples.len() < 4 {
        return Err(Error::InvalidProfile(format!(
            "need at least 4 samples, got {}",
            samples.len()
        )));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidProfile(format!("interval length {length} must be positive")));
    }
    if n < 5 {
        return Err(Error::InvalidProfile(format!("n = {n} must be at least 5")));
    }
    if m0 > n - 2 || m1 > n - 2 {
        return Err(Error::InvalidProfile(format!(
            "focal dimensions ({m0}, {m1}) exceed n - 2 = {}",
            n - 2
        )));
    }
    for w in samples.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::InvalidProfile(format!(
                "t grid not strictly increasing at t = {}",
                w[1].0
            )));
        }
    }
    for &(t, la) in samples {
        if !(t > 0.0 && t < length) || !la.is_finite() {
            return Err(Error::InvalidProfile(format!("sample ({t}, {la}) outside (0, D) or not finite")));
        }
    }

    let p0 = n as f64 - m0 as f64 - 1.0;
    let p1 = n as f64 - m1 as f64 - 1.0;
    let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let regular: Vec<f64> = samples
        .iter()
        .map(|&(t, la)| la - p0 * t.ln() - p1 * (length - t).ln())
        .collect();

    // Leftover singular power at each end: t·g' should vanish as t → 0.
    let k = ts.len();
    let left = {
        let tm = 0.5 * (ts[0] + ts[1]);
        tm * (regular[1] - regular[0]) / (ts[1] - ts[0])
    };
    let right = {
        let tm = 0.5 * (ts[k - 2] + ts[k - 1]);
        (length - tm) * (regular[k - 1] - regular[k - 2]) / (ts[k - 1] - ts[k - 2])
    };
    if left.abs() > 0.5 || right.abs() > 0.5 {
        return Err(Error::InvalidProfile(format!(
            "tube asymptotics violated: residual powers {left:.3} at t = 0 and {:.3} at t = D",
            -right
        )));
    }

    let profile = FoliationProfile {
        name: name.to_string(),
        n,
        m0,
        m1,
        length,
        shape: ProfileShape::Tabulated {
            regular: CubicSpline::natural(&ts, &regular),
        },
    };
    let report = validate_profile(&profile, 1e-2);
    if !report.passed() {
        return Err(Error::InvalidProfile(report.to_string()));
    }
    Ok(profile)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileCheck {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub profile: String,
    pub checks: Vec<ProfileCheck>,
}

impl ProfileReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl std::fmt::Display for ProfileReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<22} measured {:>14.8} expected {:>14.8}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.measured,
                c.expected
            )?;
        }
        Ok(())
    }
}

/// Numerically checks properness, tube asymptotics and volume positivity.
pub fn validate_profile(p: &FoliationProfile, tol: f64) -> ProfileReport {
    let mut checks = Vec::new();
    let n = p.n as f64;
    let d = p.length;

    let max_m = p.m0.max(p.m1) as f64;
    checks.push(ProfileCheck {
        name: "properness".into(),
        passed: p.n >= 2 && p.m0 + 2 <= p.n && p.m1 + 2 <= p.n,
        measured: max_m,
        expected: n - 2.0,
    });

    for (label, frac) in [("1e-3", 1e-3), ("1e-4", 1e-4)] {
        let t = d * frac;
        let near_start = t * p.mean_curvature(t);
        let want_start = n - p.m0 as f64 - 1.0;
        checks.push(ProfileCheck {
            name: format!("tube_start@{label}"),
            passed: (near_start - want_start).abs() <= tol,
            measured: near_start,
            expected: want_start,
        });
        let near_end = t * p.mean_curvature(d - t);
        let want_end = -(n - p.m1 as f64 - 1.0);
        checks.push(ProfileCheck {
            name: format!("tube_end@{label}"),
            passed: (near_end - want_end).abs() <= tol,
            measured: near_end,
            expected: want_end,
        });
    }

    let probes = 64;
    let min_volume = (0..probes)
        .map(|j| p.volume((j as f64 + 0.5) * d / probes as f64))
        .fold(f64::INFINITY, f64::min);
    checks.push(ProfileCheck {
        name: "volume_positive".into(),
        passed: min_volume > 0.0 && min_volume.is_finite(),
        measured: min_volume,
        expected: 0.0,
    });
    // Ratio A(10⁻⁴D)/A(10⁻³D) < 1 at each end means A decays towards the focal set.
    let decay_start = (p.log_volume(d * 1e-4) - p.log_volume(d * 1e-3)).exp();
    let decay_end = (p.log_volume(d - d * 1e-4) - p.log_volume(d - d * 1e-3)).exp();
    checks.push(ProfileCheck {
        name: "volume_vanishes_start".into(),
        passed: decay_start < 1.0,
        measured: decay_start,
        expected: 10f64.powf(-(n - p.m0 as f64 - 1.0)),
    });
    checks.push(ProfileCheck {
        name: "volume_vanishes_end".into(),
        passed: decay_end < 1.0,
        measured: decay_end,
        expected: 10f64.powf(-(n - p.m1 as f64 - 1.0)),
    });

    ProfileReport {
        profile: p.name.clone(),
        checks,
    }
}

/// `q_f = (n − m + 4)/(n − m − 4)` with `m = min(m0, m1)`; infinite when `n ≤ m + 4`.
pub fn critical_exponent(p: &FoliationProfile) -> f64 {
    let s = p.n as f64 - p.min_focal_dimension() as f64;
    if s - 4.0 <= 0.0 {
        f64::INFINITY
    } else {
        (s + 4.0) / (s - 4.0)
    }
}

/// Coefficients of `Δ²u − αΔu + βu = u^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaneitzCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub q: f64,
    /// Factorization `Δ² − αΔ + β = (−Δ + c1)(−Δ + c2)`, present when `α² ≥ 4β`.
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

impl PaneitzCoefficients {
    pub fn new(alpha: f64, beta: f64, q: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!(
                "coefficients must be positive, got alpha = {alpha}, beta = {beta}"
            )));
        }
        if !(q > 1.0 && q.is_finite()) {
            return Err(invalid(format!("requires q > 1, got q = {q}")));
        }
        let disc = alpha * alpha / 4.0 - beta;
        let (c1, c2) = if disc >= 0.0 {
            let root = disc.sqrt();
            let c1 = alpha / 2.0 + root;
            // c1·c2 = β avoids cancellation in α/2 − root
            (Some(c1), Some(beta / c1))
        } else {
            (None, None)
        };
        Ok(Self {
            alpha,
            beta,
            q,
            c1,
            c2,
        })
    }

    pub fn factorizable(&self) -> bool {
        self.c1.is_some()
    }
}

/// Paneitz data of an Einstein metric with scalar curvature `sc`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EinsteinReport {
    pub n: usize,
    pub sc: f64,
    /// Constant Q-curvature `(n²−4)/(8n(n−1)²)·sc²`.
    pub q_curvature: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `α² − 4β` evaluated from `α` and `β`.
    pub discriminant: f64,
    /// Closed form `4sc²/(n²(n−1)²)`.
    pub discriminant_closed_form: f64,
    /// The commonly quoted `4sc²/(n−1)²`, which omits the factor `n²`.
    pub discriminant_as_quoted: f64,
}

impl EinsteinReport {
    pub fn coefficients(&self, q: f64) -> Result<PaneitzCoefficients> {
        PaneitzCoefficients::new(self.alpha, self.beta, q)
    }
}

pub fn einstein_coefficients(n: usize, sc: f64) -> Result<EinsteinReport> {
    if n < 5 {
        return Err(invalid(format!("n = {n} must be at least 5")));
    }
    if !(sc > 0.0 && sc.is_finite()) {
        return Err(invalid(format!("scalar curvature must be positive, got {sc}")));
    }
    let nf = n as f64;
    let q_curvature = (nf * nf - 4.0) / (8.0 * nf * (nf - 1.0).powi(2)) * sc * sc;
    let alpha = (nf * nf - 2.0 * nf - 4.0) / (2.0 * nf * (nf - 1.0)) * sc;
    let beta = (nf - 4.0) / 2.0 * q_curvature;
    Ok(EinsteinReport {
        n,
        sc,
        q_curvature,
        alpha,
        beta,
        discriminant: alpha * alpha - 4.0 * beta,
        discriminant_closed_form: 4.0 * sc * sc / (nf * nf * (nf - 1.0).powi(2)),
        discriminant_as_quoted: 4.0 * sc * sc / (nf - 1.0).powi(2),
    })
}

/// Exact rational Einstein data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactEinstein {
    pub q_curvature: Ratio<i128>,
    pub alpha: Ratio<i128>,
    pub beta: Ratio<i128>,
    pub discriminant: Ratio<i128>,
}

pub fn einstein_coefficients_exact(n: i128, sc: Ratio<i128>) -> Result<ExactEinstein> {
    if n < 5 {
        return Err(invalid(format!("n = {n} must be at least 5")));
    }
    if sc <= Ratio::from_integer(0) {
        return Err(invalid("scalar curvature must be positive"));
    }
    let r = Ratio::from_integer;
    let q_curvature = Ratio::new(n * n - 4, 8 * n * (n - 1) * (n - 1)) * sc * sc;
    let alpha = Ratio::new(n * n - 2 * n - 4, 2 * n * (n - 1)) * sc;
    let beta = Ratio::new(n - 4, 2) * q_curvature;
    Ok(ExactEinstein {
        q_curvature,
        alpha,
        beta,
        discriminant: alpha * alpha - r(4) * beta,
    })
}
