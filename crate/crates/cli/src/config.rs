use std::path::{Path, PathBuf};

use paneitz_core::discretize::{DiscreteOperator, MIN_CELLS};
use paneitz_core::geometry::{
    builtin_profile, einstein_coefficients, load_profile, FoliationProfile, PaneitzCoefficients,
    BUILTIN_PROFILES,
};
use paneitz_core::io::{read_profile_csv, read_profile_json};
use paneitz_core::solvers::SolverConfig;
use serde::{Deserialize, Serialize};

pub const OUT_ENV: &str = "PANEITZ_LAB_OUT";
pub const DEFAULT_OUT: &str = "paneitz-out";

/// Everything a run depends on. Loaded from `--config`, then overlaid by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m1: Option<usize>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Scalar curvature of an Einstein metric; derives `alpha` and `beta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub einstein: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// `constant` or `cosine` starting shape for `solve`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub export: Option<bool>,
}

/// Validation failure; the CLI exits with status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<paneitz_core::Error> for Invalid {
    fn from(e: paneitz_core::Error) -> Self {
        Invalid(e.to_string())
    }
}

pub type Checked<T> = std::result::Result<T, Invalid>;

fn bad<T>(msg: impl Into<String>) -> Checked<T> {
    Err(Invalid(msg.into()))
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Checked<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Invalid(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `flags` replace those of `self`.
    pub fn overlay(&mut self, flags: &RunConfig) {
        overlay!(
            self, flags, command, profile, n, k, m0, m1, length, alpha, beta, einstein, q, cells,
            out_dir, jobs, start, trials, sc, s, gamma_min, gamma_max, count, r_max, tol,
            trace_gamma, export,
        );
    }

    /// Hash input: the run without its output location and thread count.
    pub fn hashed(&self) -> RunConfig {
        RunConfig {
            out_dir: None,
            jobs: None,
            ..self.clone()
        }
    }

    /// Flag, then `PANEITZ_LAB_OUT`, then config, then the default.
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(env);
        }
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn dimension(&self) -> Checked<usize> {
        self.n.map_or_else(|| bad("missing ambient dimension --n"), Ok)
    }

    pub fn coefficients(&self) -> Checked<PaneitzCoefficients> {
        let q = self.q.map_or_else(|| bad("missing exponent --q"), Ok)?;
        if !(q > 1.0) {
            return bad(format!("requires q > 1, got q = {q}"));
        }
        match (self.alpha, self.beta, self.einstein) {
            (Some(a), Some(b), None) => Ok(PaneitzCoefficients::new(a, b, q)?),
            (None, None, Some(sc)) => Ok(einstein_coefficients(self.dimension()?, sc)?.coefficients(q)?),
            (None, None, None) => bad("give either --alpha and --beta or --einstein"),
            _ => bad("give exactly one of (--alpha and --beta) or --einstein"),
        }
    }

    pub fn cells(&self) -> Checked<usize> {
        match self.cells {
            Some(n) if n >= MIN_CELLS => Ok(n),
            Some(n) => bad(format!("N must be at least {MIN_CELLS}, got {n}")),
            None => bad("missing grid size --N"),
        }
    }

    /// Builtin profile by name, or a `t,logA` CSV / profile JSON by path.
    pub fn profile(&self) -> Checked<FoliationProfile> {
        let name = self.profile.as_deref().unwrap_or("sphere_point");
        if BUILTIN_PROFILES.contains(&name) {
            return Ok(builtin_profile(name, self.dimension()?, self.k)?);
        }
        let path = Path::new(name);
        let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name).to_string();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let f = read_profile_json(path)?;
                Ok(load_profile(&f.name, &f.pairs(), f.n, f.m0, f.m1, f.length)?)
            }
            Some("csv") => {
                let samples = read_profile_csv(path)?;
                let (Some(m0), Some(m1), Some(d)) = (self.m0, self.m1, self.length) else {
                    return bad("tabulated CSV profiles need --m0, --m1 and --D");
                };
                Ok(load_profile(&label, &samples, self.dimension()?, m0, m1, d)?)
            }
            _ => bad(format!(
                "unknown profile '{name}' (builtins: {}; or a .csv/.json path)",
                BUILTIN_PROFILES.join(", ")
            )),
        }
    }

    pub fn operator(&self) -> Checked<DiscreteOperator> {
        let coeffs = self.coefficients()?;
        let cells = self.cells()?;
        Ok(DiscreteOperator::new(&self.profile()?, cells, coeffs)?)
    }

    pub fn solver(&self) -> Checked<SolverConfig> {
        self.solver.validate()?;
        Ok(self.solver.clone())
    }
}
