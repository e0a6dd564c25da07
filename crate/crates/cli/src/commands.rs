use std::path::Path;
use std::process::ExitCode;

use paneitz_core::blowup::{linspace, oscillation_sweep, shoot_with_trace};
use paneitz_core::geometry::{
    builtin_profile, critical_exponent, einstein_coefficients, validate_profile, BUILTIN_PROFILES,
};
use paneitz_core::io::{self, Meta, ProfileFile};
use paneitz_core::solvers::{high_energy_sweep, mountain_pass};
use paneitz_core::variational::{embedding_constant_probe, embedding_ratio, nehari_scale};

use crate::config::{Checked, Invalid, RunConfig};

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

enum Failure {
    Invalid(Invalid),
    Io(String),
}

impl From<Invalid> for Failure {
    fn from(e: Invalid) -> Self {
        Failure::Invalid(e)
    }
}

impl From<paneitz_core::Error> for Failure {
    fn from(e: paneitz_core::Error) -> Self {
        match e {
            paneitz_core::Error::Io(_) | paneitz_core::Error::Csv(_) | paneitz_core::Error::Json(_) => {
                Failure::Io(e.to_string())
            }
            other => Failure::Invalid(other.into()),
        }
    }
}

pub fn fail_validation(e: &Invalid) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_INVALID)
}

/// `Ok(true)` when every solver run converged.
type Run = Result<bool, Failure>;

pub fn run(cfg: &RunConfig, out: &Path) -> ExitCode {
    let result = match cfg.command.as_deref() {
        Some("coefficients") => coefficients(cfg),
        Some("profiles") => profiles(cfg, out),
        Some("solve") => solve(cfg, out),
        Some("sweep-dm") => sweep_dm(cfg, out),
        Some("blowup") => blowup(cfg, out),
        Some("probe-embedding") => probe(cfg),
        Some(other) => Err(Failure::Invalid(Invalid(format!("unknown command '{other}'")))),
        None => Err(Failure::Invalid(Invalid("no command given".into()))),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(Failure::Invalid(e)) => fail_validation(&e),
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn meta(cfg: &RunConfig) -> Checked<Meta> {
    Ok(Meta::for_config(&cfg.hashed())?)
}

fn coefficients(cfg: &RunConfig) -> Run {
    let dims: Vec<usize> = match cfg.n {
        Some(n) => vec![n],
        None => (5..=10).collect(),
    };
    println!("n\tsc\tQ\talpha\tbeta\talpha^2-4beta\t4sc^2/(n^2(n-1)^2)\t4sc^2/(n-1)^2");
    for n in dims {
        let sc = cfg.sc.unwrap_or((n * (n - 1)) as f64);
        let r = einstein_coefficients(n, sc)?;
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.n, r.sc, r.q_curvature, r.alpha, r.beta, r.discriminant, r.discriminant_closed_form,
            r.discriminant_as_quoted
        );
    }
    Ok(true)
}

fn profiles(cfg: &RunConfig, out: &Path) -> Run {
    let list = match &cfg.profile {
        Some(_) => vec![cfg.profile()?],
        None => {
            let n = cfg.n.unwrap_or(5);
            BUILTIN_PROFILES
                .iter()
                .map(|name| builtin_profile(name, n, Some(cfg.k.unwrap_or(1))))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let meta = meta(cfg)?;
    let mut all_passed = true;
    for p in &list {
        let report = validate_profile(p, 1e-2);
        println!(
            "{}  n={} m0={} m1={} D={} q_f={}",
            p.name,
            p.n,
            p.m0,
            p.m1,
            p.length,
            critical_exponent(p)
        );
        print!("{report}");
        all_passed &= report.passed();
        if cfg.export == Some(true) {
            io::write_json(&out.join(format!("{}.json", p.name)), &meta, &ProfileFile::from_profile(p, 512))?;
        }
    }
    if !all_passed {
        return Err(Failure::Invalid(Invalid("profile validation failed".into())));
    }
    Ok(true)
}

fn solve(cfg: &RunConfig, out: &Path) -> Run {
    let op = cfg.operator()?;
    let solver = cfg.solver()?;
    let q = op.q();
    let e = match cfg.start.as_deref().unwrap_or("constant") {
        "constant" => vec![10.0 * op.coeffs.beta.powf(1.0 / (q - 1.0)); op.len()],
        "cosine" => {
            let d = op.grid.length;
            let shape = op.grid.sample(|t| (std::f64::consts::PI * t / d).cos());
            let a = nehari_scale(&op, &shape)?;
            shape.iter().map(|v| 2.0 * a * v).collect()
        }
        other => return Err(Invalid(format!("unknown start '{other}' (constant, cosine)")).into()),
    };
    let mp = mountain_pass(&op, &e, &solver)?;
    let meta = meta(cfg)?;
    let rec = &mp.record;
    io::write_record(&out.join("solution.json"), &meta, &op, rec)?;
    io::write_profile_values(&out.join("solution.csv"), &meta, &op.grid, &rec.u)?;
    println!(
        "I={} E={} residual={:e} sign_changes={} converged={} solver={}",
        rec.i_value, rec.e_value, rec.residual, rec.sign_changes, rec.converged, rec.solver
    );
    Ok(rec.converged)
}

fn sweep_dm(cfg: &RunConfig, out: &Path) -> Run {
    let op = cfg.operator()?;
    let solver = cfg.solver()?;
    let sweep = high_energy_sweep(&op, &solver)?;
    io::write_sweep(out, &meta(cfg)?, &op, &sweep)?;
    println!("m\td_m\tI\tresidual\tsign_changes\tconverged\tspread");
    for row in &sweep.rows {
        let r = &row.refined;
        println!(
            "{}\t{}\t{}\t{:e}\t{}\t{}\t{:e}{}",
            row.m,
            row.d_m,
            r.i_value,
            r.residual,
            r.sign_changes,
            r.converged,
            row.spread,
            if row.spread_warning() { "\twarning: restart spread above 1%" } else { "" }
        );
    }
    Ok(sweep.records.iter().any(|r| r.converged))
}

fn blowup(cfg: &RunConfig, out: &Path) -> Run {
    let s = cfg.s.unwrap_or(6);
    let q = cfg.q.ok_or_else(|| Invalid("missing exponent --q".into()))?;
    if !(q > 1.0) {
        return Err(Invalid(format!("requires q > 1, got q = {q}")).into());
    }
    let count = cfg.count.unwrap_or(50);
    let (lo, hi) = (cfg.gamma_min.unwrap_or(-1.0), cfg.gamma_max.unwrap_or(0.0));
    let r_max = cfg.r_max.unwrap_or(100.0);
    let tol = cfg.tol.unwrap_or(1e-10);
    let sweep = oscillation_sweep(s, q, &linspace(lo, hi, count), r_max, tol)?;
    let meta = meta(cfg)?;
    io::write_oscillation(&out.join("oscillation.csv"), &meta, &sweep)?;
    if let Some(g) = cfg.trace_gamma {
        let shot = shoot_with_trace(s, q, g, r_max, tol)?;
        io::write_trace(&out.join("trace.csv"), &meta, shot.trace.as_deref().unwrap_or_default())?;
    }
    println!("s={s} q={q} shots={} sign_change_fraction={}", sweep.outcomes.len(), sweep.sign_change_fraction());
    Ok(true)
}

fn probe(cfg: &RunConfig) -> Run {
    let op = cfg.operator()?;
    let solver = cfg.solver()?;
    let trials = cfg.trials.unwrap_or(8);
    if trials == 0 {
        return Err(Invalid("trials must be at least 1".into()).into());
    }
    let c = embedding_constant_probe(&op, trials, solver.seed)?;
    let at_one = embedding_ratio(&op, &vec![1.0; op.len()])?;
    println!("embedding_constant_lower_bound={c} ratio_at_constant={at_one} trials={trials}");
    Ok(true)
}
