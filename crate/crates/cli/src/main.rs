//! `paneitz-lab`: command-line front end of `paneitz-core`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "paneitz-lab", version, about = "Numerical laboratory for f-invariant Paneitz-type solutions")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (beats PANEITZ_LAB_OUT and the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Einstein-metric coefficients alpha, beta and the discriminant.
    Coefficients {
        #[arg(long)]
        n: Option<usize>,
        /// Scalar curvature (defaults to n(n-1), the unit sphere).
        #[arg(long)]
        sc: Option<f64>,
    },
    /// List and validate foliation profiles.
    Profiles {
        #[command(flatten)]
        profile: ProfileArgs,
        /// Write each profile as JSON into the output directory.
        #[arg(long)]
        export: bool,
    },
    /// Mountain pass from a starting shape, then Newton.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Starting shape: constant or cosine.
        #[arg(long)]
        start: Option<String>,
    },
    /// Constrained levels d_m and their Newton-refined profiles.
    SweepDm {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Radial shooting sweep over w''(0).
    Blowup {
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        gamma_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        gamma_max: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        /// Also dump the trace of this single shot.
        #[arg(long, allow_hyphen_values = true)]
        trace_gamma: Option<f64>,
    },
    /// Lower bound for the embedding constant.
    ProbeEmbedding {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args, Debug, Default)]
struct ProfileArgs {
    /// Builtin name or path to a t,logA CSV / profile JSON.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long = "D")]
    length: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct ProblemArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Scalar curvature of an Einstein metric; derives alpha and beta.
    #[arg(long)]
    einstein: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long = "N")]
    cells: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct SolverArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Random restarts per d_m.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    dm_max_m: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol_residual: Option<f64>,
    #[arg(long)]
    newton_damping: Option<f64>,
    #[arg(long)]
    mpa_path_points: Option<usize>,
    #[arg(long)]
    mpa_step: Option<f64>,
}

impl ProfileArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.profile = self.profile.clone();
        c.n = self.n;
        c.k = self.k;
        c.m0 = self.m0;
        c.m1 = self.m1;
        c.length = self.length;
    }
}

impl ProblemArgs {
    fn apply(&self, c: &mut RunConfig) {
        self.profile.apply(c);
        c.alpha = self.alpha;
        c.beta = self.beta;
        c.einstein = self.einstein;
        c.q = self.q;
        c.cells = self.cells;
    }
}

impl SolverArgs {
    fn apply(&self, s: &mut paneitz_core::solvers::SolverConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { s.$f = v; } )* };
        }
        set!(seed, seeds, dm_max_m, max_iter, tol_residual, newton_damping, mpa_path_points, mpa_step);
    }
}

fn flags_of(cmd: &Command, base: &mut RunConfig) -> RunConfig {
    let mut f = RunConfig::default();
    match cmd {
        Command::Coefficients { n, sc } => {
            f.command = Some("coefficients".into());
            f.n = *n;
            f.sc = *sc;
        }
        Command::Profiles { profile, export } => {
            f.command = Some("profiles".into());
            profile.apply(&mut f);
            f.export = export.then_some(true);
        }
        Command::Solve { problem, solver, start } => {
            f.command = Some("solve".into());
            problem.apply(&mut f);
            solver.apply(&mut base.solver);
            f.start = start.clone();
        }
        Command::SweepDm { problem, solver } => {
            f.command = Some("sweep-dm".into());
            problem.apply(&mut f);
            solver.apply(&mut base.solver);
        }
        Command::Blowup {
            s,
            q,
            gamma_min,
            gamma_max,
            count,
            r_max,
            tol,
            trace_gamma,
        } => {
            f.command = Some("blowup".into());
            f.s = *s;
            f.q = *q;
            f.gamma_min = *gamma_min;
            f.gamma_max = *gamma_max;
            f.count = *count;
            f.r_max = *r_max;
            f.tol = *tol;
            f.trace_gamma = *trace_gamma;
        }
        Command::ProbeEmbedding { problem, trials, seed } => {
            f.command = Some("probe-embedding".into());
            problem.apply(&mut f);
            f.trials = *trials;
            if let Some(s) = seed {
                base.solver.seed = *s;
            }
        }
    }
    f
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => return commands::fail_validation(&e),
        },
        None => RunConfig::default(),
    };
    if let Some(cmd) = &cli.command {
        let flags = flags_of(cmd, &mut cfg);
        cfg.overlay(&flags);
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(j) = cfg.jobs {
        if j == 0 {
            return commands::fail_validation(&config::Invalid("--jobs must be at least 1".into()));
        }
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let out = cfg.resolve_out_dir(cli.out.as_deref());
    commands::run(&cfg, &out)
}
