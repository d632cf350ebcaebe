use clap::{Args, Parser, Subcommand};
use holoflow::flow::FlowState;
use holoflow::holonomy::{HolonomyReport, Subalgebra};
use holoflow::verify::experiment::{resolve_holonomy, state_algebra, write_records_csv};
use holoflow::verify::{
    algebra_identities, builtin_scenario, builtin_scenarios, check_commutators, check_inequalities,
    holonomy_preservation_experiment, reaction_identities, residual_study, CommutatorReport, Equation,
    IdentityReport, InequalityReport, Level, ResidualReport, Scenario,
};
use holoflow::{flow, Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Random draws per identity in `verify-identities`.
const ALGEBRA_CASES: usize = 20;
const REACTION_CASES: usize = 10;
const INEQUALITY_SAMPLES: usize = 5;

#[derive(Parser)]
#[command(name = "holoflow", version, about = "Ricci flow and holonomy preservation checks on model geometries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check algebraic identities, evolution-equation residuals, commutators and inequalities.
    VerifyIdentities(RunArgs),
    /// Run the flow, track the projections and the holonomy algebra, write a summary and CSV.
    RunFlow(RunArgs),
    /// Holonomy algebra generated by the curvature jet, with Berger-list candidates.
    HolonomyReport {
        #[command(flatten)]
        run: RunArgs,
        /// Evaluate at tEnd instead of t = 0.
        #[arg(long)]
        terminal: bool,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Name of a built-in scenario.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    /// Path to a scenario TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    /// Grid points per axis (grid models only).
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long = "tEnd", alias = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Highest order of `∇^k Rm` used to generate the holonomy algebra.
    #[arg(long)]
    kmax: Option<usize>,
    /// Output directory for the JSON summary and CSV time series.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn scenario(&self) -> Result<Scenario> {
        let mut sc = match (&self.scenario, &self.config) {
            (Some(name), _) => builtin_scenario(name)?,
            (None, Some(path)) => Scenario::load(path)?,
            (None, None) => return Err(Error::Config("one of --scenario or --config is required".into())),
        };
        if let Some(dt) = self.dt {
            sc.flow.dt = dt;
        }
        if let Some(res) = self.resolution {
            if !sc.model.is_grid() {
                return Err(Error::Config(format!("--resolution does not apply to scenario '{}'", sc.name)));
            }
            sc.model = sc.model.with_resolution(res);
        }
        if let Some(t) = self.t_end {
            sc.flow.t_end = t;
        }
        if let Some(seed) = self.seed {
            sc.seed = seed;
        }
        if let Some(k) = self.kmax {
            sc.kmax = k;
        }
        sc.validate()?;
        Ok(sc)
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct VerifySummary {
    scenario: String,
    probe_dim: usize,
    algebra: Vec<IdentityReport>,
    reaction: Vec<IdentityReport>,
    equations: Vec<ResidualReport>,
    commutators: Vec<CommutatorReport>,
    inequalities: InequalityReport,
    pass: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct HolonomySummary {
    scenario: String,
    t: f64,
    #[serde(flatten)]
    report: HolonomyReport,
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn verify_identities(args: &RunArgs) -> Result<bool> {
    let sc = args.scenario()?;
    let tol = &sc.tolerances;
    let probe = resolve_holonomy(sc.probe_spec(), &sc.model, &sc.flow, sc.kmax, tol.rank)?;
    let res = sc.model.resolution().unwrap_or(1);
    let levels = [
        Level { resolution: res, dt: sc.flow.dt },
        Level { resolution: 2 * res, dt: sc.flow.dt / 4.0 },
    ];
    let equations = residual_study(&sc.model, &probe, &sc.flow, &Equation::ALL, &levels, 0, &tol.residual)?;
    let commutators = check_commutators(&sc.model, &probe, &sc.flow, &levels, sc.seed, &tol.residual)?;
    let inequalities = check_inequalities(&sc.model, &probe, &sc.flow, INEQUALITY_SAMPLES)?;
    let algebra = algebra_identities(probe.n(), ALGEBRA_CASES, sc.seed)?;
    let reaction = reaction_identities(&probe, REACTION_CASES, sc.seed)?;
    let pass = algebra.iter().chain(&reaction).all(|r| r.pass)
        && equations.iter().all(|r| r.pass)
        && commutators.iter().all(|r| r.pass)
        && inequalities.finite;
    let summary = VerifySummary {
        scenario: sc.name.clone(),
        probe_dim: probe.dim(),
        algebra,
        reaction,
        equations,
        commutators,
        inequalities,
        pass,
    };
    let text = json(&summary)?;
    if let Some(dir) = &args.out {
        write_out(dir, "verify.json", text.as_bytes())?;
    }
    print!("{text}");
    Ok(pass)
}

fn run_flow(args: &RunArgs) -> Result<bool> {
    let sc = args.scenario()?;
    let run = holonomy_preservation_experiment(&sc)?;
    let text = json(&run)?;
    if let Some(dir) = &args.out {
        let mut csv = Vec::new();
        write_records_csv(&mut csv, &run.records)?;
        write_out(dir, "run.json", text.as_bytes())?;
        write_out(dir, "records.csv", &csv)?;
    }
    print!("{text}");
    if let Some(f) = &run.failure {
        eprintln!("flow stopped at t = {}: {}", f.t, f.message);
    }
    Ok(run.pass)
}

fn holonomy_report(args: &RunArgs, terminal: bool) -> Result<bool> {
    let sc = args.scenario()?;
    let n = sc.model.dim();
    let mut state = FlowState::new(sc.model.initial_slice()?, &Subalgebra::trivial(n))?;
    if terminal {
        state = flow::run(state, &sc.flow, usize::MAX)?.pop().expect("initial state");
    }
    let ordered = state_algebra(&state, sc.kmax, sc.tolerances.rank)?;
    let summary = HolonomySummary {
        scenario: sc.name.clone(),
        t: state.t,
        report: HolonomyReport::from_ordered(&ordered, sc.tolerances.rank),
    };
    let text = json(&summary)?;
    if let Some(dir) = &args.out {
        write_out(dir, "holonomy.json", text.as_bytes())?;
    }
    print!("{text}");
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::VerifyIdentities(args) => verify_identities(args),
        Command::RunFlow(args) => run_flow(args),
        Command::HolonomyReport { run, terminal } => holonomy_report(run, *terminal),
        Command::ListScenarios => {
            for sc in builtin_scenarios() {
                println!("{}\t{}", sc.name, sc.description);
            }
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
