//! `mfgs-lab`: runs the Carleman campaigns, the proof-step audit, the
//! forward solver and the stability sweep from a JSON configuration.

// `!(x > 0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mfgs_core::carleman::{proof_step_audit, AuditReport, BoundaryMode, CarlemanParams};
use mfgs_core::forward_solver::{solve_mfgs, synthesize_measurement};
use mfgs_core::grid::{write_field, write_slice, CorpusSpec};
use mfgs_core::report::{fuzz_csv, margin_svg, quasi_csv, stability_svg, sweep_csv, write_report};
use mfgs_core::stability_lab::{
    carleman_fuzz, coupling_coefficient, identity_refinement_study, quadrature_error_bound,
    quasi_carleman_fuzz, sample_corpus, stability_pairs, stability_sweep,
};
use serde::Serialize;

use crate::config::{ConfigError, LoadedConfig, PairSource};

#[derive(Parser, Debug)]
#[command(
    name = "mfgs-lab",
    version,
    about = "Mean field games stability laboratory"
)]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Weighting of the t = 0 boundary term.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Worker threads (overrides the configuration).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Corrected,
    LiteralPaper,
}

impl From<ModeArg> for BoundaryMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Corrected => BoundaryMode::Corrected,
            ModeArg::LiteralPaper => BoundaryMode::LiteralPaper,
        }
    }
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// First Carleman estimate over a random corpus and a λ grid.
    VerifyCarleman,
    /// Quasi-Carleman estimate with the coupling coefficient of a fresh solve.
    VerifyQuasi,
    /// Scalar proof-step checks and the identity refinement study.
    Audit,
    /// Forward-backward solve; writes fields, trace and measurement.
    Solve,
    /// Perturbation sweep for the Lipschitz stability estimate.
    Stability,
    /// Prints the effective configuration.
    PrintConfig,
}

/// Why a run stopped short of success.
enum Failure {
    /// Exit 1: a violation or a solver failure.
    Science(String),
    /// Exit 2: bad configuration, usage or unwritable output.
    Usage(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<mfgs_core::Error> for Failure {
    fn from(e: mfgs_core::Error) -> Self {
        use mfgs_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::ShapeMismatch { .. } | E::Io(_) | E::Format(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Science(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

/// Rounding allowance for margins evaluated at the fitted multiplier.
const FITTED_MARGIN_TOL: f64 = 1e-12;

struct Run {
    loaded: LoadedConfig,
    out: PathBuf,
}

impl Run {
    fn cfg(&self) -> &config::RunConfig {
        &self.loaded.config
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        write_report(&self.out, name, contents)
            .map_err(|e| Failure::Usage(format!("cannot write {name}: {e}")))
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let text =
            serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    fn write_binary(
        &self,
        name: &str,
        f: impl FnOnce(&mut std::fs::File) -> mfgs_core::Result<()>,
    ) -> Result<(), Failure> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Usage(format!("cannot create output: {e}")))?;
        let mut file = std::fs::File::create(self.out.join(name))
            .map_err(|e| Failure::Usage(format!("cannot write {name}: {e}")))?;
        f(&mut file).map_err(|e| Failure::Usage(format!("cannot write {name}: {e}")))
    }
}

#[derive(Serialize)]
struct CarlemanSummary {
    mode: BoundaryMode,
    lambda0: f64,
    eps_quad: f64,
    functions: usize,
    violations: usize,
    passed: bool,
}

fn verify_carleman(run: &Run) -> Outcome {
    let cfg = run.cfg();
    let grid = cfg.campaign_grid()?;
    let params = cfg.carleman_params()?;
    let lambdas = cfg.lambda_grid()?;
    let beta = cfg.problem.beta;
    let tol_corpus = cfg.carleman.corpus.spec(cfg.seed);
    let tol_corpus = CorpusSpec {
        count: cfg.carleman.identity_members,
        ..tol_corpus
    };
    let eps_quad = quadrature_error_bound(&grid, &tol_corpus, &params, beta)?;
    let corpus = sample_corpus(&grid, &cfg.carleman.corpus.spec(cfg.seed), false)?;
    let report = carleman_fuzz(
        &grid,
        &corpus,
        &lambdas,
        &params,
        beta,
        cfg.carleman.mode,
        eps_quad,
    )?;
    run.write("fuzz.csv", &fuzz_csv(&report.rows))?;
    run.write("margins.svg", &margin_svg(&report.rows))?;
    let summary = CarlemanSummary {
        mode: cfg.carleman.mode,
        lambda0: report.lambda0,
        eps_quad,
        functions: corpus.len(),
        violations: report.violations.len(),
        passed: report.passed(),
    };
    run.write_json("carleman.json", &summary)?;
    println!(
        "verify-carleman: mode {}, {} functions, eps_quad {:e}, {} violations at lambda >= {}",
        cfg.carleman.mode.as_str(),
        summary.functions,
        eps_quad,
        summary.violations,
        report.lambda0
    );
    Ok(summary.passed)
}

#[derive(Serialize)]
struct QuasiSummary {
    source: PairSource,
    pairs: usize,
    max_c1: f64,
    median_c1: Option<f64>,
    spread: Option<f64>,
    positive: usize,
    unbounded: usize,
    violations: usize,
    passed: bool,
}

fn verify_quasi(run: &Run) -> Outcome {
    let cfg = run.cfg();
    let q = &cfg.experiment.quasi;
    let problem = cfg.problem(&run.loaded.base_dir)?;
    let params = cfg.carleman_params()?;
    let (f, pairs) = match q.source {
        PairSource::Corpus => {
            let solution = solve_mfgs(&problem, &cfg.solver)?;
            let f = coupling_coefficient(&problem, &solution.p)?;
            let grid = problem.grid();
            let spec = |seed| CorpusSpec {
                count: q.pairs,
                ..q.corpus.spec(seed)
            };
            let us = sample_corpus(grid, &spec(cfg.seed), true)?;
            let qs = sample_corpus(grid, &spec(cfg.seed.wrapping_add(1)), false)?;
            let pairs: Vec<_> = us.into_iter().zip(qs).collect();
            (f, pairs)
        }
        PairSource::Stability => {
            let seeds: Vec<u64> = (0..q.pairs as u64)
                .map(|i| cfg.seed.wrapping_add(i))
                .collect();
            stability_pairs(&problem, &seeds, q.delta, &cfg.solver)?
        }
    };
    let report = quasi_carleman_fuzz(
        &pairs,
        &f,
        &q.lambdas,
        &params,
        cfg.problem.beta,
        FITTED_MARGIN_TOL,
    )?;
    run.write("quasi.csv", &quasi_csv(&report.rows))?;
    let summary = QuasiSummary {
        source: q.source,
        pairs: pairs.len(),
        max_c1: report.max_c1,
        median_c1: report.median_c1,
        spread: report.spread(),
        positive: report.positive_count,
        unbounded: report.unbounded_count,
        violations: report.violations.len(),
        passed: report.passed(q.max_spread),
    };
    run.write_json("quasi.json", &summary)?;
    println!(
        "verify-quasi: {} pairs, max C1 {}, median C1 {:?}, spread {:?}, {} unbounded, {} violations",
        summary.pairs, summary.max_c1, summary.median_c1, summary.spread, summary.unbounded, summary.violations
    );
    Ok(summary.passed)
}

#[derive(Serialize)]
struct AuditSummary {
    reports: Vec<AuditReport>,
    identity: mfgs_core::stability_lab::RefinementStudy,
    min_order: f64,
    passed: bool,
}

fn audit(run: &Run) -> Outcome {
    let cfg = run.cfg();
    let mut reports = Vec::new();
    for &t in &cfg.carleman.audit_horizons {
        let a = cfg.shift_for(t)?;
        let params = CarlemanParams::new(t, a, cfg.carleman.identity_lambda)?;
        reports.push(proof_step_audit(&params));
    }
    let base = cfg.refinement_base()?;
    let corpus = CorpusSpec {
        count: cfg.carleman.identity_members,
        ..cfg.carleman.corpus.spec(cfg.seed)
    };
    let study = identity_refinement_study(
        &base,
        cfg.carleman.halvings,
        &corpus,
        &cfg.carleman_params()?,
        cfg.problem.beta,
    )?;
    let mut csv = String::from("nx,nt,residual\n");
    for l in &study.levels {
        let nx: Vec<String> = l.nx.iter().map(usize::to_string).collect();
        csv.push_str(&format!("{},{},{}\n", nx.join("x"), l.nt, l.residual));
    }
    run.write("identity.csv", &csv)?;
    let passed = reports.iter().all(AuditReport::passed) && study.order >= cfg.carleman.min_order;
    for r in &reports {
        println!(
            "audit: T {} a {} lambda0 {} {}",
            r.horizon,
            r.shift,
            r.lambda0,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    println!(
        "audit: identity residual order {:.3} (need {})",
        study.order, cfg.carleman.min_order
    );
    run.write_json(
        "audit.json",
        &AuditSummary {
            reports,
            identity: study,
            min_order: cfg.carleman.min_order,
            passed,
        },
    )?;
    Ok(passed)
}

fn solve(run: &Run) -> Outcome {
    let cfg = run.cfg();
    let problem = cfg.problem(&run.loaded.base_dir)?;
    match solve_mfgs(&problem, &cfg.solver) {
        Ok(sol) => {
            run.write("trace.csv", &sol.trace.to_csv())?;
            run.write_binary("u.field", |f| write_field(f, &sol.u))?;
            run.write_binary("p.field", |f| write_field(f, &sol.p))?;
            let m = synthesize_measurement(&sol.u, cfg.solver.noise_level, cfg.solver.seed)?;
            run.write_binary("u0.slice", |f| write_slice(f, &m))?;
            println!(
                "solve: converged in {} Picard iterations",
                sol.trace.iterations
            );
            Ok(true)
        }
        Err(mfgs_core::Error::NonConvergence {
            iterations,
            last_change,
            trace,
        }) => {
            run.write("trace.csv", &trace.to_csv())?;
            println!(
                "solve: no convergence after {iterations} iterations (last change {last_change:e})"
            );
            Ok(false)
        }
        Err(e @ mfgs_core::Error::PicardDivergence { .. }) => {
            if let mfgs_core::Error::PicardDivergence { trace, .. } = &e {
                run.write("trace.csv", &trace.to_csv())?;
            }
            println!("solve: {e}");
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct StabilitySummary {
    cells: usize,
    failed_cells: usize,
    slope: f64,
    intercept: f64,
    max_ratio: f64,
    min_ratio: f64,
    ratio_spread: f64,
    passed: bool,
}

fn stability(run: &Run) -> Outcome {
    let cfg = run.cfg();
    let e = &cfg.experiment;
    let problem = cfg.problem(&run.loaded.base_dir)?;
    let sweep = stability_sweep(&problem, &e.deltas, &e.seeds, &e.perturbation, &cfg.solver)?;
    run.write("sweep.csv", &sweep_csv(&sweep.rows))?;
    run.write("stability.svg", &stability_svg(&sweep))?;
    let passed = (sweep.slope - 1.0).abs() <= e.slope_tolerance
        && sweep.ratio_spread() <= e.max_ratio_spread;
    let summary = StabilitySummary {
        cells: sweep.rows.len(),
        failed_cells: sweep.failures.len(),
        slope: sweep.slope,
        intercept: sweep.intercept,
        max_ratio: sweep.max_ratio,
        min_ratio: sweep.min_ratio,
        ratio_spread: sweep.ratio_spread(),
        passed,
    };
    run.write_json("stability.json", &summary)?;
    println!(
        "stability: {} cells, slope {:.4}, ratio spread {:.3}",
        summary.cells, summary.slope, summary.ratio_spread
    );
    Ok(passed)
}

fn load(cli: &Cli) -> Result<Run, Failure> {
    let mut loaded = match &cli.config {
        Some(p) => LoadedConfig::from_path(p)?,
        None => LoadedConfig::defaults(),
    };
    let c = &mut loaded.config;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(m) = cli.mode {
        c.carleman.mode = m.into();
    }
    if let Some(j) = cli.jobs {
        c.jobs = j;
    }
    if let Some(o) = &cli.out {
        c.out = o.clone();
    }
    c.validate(&loaded.base_dir)?;
    let out = if c.out.is_absolute() || cli.out.is_some() {
        c.out.clone()
    } else {
        loaded.base_dir.join(&c.out)
    };
    Ok(Run { loaded, out })
}

fn execute(cli: &Cli) -> Outcome {
    let run = load(cli)?;
    if let Command::PrintConfig = cli.command {
        let text =
            serde_json::to_string_pretty(run.cfg()).map_err(|e| Failure::Usage(e.to_string()))?;
        println!("{text}");
        return Ok(true);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.cfg().jobs)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::VerifyCarleman => verify_carleman(&run),
        Command::VerifyQuasi => verify_quasi(&run),
        Command::Audit => audit(&run),
        Command::Solve => solve(&run),
        Command::Stability => stability(&run),
        Command::PrintConfig => unreachable!("handled above"),
    })
}

fn exit_code(outcome: Outcome) -> ExitCode {
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Science(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    exit_code(execute(&cli))
}
