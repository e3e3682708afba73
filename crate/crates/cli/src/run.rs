//! Subcommand dispatch. Every run ends with a manifest, including failed ones.

use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use degenlab::bc::{validate_conditions, ProblemDescription};
use degenlab::elliptic::{assemble, coercivity_scan, write_scan_csv};
use degenlab::linalg::{CMatrix, C64};
use degenlab::nonlinear::{solve_nonlinear, IterationReport, NonlinearModel, PointState};
use degenlab::parabolic::{step_scheme, write_snapshot, Forcing, ParabolicProblem, ParabolicSolution};
use degenlab::pollutant::{run_demo, SPECIES};
use degenlab::report::fmt_f64;
use degenlab::sector::{positivity_scan, ResolventOptions};
use serde_json::json;

use crate::config::{parse_config_str, ModelConfig, ProblemKind, RunConfig};
use crate::error::CliError;
use crate::manifest::{sha256_hex, write_manifest, Artifacts, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    EllipticSolve,
    ResolventScan,
    CoercivityScan,
    ParabolicRun,
    NonlinearRun,
    PollutantDemo,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EllipticSolve => "elliptic-solve",
            Command::ResolventScan => "resolvent-scan",
            Command::CoercivityScan => "coercivity-scan",
            Command::ParabolicRun => "parabolic-run",
            Command::NonlinearRun => "nonlinear-run",
            Command::PollutantDemo => "pollutant-demo",
            Command::Validate => "validate",
        }
    }

    fn problem_kind(self) -> Option<ProblemKind> {
        match self {
            Command::EllipticSolve => Some(ProblemKind::Elliptic),
            Command::ResolventScan => Some(ProblemKind::ResolventScan),
            Command::CoercivityScan => Some(ProblemKind::CoercivityScan),
            Command::ParabolicRun => Some(ProblemKind::Parabolic),
            Command::NonlinearRun => Some(ProblemKind::Nonlinear),
            Command::PollutantDemo => Some(ProblemKind::PollutantDemo),
            Command::Validate => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunRequest {
    pub command: Command,
    pub config: PathBuf,
    /// Overrides `output` from the config.
    pub out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub error: Option<CliError>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Parses, dispatches, and writes the manifest. Errors reading the config
/// or creating the output directory are returned directly since there is
/// nowhere to record them.
pub fn execute(req: &RunRequest) -> Result<RunOutcome, CliError> {
    faer::set_global_parallelism(faer::Par::Seq);
    let started_at = now();
    let text = std::fs::read_to_string(&req.config).map_err(|e| CliError::io(&req.config, e))?;
    let config_sha256 = sha256_hex(text.as_bytes());
    let parsed = parse_config_str(&text);
    let out_dir = req
        .out
        .clone()
        .or_else(|| parsed.as_ref().ok().and_then(|c| c.output.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut artifacts = Artifacts::create(&out_dir)?;
    let seed = req
        .seed
        .or_else(|| parsed.as_ref().ok().and_then(|c| c.seed))
        .unwrap_or(0);

    let result = parsed.and_then(|cfg| {
        if let (Some(want), Some(have)) = (req.command.problem_kind(), cfg.problem) {
            if want != have {
                return Err(CliError::schema(
                    "problem",
                    format!("config declares {have:?} but `{}` was requested", req.command.name()),
                ));
            }
        }
        dispatch(req.command, &cfg, seed, &mut artifacts)
    });

    let (exit_code, error_kind, error_message) = match &result {
        Ok(()) => (0, None, None),
        Err(e) => (e.exit_code(), Some(e.kind().to_string()), Some(e.to_string())),
    };
    let manifest = RunManifest {
        command: req.command.name().to_string(),
        config_sha256,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        started_at,
        finished_at: now(),
        files: artifacts.into_files(),
        exit_status: exit_code,
        error_kind,
        error_message,
    };
    write_manifest(&out_dir, &manifest)?;
    Ok(RunOutcome {
        exit_code,
        out_dir,
        manifest,
        error: result.err(),
    })
}

fn dispatch(cmd: Command, cfg: &RunConfig, seed: u64, out: &mut Artifacts) -> Result<(), CliError> {
    match cmd {
        Command::EllipticSolve => elliptic_solve(cfg, seed, out),
        Command::ResolventScan => resolvent_scan(cfg, seed, out),
        Command::CoercivityScan => coercivity(cfg, seed, out),
        Command::ParabolicRun => parabolic_run(cfg, out),
        Command::NonlinearRun => nonlinear_run(cfg, out),
        Command::PollutantDemo => pollutant_demo(cfg, out),
        Command::Validate => validate(cfg, out),
    }
}

fn trials(cfg: &RunConfig) -> usize {
    cfg.coercivity.as_ref().map_or(5, |c| c.trials)
}

fn elliptic_solve(cfg: &RunConfig, seed: u64, out: &mut Artifacts) -> Result<(), CliError> {
    let coeffs = cfg.coefficient_field()?;
    let bc = cfg.boundary_conditions()?;
    let el = cfg
        .elliptic
        .as_ref()
        .ok_or_else(|| CliError::schema("elliptic", "missing required section"))?;
    let lambda = C64::new(el.lambda[0], el.lambda[1]);
    let op = assemble(&coeffs, &bc, lambda)?;
    let f = cfg.forcing_function(coeffs.grid())?;
    let (u, residual) = op.factor()?.solve(&f)?;
    out.write_with("solution.csv", |w| write_snapshot(&u, w))?;
    out.write_with("grid.csv", |w| coeffs.grid().write_csv(w))?;
    if el.scan {
        let sector = cfg.sector_spec()?;
        let records = coercivity_scan(&coeffs, &bc, &sector, trials(cfg), &cfg.norm_spec(), seed)?;
        out.write_with("scan.csv", |w| write_scan_csv(&records, w))?;
    }
    out.write_json(
        "summary.json",
        &json!({
            "lambda": [lambda.re, lambda.im],
            "unknowns": op.dim(),
            "nnz": op.matrix().nnz(),
            "relative_residual": residual,
            "max_abs": u.max_abs(),
        }),
    )
}

fn resolvent_scan(cfg: &RunConfig, seed: u64, out: &mut Artifacts) -> Result<(), CliError> {
    let coeffs = cfg.coefficient_field()?;
    let bc = cfg.boundary_conditions()?;
    let sector = cfg.sector_spec()?;
    let opts = ResolventOptions {
        p: cfg.norm_spec().spatial_p,
        seed,
        ..ResolventOptions::default()
    };
    let report = positivity_scan(&coeffs, &bc, &sector, &opts)?;
    out.write_with("resolvent.csv", |w| report.write_csv(w))
}

fn coercivity(cfg: &RunConfig, seed: u64, out: &mut Artifacts) -> Result<(), CliError> {
    let coeffs = cfg.coefficient_field()?;
    let bc = cfg.boundary_conditions()?;
    let sector = cfg.sector_spec()?;
    let records = coercivity_scan(&coeffs, &bc, &sector, trials(cfg), &cfg.norm_spec(), seed)?;
    out.write_with("scan.csv", |w| write_scan_csv(&records, w))
}

fn write_snapshots(sol: &ParabolicSolution, every: usize, out: &mut Artifacts) -> Result<(), CliError> {
    let n = sol.n_steps();
    for s in (0..=n).filter(|s| s % every.max(1) == 0 || *s == n) {
        out.write_with(&format!("snapshots/step_{s:05}.csv"), |w| write_snapshot(&sol.snapshots[s], w))?;
    }
    Ok(())
}

fn parabolic_run(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let p = cfg
        .parabolic
        .as_ref()
        .ok_or_else(|| CliError::schema("parabolic", "missing required section"))?;
    let coeffs = Arc::new(cfg.coefficient_field()?);
    let bc = cfg.boundary_conditions()?;
    let f = cfg.forcing_function(coeffs.grid())?;
    let problem = ParabolicProblem::new(coeffs, bc, p.d, p.t_final, p.steps, Forcing::function(move |_| f.clone()))?;
    let sol = step_scheme(&problem, p.scheme)?;
    write_snapshots(&sol, p.snapshot_every.unwrap_or(p.steps), out)?;
    let diagnostics = sol.diagnostics(&cfg.norm_spec())?;
    out.write_json(
        "diagnostics.json",
        &json!({
            "scheme": p.scheme,
            "dt": sol.dt,
            "steps": sol.n_steps(),
            "d": p.d,
            "regularity": diagnostics,
            "warnings": sol.warnings,
        }),
    )
}

/// Scalar model with `B(u) = a0 + eps * u` and constant source.
#[derive(Clone, Copy, Debug)]
pub struct ToyQuadratic {
    pub a0: f64,
    pub eps: f64,
    pub source: f64,
}

impl NonlinearModel for ToyQuadratic {
    fn components(&self) -> usize {
        1
    }

    fn b(&self, state: &PointState<'_>) -> degenlab::Result<CMatrix> {
        Ok(CMatrix::scalar(1, C64::new(self.a0, 0.0) + state.u[0] * self.eps))
    }

    fn f(&self, _state: &PointState<'_>) -> degenlab::Result<Vec<C64>> {
        Ok(vec![C64::new(self.source, 0.0)])
    }
}

fn report_of(err: &degenlab::Error) -> Option<&IterationReport> {
    match err {
        degenlab::Error::NoContraction(r) => Some(r),
        degenlab::Error::BallExit { report, .. } => Some(report),
        _ => None,
    }
}

fn nonlinear_run(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let n = cfg
        .nonlinear
        .as_ref()
        .ok_or_else(|| CliError::schema("nonlinear", "missing required section"))?;
    let model = match n.model {
        Some(ModelConfig::ToyQuadratic { a0, eps, source }) => ToyQuadratic { a0, eps, source },
        None => return Err(CliError::schema("nonlinear.model", "missing required section")),
    };
    if cfg.components() != 1 {
        return Err(CliError::schema("coefficients.potential", "the toy model is scalar"));
    }
    let controls = cfg.nonlinear_controls()?;
    let coeffs = Arc::new(cfg.coefficient_field()?);
    let bc = cfg.boundary_conditions()?;
    match solve_nonlinear(&model, coeffs, &bc, &controls) {
        Ok((sol, report)) => {
            write_snapshots(&sol, controls.n_steps, out)?;
            out.write_json("iteration_report.json", &report)
        }
        Err(e) => {
            if let Some(report) = report_of(&e) {
                out.write_json("iteration_report.json", report)?;
            }
            Err(e.into())
        }
    }
}

fn pollutant_demo(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let p = cfg
        .pollutant
        .as_ref()
        .ok_or_else(|| CliError::schema("pollutant", "missing required section"))?;
    let model = p.model()?;
    let bc = p.boundary_conditions();
    let controls = p.controls(cfg)?;
    let outcome = match run_demo(&model, &bc, &controls) {
        Ok(o) => o,
        Err(e) => {
            if let Some(report) = report_of(&e) {
                out.write_json("iteration_report.json", report)?;
            }
            return Err(e.into());
        }
    };
    let last = outcome.solution.final_state();
    for (i, name) in p.species.iter().enumerate().take(SPECIES) {
        let species = last.component(i);
        out.write_with(&format!("species_{name}.csv"), |w| write_snapshot(&species, w))?;
    }
    out.write_with("mass_budget.csv", |w| {
        writeln!(w, "step,time,mass,step_error")?;
        for (s, m) in outcome.budget.masses.iter().enumerate() {
            let err = if s == 0 { f64::NAN } else { outcome.budget.step_errors[s - 1] };
            writeln!(w, "{s},{},{},{}", fmt_f64(outcome.solution.time(s)), fmt_f64(*m), fmt_f64(err))?;
        }
        Ok(())
    })?;
    out.write_json("iteration_report.json", &outcome.report)?;
    out.write_json("summary.json", &outcome.summary)
}

fn validate(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let mut checks = Vec::new();
    if cfg.grid.is_some() && cfg.coefficients.is_some() && cfg.bc.is_some() {
        let coeffs = cfg.coefficient_field()?;
        let bc = cfg.boundary_conditions()?;
        let report = validate_conditions(&ProblemDescription {
            coeffs: &coeffs,
            bc: &bc,
            p: cfg.norm_spec().spatial_p,
        });
        let warnings: Vec<String> = report.warnings().map(|f| f.message.clone()).collect();
        checks.push(json!({
            "target": "elliptic",
            "eta": report.eta.iter().map(|e| [e.re, e.im]).collect::<Vec<_>>(),
            "errors": report.errors(),
            "warnings": warnings,
        }));
        out.write_json("validation.json", &checks)?;
        report.into_result()?;
    }
    if let Some(p) = &cfg.pollutant {
        let model = p.model()?;
        degenlab::pollutant::to_abstract(&model)?;
        checks.push(json!({ "target": "pollutant", "errors": [], "warnings": [] }));
    }
    out.write_json("validation.json", &checks)
}
