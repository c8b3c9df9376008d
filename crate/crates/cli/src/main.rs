use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aashgp::baselines::{form_hlrf, mcs, FormOptions};
use aashgp::config::{OutputFormat, RunConfigFile};
use aashgp::learner::{self, RunStatus};
use aashgp::report::{
    comparison, comparison_markdown, write_comparison_csv, write_features_csv, write_history_csv,
    write_spectrum_csv, Method, MethodReport, Report,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

/// Adaptive active-subspace reliability analysis with a heteroscedastic GP.
#[derive(Parser)]
#[command(name = "aashgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive learner (plus any baselines the config enables).
    Run(RunArgs),
    /// Crude Monte Carlo only.
    Mcs {
        #[command(flatten)]
        common: RunArgs,
        /// Sample size; overrides `baselines.mcs_n`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// FORM (HL-RF) only.
    Form(RunArgs),
    /// Comparison table over finished run directories.
    Report {
        /// Run directories (or report.json files).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Reference: a run directory (its MCS estimate, else its first
        /// method) or a failure probability.
        #[arg(long)]
        reference: String,
        /// Directory for comparison.csv and comparison.md.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

const DEFAULT_MCS_N: usize = 1_000_000;

struct Loaded {
    cfg: RunConfigFile,
    exp: aashgp::config::Experiment,
    out: PathBuf,
}

fn load(args: &RunArgs) -> Result<Loaded> {
    let mut cfg = RunConfigFile::from_path(&args.config)?;
    if let Some(s) = args.seed {
        cfg.learner.seed = s;
    }
    let base = args.config.parent().filter(|p| !p.as_os_str().is_empty());
    let exp = cfg.build(base)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.name()));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    // Archive the effective config so the run can be repeated.
    std::fs::write(out.join("config.json"), cfg.to_json()? + "\n")?;
    Ok(Loaded { cfg, exp, out })
}

fn report_for(l: &Loaded, methods: Vec<MethodReport>) -> Result<Report> {
    Ok(Report {
        name: l.cfg.name(),
        model: l.exp.model.model.name().to_string(),
        dimension: l.exp.model.dimension(),
        threshold: l.exp.model.threshold,
        methods,
        config: serde_json::to_value(&l.cfg)?,
    })
}

fn wants(l: &Loaded, f: OutputFormat) -> bool {
    l.cfg.output.formats.contains(&f)
}

fn finish(l: &Loaded, report: &Report, quiet: bool) -> Result<()> {
    if wants(l, OutputFormat::Json) {
        report.write(l.out.join("report.json"))?;
    }
    let reference = report.method(Method::Mcs).and_then(|m| m.pf);
    let rows = comparison(&report.methods, reference);
    if wants(l, OutputFormat::Csv) {
        write_comparison_csv(l.out.join("comparison.csv"), &rows)?;
    }
    let md = comparison_markdown(&rows);
    std::fs::write(l.out.join("comparison.md"), &md)?;
    if !quiet {
        print!("{md}");
        println!("outputs in {}", l.out.display());
    }
    Ok(())
}

fn run_mcs(l: &Loaded, n: usize, quiet: bool) -> Result<MethodReport> {
    if !quiet {
        eprintln!("mcs: n = {n}, seed = {}", l.cfg.learner.seed);
    }
    let r = mcs(&l.exp.model, &l.exp.spec, n, l.cfg.learner.seed)?;
    Ok(MethodReport::from_mcs(&r)?)
}

fn run_form(l: &Loaded) -> Result<MethodReport> {
    let opts = FormOptions {
        max_iterations: l.cfg.baselines.form_max_iterations,
        tol: l.cfg.baselines.form_tol,
    };
    let r = form_hlrf(&l.exp.model, &l.exp.spec, None, &opts)?;
    Ok(MethodReport::from_form(&r)?)
}

fn cmd_run(args: &RunArgs, quiet: bool) -> Result<ExitCode> {
    let l = load(args)?;
    let y_f = l.exp.model.threshold;
    let outcome = learner::run(&l.exp.model, &l.exp.spec, &l.cfg.learner);
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            // Keep what was learned before the failure.
            let rep = report_for(&l, vec![MethodReport::from_run(&e.record)?])?;
            if wants(&l, OutputFormat::Json) {
                rep.write(l.out.join("report.json"))?;
            }
            if wants(&l, OutputFormat::Csv) {
                write_history_csv(l.out.join("history.csv"), &e.record)?;
            }
            return Err(e.error).context("adaptive run failed");
        }
    };
    let mut methods = vec![MethodReport::from_run(&outcome.record)?];
    if let Some(n) = l.cfg.baselines.mcs_n {
        methods.push(run_mcs(&l, n, quiet)?);
    }
    if l.cfg.baselines.form {
        methods.push(run_form(&l)?);
    }
    if wants(&l, OutputFormat::Csv) {
        write_history_csv(l.out.join("history.csv"), &outcome.record)?;
        write_spectrum_csv(l.out.join("spectrum.csv"), &outcome.record)?;
        write_features_csv(l.out.join("features.csv"), &outcome, y_f)?;
    }
    finish(&l, &report_for(&l, methods)?, quiet)?;
    Ok(match outcome.record.status {
        RunStatus::Converged | RunStatus::SinglePass => ExitCode::SUCCESS,
        RunStatus::MaxIterations | RunStatus::TimeLimit => ExitCode::from(2),
        RunStatus::Failed => ExitCode::FAILURE,
    })
}

fn cmd_mcs(args: &RunArgs, n: Option<usize>, quiet: bool) -> Result<ExitCode> {
    let l = load(args)?;
    let n = n.or(l.cfg.baselines.mcs_n).unwrap_or(DEFAULT_MCS_N);
    if n == 0 {
        bail!("MCS sample size must be >= 1");
    }
    let m = run_mcs(&l, n, quiet)?;
    finish(&l, &report_for(&l, vec![m])?, quiet)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_form(args: &RunArgs, quiet: bool) -> Result<ExitCode> {
    let l = load(args)?;
    let m = run_form(&l)?;
    let converged = m.status == "converged";
    finish(&l, &report_for(&l, vec![m])?, quiet)?;
    Ok(if converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn read_run(p: &Path) -> Result<Report> {
    let file = if p.is_dir() { p.join("report.json") } else { p.to_path_buf() };
    if !file.exists() {
        bail!("no report.json at {}", p.display());
    }
    Ok(Report::read(&file)?)
}

fn cmd_report(runs: &[PathBuf], reference: &str, out: Option<&Path>, quiet: bool) -> Result<ExitCode> {
    let pf_ref = match reference.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => v,
        Ok(v) => bail!("reference probability must be positive, got {v}"),
        Err(_) => {
            let r = read_run(Path::new(reference)).context("reading the reference run")?;
            r.method(Method::Mcs)
                .or_else(|| r.methods.first())
                .and_then(|m| m.pf)
                .with_context(|| format!("reference run {reference} has no failure probability"))?
        }
    };
    let mut rows = Vec::new();
    for p in runs {
        let r = read_run(p)?;
        for mut row in comparison(&r.methods, Some(pf_ref)) {
            row.method = format!("{}/{}", r.name, row.method);
            rows.push(row);
        }
    }
    let md = comparison_markdown(&rows);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_comparison_csv(dir.join("comparison.csv"), &rows)?;
        std::fs::write(dir.join("comparison.md"), &md)?;
    }
    if !quiet {
        println!("reference Pf = {pf_ref:e}");
        print!("{md}");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a, cli.quiet),
        Command::Mcs { common, n } => cmd_mcs(common, *n, cli.quiet),
        Command::Form(a) => cmd_form(a, cli.quiet),
        Command::Report { runs, reference, out } => cmd_report(runs, reference, out.as_deref(), cli.quiet),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::FAILURE
        }
    }
}

/// The cause chain, skipping causes that a message already embeds.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out += ": ";
            }
            out += &msg;
        }
    }
    out
}
