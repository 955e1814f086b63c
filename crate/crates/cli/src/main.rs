//! `semiflat`: validate atlases and sections, sample base loci, run the
//! correspondence check, and solve the phase equation from a config file.
//!
//! Exit codes: 0 when every verdict agrees (or the command only reports),
//! 2 when a correspondence row disagrees, 1 on any operational error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use semiflat_core::verify::report::render;
use semiflat_core::verify::{
    build_locus, check_atlas, check_section, load_config, locus_summary, locus_to_csv, run_solve, run_verify,
    to_json, write_text, OutputFormat, RunConfig, SolveOutput,
};

#[derive(Parser)]
#[command(name = "semiflat", version, about = "Semi-flat mirror correspondence checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unimodularity, affine potential differences, cocycles and convexity.
    CheckAtlas(Common),
    /// Frame unimodularity, the constant-section condition and overlap gluing.
    CheckSection(Common),
    /// Sample the base locus on its parameter grid.
    BuildLocus(Common),
    /// Full run: both sides of every correspondence row.
    Verify(Common),
    /// Solve the phase equation from the `solve` block.
    SolvePhase(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted and the config names none.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Nodes per parameter axis, overriding the config.
    #[arg(long)]
    grid: Option<usize>,
    /// Tolerance for the Lagrangian, integrability and phase verdicts.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

struct Session {
    cfg: RunConfig,
    out: Option<PathBuf>,
    format: OutputFormat,
    grid: Option<usize>,
}

impl Session {
    fn load(args: &Common) -> Result<Self> {
        let mut cfg = load_config(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
        if let Some(tol) = args.tol {
            if !(tol > 0.0) {
                bail!("--tol must be positive");
            }
            cfg.tolerances.lagrangian = tol;
            cfg.tolerances.phase = tol;
        }
        if args.grid.is_some_and(|g| g < 2) {
            bail!("--grid needs at least 2 nodes per axis");
        }
        let format = match args.format {
            Some(Format::Json) => OutputFormat::Json,
            Some(Format::Csv) => OutputFormat::Csv,
            None => cfg.output_format,
        };
        let out = args.out.clone().or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
        Ok(Session {
            cfg,
            out,
            format,
            grid: args.grid,
        })
    }

    fn emit(&self, json: impl FnOnce() -> String, csv: Option<&dyn Fn() -> String>, what: &str) -> Result<()> {
        let text = match (self.format, csv) {
            (OutputFormat::Json, _) => json(),
            (OutputFormat::Csv, Some(csv)) => csv(),
            (OutputFormat::Csv, None) => bail!("{what} has no CSV form; use --format json"),
        };
        write_text(&text, self.out.as_deref()).with_context(|| match &self.out {
            Some(p) => format!("writing {}", p.display()),
            None => "writing to stdout".into(),
        })
    }
}

fn verdict(name: &str, pass: bool) {
    eprintln!("{name}: {}", if pass { "PASS" } else { "FAIL" });
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::CheckAtlas(args) => {
            let cx = Session::load(&args)?;
            let report = check_atlas(&cx.cfg)?;
            verdict("atlas", report.passed(cx.cfg.tolerances.glue));
            cx.emit(|| to_json(&report), None, "check-atlas")?;
            Ok(0)
        }
        Command::CheckSection(args) => {
            let cx = Session::load(&args)?;
            let report = check_section(&cx.cfg)?;
            let glue = report.glue.iter().all(|g| g.passed(cx.cfg.tolerances.glue));
            verdict("section", report.passed);
            verdict("glue", glue);
            cx.emit(|| to_json(&report), None, "check-section")?;
            Ok(0)
        }
        Command::BuildLocus(args) => {
            let cx = Session::load(&args)?;
            let patch = build_locus(&cx.cfg, cx.grid)?;
            let summary = locus_summary(&cx.cfg, &patch);
            cx.emit(|| to_json(&summary), Some(&|| locus_to_csv(&summary)), "build-locus")?;
            Ok(0)
        }
        Command::Verify(args) => {
            let cx = Session::load(&args)?;
            let report = run_verify(&cx.cfg, cx.grid)?;
            let c = &report.correspondence;
            verdict("triviality row agrees", c.triviality.agree);
            verdict("integrability row agrees", c.integrability.agree);
            verdict("phase row agrees", c.phase.agree);
            if let Some(s) = &report.solve {
                verdict("solved field agrees", s.correspondence.all_agree());
            }
            cx.emit(|| to_json(&report), Some(&|| render(&report, OutputFormat::Csv)), "verify")?;
            Ok(if report.all_agree { 0 } else { 2 })
        }
        Command::SolvePhase(args) => {
            let cx = Session::load(&args)?;
            let Some((patch, solution, section)) = run_solve(&cx.cfg, cx.grid)? else {
                bail!("{} has no solve block", args.config.display());
            };
            let agree = section.correspondence.all_agree();
            eprintln!(
                "solved in {} iterations, residual {:e}",
                section.solver.iterations, section.solver.residual
            );
            verdict("solved field agrees", agree);
            let out = SolveOutput::new(&patch, &solution, section);
            cx.emit(|| to_json(&out), Some(&|| out.to_csv()), "solve-phase")?;
            Ok(if agree { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    // clap reports usage errors with status 2, which is reserved for disagreements
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
