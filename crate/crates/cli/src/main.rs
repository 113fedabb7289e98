mod config;
mod manifest;
mod stages;
mod study;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vulnver::mining::{verify, PatternSet};
use vulnver::synth::{self, generate, GroundTruthPlan, NoiseSpec, PlanConfig};
use vulnver::vcs::GitRepository;
use vulnver::{Error, ErrorKind, Result};

use config::{read_text, RunArgs, RunConfig};
use stages::{Driver, Stage};

/// Checks the vulnerable versions claimed by vulnerability records against
/// the history of the project's repository.
#[derive(Debug, Parser)]
#[command(name = "vulnver", version)]
struct Cli {
    #[command(flatten)]
    run: RunArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find fix commits for the dataset's bugs.
    Mine,
    /// Trace fix commits back to the lines they changed.
    Trace,
    /// Scan every official release for the traced lines.
    Scan,
    /// Per-version error rates, error types and foundational fractions.
    Analyze,
    /// Hypothesis tests and discovery trends.
    Stats,
    /// Fit vulnerability discovery models.
    Vdm,
    /// Run every stage whose inputs changed and summarize.
    Report,
    /// Generate a synthetic repository with known ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Plan settings as JSON; flags below override individual fields.
    #[arg(long)]
    plan_config: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Number of linked CVEs.
    #[arg(long)]
    cves: Option<usize>,

    /// Planted error rates as `P,F,B`.
    #[arg(long, value_parser = parse_noise)]
    noise: Option<NoiseSpec>,

    /// Let unrelated commits copy vulnerable lines into other files.
    #[arg(long)]
    collisions: bool,

    /// CVEs without any bug reference.
    #[arg(long)]
    no_bug: Option<usize>,

    /// CVEs whose bugs no commit mentions.
    #[arg(long)]
    no_commit: Option<usize>,

    /// Build the three-CVE Chromium fixture instead of a random plan.
    #[arg(long, conflicts_with_all = ["plan_config", "seed", "cves", "noise", "collisions", "no_bug", "no_commit"])]
    table1: bool,

    /// Run the pipeline on the result and score it against the truth.
    #[arg(long)]
    verify: bool,
}

fn parse_noise(text: &str) -> std::result::Result<NoiseSpec, String> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [p, f, b] => Ok(NoiseSpec {
            p_stretch_past: p,
            p_future: f,
            p_beta: b,
        }),
        _ => Err("expected three rates P,F,B".into()),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Repository => 3,
        ErrorKind::Parse => 4,
        ErrorKind::Analysis => 5,
    }
}

fn run_synth(args: &SynthArgs, run: &RunArgs) -> Result<()> {
    let out = &run.out;
    if args.table1 {
        let fixture = synth::table1::build(out)?;
        eprintln!("synth: fixture written to {}", out.display());
        if args.verify {
            let repo = fixture.open_repository()?;
            let jobs = run.jobs.unwrap_or(1);
            let v = verify(
                &repo,
                &fixture.dataset,
                &fixture.catalog,
                &PatternSet::default(),
                jobs,
            )?;
            for r in &v.results {
                println!("{}", stages::verdict_row(r));
            }
        }
        return Ok(());
    }
    let mut config = match &args.plan_config {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => PlanConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.cves {
        config.cves = n;
    }
    if let Some(noise) = args.noise {
        config.noise = noise;
    }
    config.collisions |= args.collisions;
    if let Some(n) = args.no_bug {
        config.no_bug = n;
    }
    if let Some(n) = args.no_commit {
        config.no_commit = n;
    }
    let plan = GroundTruthPlan::random(&config)?;
    let generated = generate(&plan, out)?;
    eprintln!(
        "synth: {} CVEs over {} versions written to {}",
        generated.dataset.len(),
        generated.catalog.official_versions().len(),
        out.display()
    );
    if args.verify {
        let repo = GitRepository::open(&generated.repo)?;
        let jobs = run.jobs.unwrap_or(1);
        let v = verify(
            &repo,
            &generated.dataset,
            &generated.catalog,
            &PatternSet::default(),
            jobs,
        )?;
        let score = synth::score(&v.results, &generated.truth)?;
        let mut text = serde_json::to_string_pretty(&score)?;
        text.push('\n');
        let path = out.join("score.json");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        println!(
            "exact match {}/{} ({:.3})",
            score.exact_matches, score.cves, score.exact_match_rate
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let stage = match &cli.command {
        Command::Synth(args) => return run_synth(args, &cli.run),
        Command::Mine => Stage::Mine,
        Command::Trace => Stage::Trace,
        Command::Scan => Stage::Scan,
        Command::Analyze => Stage::Analyze,
        Command::Stats => Stage::Stats,
        Command::Vdm => Stage::Vdm,
        Command::Report => Stage::Report,
    };
    let cfg = RunConfig::from_args(&cli.run)?;
    let mut driver = Driver::new(cfg)?;
    // `report` reuses whatever is current; a named stage always reruns.
    driver.ensure(stage, stage != Stage::Report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
