use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rupture::corpus::{load_corpus, load_sessions_unchecked, validate_session, write_corpus};
use rupture::harness::{report_from_dir, run_grid, GridSpec, ReportFormat};
use rupture::synth::{generate_corpus, Profile, SynthConfig};
use rupture::{Error, Result};

#[derive(Parser)]
#[command(name = "rupture", version, about = "Successive robot-error detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        participants: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "separable")]
        profile: Profile,
        #[arg(long)]
        drift: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Run a single configuration over every participant.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every combination of a grid config.
    Grid {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a report from a run directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
    /// Check a corpus and list every problem found.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
}

fn synth(out: &Path, participants: usize, seed: u64, profile: Profile, drift: Option<f64>, noise: Option<f64>) -> Result<()> {
    let mut cfg = SynthConfig::with_profile(profile);
    cfg.participants = participants;
    cfg.seed = seed;
    if let Some(d) = drift {
        cfg.drift = d;
    }
    if let Some(n) = noise {
        cfg.noise_sd = n;
    }
    let corpus = generate_corpus(&cfg)?;
    write_corpus(&corpus, out)?;
    println!("wrote {} sessions to {}", corpus.sessions().len(), out.display());
    Ok(())
}

fn experiment(corpus: &Path, config: &Path, out: &Path, single: bool) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let configs = GridSpec::load(config)?.expand(&corpus.common_modalities())?;
    if single && configs.len() != 1 {
        return Err(Error::InvalidConfig(format!(
            "`run` takes one combination, config expands to {}; use `grid`",
            configs.len()
        )));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let report = run_grid(&corpus, &configs, Some(out))?;
    print!("{}", report.to_markdown());
    Ok(())
}

fn report(input: &Path, format: ReportFormat) -> Result<()> {
    let text = report_from_dir(input)?.render(format)?;
    let path = input.join(format.file_name());
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    print!("{text}");
    Ok(())
}

/// Returns the number of problems found.
fn validate(corpus: &Path) -> Result<usize> {
    let sessions = load_sessions_unchecked(corpus)?;
    let mut problems = 0;
    if sessions.is_empty() {
        println!("corpus has no sessions");
        problems += 1;
    }
    let mut seen = HashSet::new();
    for s in &sessions {
        if !seen.insert(s.participant_id.as_str()) {
            println!("{}: duplicate participant id", s.participant_id);
            problems += 1;
        }
        for v in validate_session(s) {
            println!("{}: {v}", s.participant_id);
            problems += 1;
        }
    }
    if problems == 0 {
        println!("ok: {} sessions", sessions.len());
    }
    Ok(problems)
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_validation() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { out, participants, seed, profile, drift, noise } => {
            synth(&out, participants, seed, profile, drift, noise)
        }
        Command::Run { corpus, config, out } => experiment(&corpus, &config, &out, true),
        Command::Grid { corpus, config, out } => experiment(&corpus, &config, &out, false),
        Command::Report { input, format } => report(&input, format),
        Command::Validate { corpus } => match validate(&corpus) {
            Ok(0) => Ok(()),
            Ok(_) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}
