use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vnrf::context::compute_context;
use vnrf::experiments::{self, load_summary, parse_configuration, write_plot_data, PlotKind, SweepConfig};
use vnrf::oracle::conditional_from_phi;
use vnrf::sampler::NoiseParams;
use vnrf::specification::SpecificationParams;
use vnrf::verification;
use vnrf::{BoundaryCondition, Error, Site};

#[derive(Parser)]
#[command(name = "vnrf", version, about = "Contexts and finiteness statistics of noisily observed Ising fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) a parameter sweep described by a TOML file.
    Sweep { config: PathBuf },
    /// Print the context of one site of a configuration given as rows of +/-.
    Context {
        configuration: PathBuf,
        /// Site as `row,col`.
        #[arg(long, value_parser = parse_site)]
        site: Site,
        #[arg(long, default_value = "plus")]
        boundary: BoundaryCondition,
        /// With --epsilon, also print P(X_i = +1 | context).
        #[arg(long, requires = "epsilon")]
        beta: Option<f64>,
        #[arg(long, requires = "beta")]
        epsilon: Option<f64>,
    },
    /// Run the acceptance checks; exits nonzero if any fails.
    Verify {
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// Write plots/<kind>.csv from a summary.json (or the directory holding it).
    PlotData {
        results: PathBuf,
        #[arg(long)]
        kind: String,
    },
}

fn parse_site(s: &str) -> Result<Site, String> {
    let (r, c) = s.split_once(',').ok_or_else(|| format!("expected row,col, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<i32>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Site::new(parse(r)?, parse(c)?))
}

fn sweep(config: PathBuf) -> vnrf::Result<ExitCode> {
    let config = SweepConfig::from_file(&config)?;
    let out = config.resolved_output_dir();
    let results = experiments::run_sweep_in(&config, &out)?;
    for r in &results {
        println!(
            "{}: spanning {:.4} ± {:.4}, truncated {:.4}",
            r.cell, r.spanning.value, r.spanning.stderr, r.truncated_fraction
        );
    }
    println!("wrote {} rows to {}", results.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn context(
    path: PathBuf,
    site: Site,
    boundary: BoundaryCondition,
    beta: Option<f64>,
    epsilon: Option<f64>,
) -> vnrf::Result<ExitCode> {
    let text = fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.clone(),
        context: "reading configuration".into(),
        source,
    })?;
    let x = parse_configuration(&text, boundary)?;
    let c = compute_context(&x, site)?;
    if c.is_resolved() {
        let members: Vec<String> = c.members().iter().map(|s| s.to_string()).collect();
        println!("site {site}: resolved, {} members", members.len());
        println!("{}", members.join(" "));
        if let (Some(beta), Some(eps)) = (beta, epsilon) {
            let p = conditional_from_phi(&SpecificationParams::ising(beta)?, &NoiseParams::new(eps)?, &x, site)?;
            println!("P(+1 | context) = {p}");
        }
    } else {
        println!("site {site}: truncated by the window");
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(only: Vec<u8>) -> vnrf::Result<ExitCode> {
    let ids: Vec<u8> = if only.is_empty() { verification::CRITERIA.iter().map(|c| c.0).collect() } else { only };
    let mut failed = 0;
    for id in ids {
        let report = verification::run_criterion(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no acceptance criterion {id}")))?;
        println!("{}", report.line());
        failed += usize::from(!report.passed);
    }
    if failed > 0 {
        eprintln!("{failed} check(s) failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn plot_data(results: PathBuf, kind: String) -> vnrf::Result<ExitCode> {
    let kind: PlotKind = kind.parse()?;
    let summary = load_summary(&results)?;
    let out = match std::env::var_os(experiments::OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ if results.is_dir() => results.clone(),
        _ => results.parent().map(PathBuf::from).unwrap_or_default(),
    };
    let path = write_plot_data(&summary, kind, &out)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sweep { config } => sweep(config),
        Command::Context { configuration, site, boundary, beta, epsilon } => {
            context(configuration, site, boundary, beta, epsilon)
        }
        Command::Verify { only } => verify(only),
        Command::PlotData { results, kind } => plot_data(results, kind),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}
