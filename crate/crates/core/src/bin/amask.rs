//! `amask`: Active-Mask dynamics from the command line.
//!
//! Exit codes: `analyze-filter` returns 0, 1 or 2 for the tiers
//! always-converges, 1-or-2-cycle and no-guarantee; `verify` returns 1 when an
//! asserted battery fails; usage and configuration errors return 64; other
//! failures return 70.

use std::path::PathBuf;
use std::process::ExitCode;

use active_masks::io::config::{parse_boundary, parse_dims, FilterSpec, RunConfig};
use active_masks::io::{self, summary_lines};
use active_masks::spectral::DEFAULT_TOL;
use active_masks::verify::{self, SuiteConfig};
use active_masks::{analyze_filter, AmConfig, Boundary, DomainSpec, Error, SkewStack};
use anyhow::Context;
use clap::{Parser, Subcommand};

const EXIT_USAGE: u8 = 64;
const EXIT_FAILURE: u8 = 70;

#[derive(Parser, Debug)]
#[command(name = "amask", version, about = "Active-Mask (skewed majority-vote) dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of a run config file.
#[derive(clap::Args, Debug)]
struct RunOverrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    labels: Option<usize>,
    #[arg(long, value_parser = ["circular", "padded"])]
    boundary: Option<String>,
    /// Output directory (default: config `output`, then $AMASK_OUTPUT_DIR).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment an image: writes checkpoint label maps, the final map,
    /// trajectory.csv and summary.txt.
    Segment {
        config: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Print the DFT of a filter and its convergence tier.
    AnalyzeFilter {
        /// dirac | box | box3 | box3x3 | plus | gaussian | taps:<file>
        filter: String,
        /// Domain extents, e.g. 8 or 4x4.
        #[arg(long)]
        domain: String,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run the dynamics from every initial state of a tiny domain.
    Enumerate {
        /// dirac | box | box3 | box3x3 | plus | gaussian | taps:<file>
        filter: String,
        #[arg(long)]
        domain: String,
        #[arg(long, default_value_t = 2)]
        labels: usize,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value = "circular", value_parser = ["circular", "padded"])]
        boundary: String,
        #[arg(long, default_value_t = verify::DEFAULT_ENUMERATION_BUDGET)]
        budget: u64,
    },
    /// Run the theorem battery and print a key=value report.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        /// Smaller corpora for a fast smoke run.
        #[arg(long)]
        quick: bool,
    },
    /// Independently seeded runs, one trajectory CSV each.
    Bench {
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[command(flatten)]
        overrides: RunOverrides,
    },
}

/// Error carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let usage = error.chain().any(|c| {
            matches!(
                c.downcast_ref::<Error>(),
                Some(Error::Config(_) | Error::InvalidArgument(_) | Error::BudgetExceeded { .. })
            )
        });
        Failure {
            code: if usage { EXIT_USAGE } else { EXIT_FAILURE },
            error,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn load_config(path: &PathBuf, o: &RunOverrides) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(m) = o.max_iters {
        cfg.max_iterations = Some(m);
    }
    if let Some(l) = o.labels {
        cfg.labels = l;
    }
    if let Some(b) = &o.boundary {
        cfg.boundary = parse_boundary(b)?;
    }
    if let Some(s) = o.scale {
        if let FilterSpec::Gaussian(_) = cfg.filter {
            cfg.filter = FilterSpec::Gaussian(active_masks::GaussianSpec::new(s)?);
        }
    }
    if let Some(out) = &o.output {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn domain_from(text: &str, boundary: Boundary) -> Result<DomainSpec, Failure> {
    Ok(DomainSpec::new(parse_dims(text)?, boundary)?)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Segment { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let out = cfg.output_dir();
            let result = io::segment(&cfg, &out)
                .with_context(|| format!("segmenting into {}", out.display()))?;
            print!("{}", summary_lines(&result.report));
            println!("output={}", out.display());
            Ok(0)
        }
        Command::AnalyzeFilter {
            filter,
            domain,
            scale,
            tol,
        } => {
            let d = domain_from(&domain, Boundary::Circular)?;
            let spec = FilterSpec::parse(&filter, scale, &std::env::current_dir().map_err(anyhow::Error::from)?)?;
            let g = spec.circular_filter(&d)?;
            let r = analyze_filter(&g, tol)?;
            println!("filter={filter}");
            println!("domain={d}");
            println!("tier={}", r.tier);
            println!("is_even={}", r.is_even);
            println!("is_nonnegative={}", r.is_nonnegative);
            println!("is_diag_dominant={}", r.is_diag_dominant);
            println!("min_spectrum={:e}", r.min_spectrum);
            println!("max_imag={:e}", r.max_imag);
            let re: Vec<String> = r.spectrum.real_parts().iter().map(|v| format!("{v}")).collect();
            println!("spectrum={}", re.join(","));
            Ok(r.tier.exit_code() as u8)
        }
        Command::Enumerate {
            filter,
            domain,
            labels,
            scale,
            boundary,
            budget,
        } => {
            let d = domain_from(&domain, parse_boundary(&boundary)?)?;
            let spec = FilterSpec::parse(&filter, scale, &std::env::current_dir().map_err(anyhow::Error::from)?)?;
            let op = match d.boundary() {
                Boundary::Circular => active_masks::VotingOperator::circular(spec.circular_filter(&d)?)?,
                Boundary::ZeroPadded => spec.operator(&d)?,
            };
            let config = AmConfig::new(op, SkewStack::zeros(&d, labels))?;
            let r = verify::enumerate_all_with_budget(&config, budget)?;
            println!("domain={d}");
            println!("labels={labels}");
            println!("states={}", r.states_enumerated);
            for (k, c) in &r.histogram {
                println!("histogram.{k}={c}");
            }
            println!("max_transient={}", r.max_transient);
            for (k, w) in &r.witnesses {
                let s: Vec<String> = w.labels().iter().map(|l| l.to_string()).collect();
                println!("witness.{k}={}", s.join(","));
            }
            Ok(0)
        }
        Command::Verify { seed, quick } => {
            let mut cfg = SuiteConfig::default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if quick {
                cfg.even_filters = 24;
                cfg.skew_stacks = 3;
                cfg.exploratory_filters = 12;
            }
            let report = verify::theorem_suite(&cfg);
            print!("{report}");
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Bench {
            config,
            runs,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let out = cfg.output_dir();
            let reports = io::bench(&cfg, runs, &out)?;
            for (r, rep) in reports.iter().enumerate() {
                println!(
                    "run={r} seed={} converged={} cycle_length={} iterations={}",
                    cfg.seed.wrapping_add(r as u64),
                    rep.converged,
                    rep.cycle_length,
                    rep.iterations_run
                );
            }
            println!("output={}", out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("amask: {error:#}");
            ExitCode::from(code)
        }
    }
}
