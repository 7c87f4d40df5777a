//! Command-line driver: construct, eval, verify, approx, render.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gatenet::construct::{synthesize, SynthesisConfig, ZeroExclusion};
use gatenet::geometry::CoverStrategy;
use gatenet::net::eval_net;
use gatenet::{approx, io, render, verify, Error, TAU};

/// Environment variable naming a JSON file with default construction
/// settings (same shape as the serialized `config` metadata field).
const CONFIG_ENV: &str = "GATENET_CONFIG";

#[derive(Parser)]
#[command(name = "gatenet", version, about = "Training-free gate-network ResNet synthesis and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoverArg {
    PerPoint,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZeroExclusionArg {
    LpFirst,
    OrGate,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a classifier network for a labeled dataset
    Construct(ConstructArgs),
    /// Evaluate a network on a file of points
    Eval(EvalArgs),
    /// Check a network's classification of a dataset
    Verify(VerifyArgs),
    /// Build a piecewise-constant approximator from (x, y) samples
    Approx(ApproxArgs),
    /// Render 2-D decision regions as SVG
    Render(RenderArgs),
}

#[derive(Args)]
struct ConstructArgs {
    dataset: PathBuf,
    #[arg(long, value_enum)]
    cover: Option<CoverArg>,
    #[arg(long, value_enum)]
    zero_exclusion: Option<ZeroExclusionArg>,
    /// Pass-through floor for surviving coordinates
    #[arg(long)]
    margin: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    net: PathBuf,
    points: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    net: PathBuf,
    dataset: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    levels: usize,
    #[arg(long)]
    steepness: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    net: PathBuf,
    /// x0,x1,y0,y1
    #[arg(long, allow_hyphen_values = true)]
    bounds: String,
    /// W,H grid cells
    #[arg(long)]
    res: String,
    /// Dataset file to overlay as points
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Infeasible => 3,
        Error::VerificationFailed(_) => 1,
        _ => 2,
    }
}

fn base_config() -> Result<SynthesisConfig, Error> {
    match std::env::var_os(CONFIG_ENV) {
        Some(path) => {
            let text = std::fs::read_to_string(Path::new(&path))?;
            serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
        }
        None => Ok(SynthesisConfig::default()),
    }
}

fn parse_csv_floats(s: &str, expected: usize, what: &str) -> Result<Vec<f64>, Error> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == expected => Ok(v),
        _ => Err(Error::DegenerateInput(format!(
            "{} must be {} comma-separated numbers, got {:?}",
            what, expected, s
        ))),
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Construct(args) => {
            let d = io::load_dataset(&args.dataset)?;
            let mut cfg = base_config()?;
            if let Some(c) = args.cover {
                cfg.cover = match c {
                    CoverArg::PerPoint => CoverStrategy::PerPoint,
                    CoverArg::Greedy => CoverStrategy::Greedy,
                };
            }
            if let Some(z) = args.zero_exclusion {
                cfg.zero_exclusion = match z {
                    ZeroExclusionArg::LpFirst => ZeroExclusion::LpFirst,
                    ZeroExclusionArg::OrGate => ZeroExclusion::OrGateAlways,
                };
            }
            if let Some(m) = args.margin {
                if !(m.is_finite() && m > 0.0) {
                    return Err(Error::DegenerateInput(format!("margin {} must be positive", m)));
                }
                cfg.margin = m;
            }
            let s = synthesize(&d, &cfg)?;
            io::save_net(&s.net, &args.output)?;
            println!(
                "constructed network: widths {:?}, {} branches, verified {}/{} points",
                s.net.widths(),
                s.parallel.branches.len(),
                d.len(),
                d.len()
            );
            Ok(0)
        }
        Command::Eval(args) => {
            let net = io::load_net(&args.net)?;
            let points = io::load_points(&args.points)?;
            let mut lines = String::new();
            for p in &points {
                let out = eval_net(&net, p)?;
                let row: Vec<String> = out.iter().map(|x| x.to_string()).collect();
                lines.push_str(&row.join(","));
                lines.push('\n');
            }
            match args.output {
                Some(path) => std::fs::write(path, lines)?,
                None => print!("{}", lines),
            }
            Ok(0)
        }
        Command::Verify(args) => {
            let net = io::load_net(&args.net)?;
            let d = io::load_dataset(&args.dataset)?;
            let report = verify::verify_dataset(&net, &d, TAU)?;
            println!("{}/{} pass", report.pass_count, d.len());
            if let Some(path) = args.output {
                io::save_report(&report, &path)?;
            }
            Ok(if report.all_passed() { 0 } else { 1 })
        }
        Command::Approx(args) => {
            let samples = io::load_samples(&args.samples)?;
            let mut spec = approx::fit_pwc(&samples, args.levels)?;
            if let Some(s) = args.steepness {
                spec.steepness = s;
            }
            let (net, read_off) = approx::build_approximator(&spec)?;
            io::save_net(&net, &args.output)?;
            println!(
                "approximator: {} levels on [{}, {}], read-off = output[1] - {}",
                spec.levels.len(),
                spec.domain.0,
                spec.domain.1,
                read_off.elevation
            );
            Ok(0)
        }
        Command::Render(args) => {
            let net = io::load_net(&args.net)?;
            let b = parse_csv_floats(&args.bounds, 4, "--bounds")?;
            let r = parse_csv_floats(&args.res, 2, "--res")?;
            if r.iter().any(|&x| x < 1.0 || x.fract() != 0.0) {
                return Err(Error::DegenerateInput(format!("--res must be positive integers, got {:?}", args.res)));
            }
            let overlay = match &args.dataset {
                Some(path) => Some(io::load_dataset(path)?),
                None => None,
            };
            let svg = render::render_regions(
                &net,
                (b[0], b[1], b[2], b[3]),
                (r[0] as usize, r[1] as usize),
                overlay.as_ref(),
                TAU,
            )?;
            std::fs::write(&args.output, svg)?;
            println!("wrote {}", args.output.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code_for(&e))
        }
    }
}
