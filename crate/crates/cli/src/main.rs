use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use iqswitch::bounds::{self, BoundsError};
use iqswitch::geometry::project_onto_cone;
use iqswitch::io::{read_matrix, to_rounded_json};
use iqswitch::matching::max_weight_matching_deterministic;
use iqswitch::model::validate_traffic;
use iqswitch::sim::config::ConfigFile;
use iqswitch::sim::{heavy_traffic_sweep, run_steady_state, SimError};
use iqswitch::QueueMatrix;

#[derive(Parser)]
#[command(
    name = "iqswitch",
    version,
    about = "MaxWeight input-queued switch simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the steady-state mean queue length for one configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results.json")]
        out: PathBuf,
    },
    /// Simulate a decreasing sequence of epsilon and tabulate against the bounds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = bounds::DEFAULT_ORDER)]
        r: u32,
        /// Directory receiving sweep.csv and sweep.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print the queue-length bounds with their intermediate terms.
    Bounds(BoundsArgs),
    /// Project a matrix onto the cone of row-plus-column matrices.
    Project { file: PathBuf },
    /// Find a maximum-weight schedule for a nonnegative integer matrix.
    Match { file: PathBuf },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct BoundsSource {
    /// Traffic model configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Uniform Bernoulli traffic: N EPSILON.
    #[arg(long, num_args = 2, value_names = ["N", "EPSILON"])]
    bernoulli: Option<Vec<String>>,
    /// Uniform Bernoulli traffic with epsilon = gamma n^-beta: N BETA GAMMA.
    #[arg(long, num_args = 3, value_names = ["N", "BETA", "GAMMA"])]
    scaling: Option<Vec<String>>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    source: BoundsSource,
    #[arg(long, default_value_t = bounds::DEFAULT_ORDER)]
    r: u32,
}

enum Failure {
    Config(String),
    Invariant(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_invariant_violation() {
            Failure::Invariant(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<BoundsError> for Failure {
    fn from(e: BoundsError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn json_text<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    to_rounded_json(value).map_err(config_err)
}

fn parse_arg<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, Failure> {
    s.parse()
        .map_err(|_| config_err(format!("cannot parse {what} from {s:?}")))
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut file = ConfigFile::from_path(config)?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    let cfg = file.sim_config()?;
    let estimate = run_steady_state(&cfg)?;
    let text = json_text(&estimate)?;
    write_file(out, &(text.clone() + "\n"))?;
    println!("{text}");
    Ok(())
}

fn sweep(
    config: &Path,
    eps: &[f64],
    seed: Option<u64>,
    r: u32,
    out_dir: &Path,
) -> Result<(), Failure> {
    let mut file = ConfigFile::from_path(config)?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    let cfg = file.sim_config()?;
    let table = heavy_traffic_sweep(&cfg, eps, r)?;
    std::fs::create_dir_all(out_dir).map_err(config_err)?;
    table.write_csv(out_dir.join("sweep.csv"))?;
    table.write_json(out_dir.join("sweep.json"))?;
    print!("{}", table.to_csv());
    Ok(())
}

fn bounds_cmd(args: &BoundsArgs) -> Result<(), Failure> {
    let src = &args.source;
    let report = if let Some(path) = &src.config {
        let model = ConfigFile::from_path(path)?.model()?;
        validate_traffic(&model).map_err(config_err)?;
        bounds::theorem1_bracket(&model, args.r)?
    } else if let Some(v) = &src.bernoulli {
        bounds::bernoulli_bracket(parse_arg(&v[0], "n")?, parse_arg(&v[1], "epsilon")?, args.r)?
    } else if let Some(v) = &src.scaling {
        bounds::scaling_regime_bracket(
            parse_arg(&v[0], "n")?,
            parse_arg(&v[1], "beta")?,
            parse_arg(&v[2], "gamma")?,
            args.r,
        )?
    } else {
        unreachable!("clap requires one source");
    };
    println!("{}", json_text(&report)?);
    Ok(())
}

fn project(file: &Path) -> Result<(), Failure> {
    let x = read_matrix(file).map_err(config_err)?;
    let d = project_onto_cone(&x).map_err(|e| Failure::Invariant(e.to_string()))?;
    let out = json!({
        "q_para": d.q_para.to_rows(),
        "q_perp": d.q_perp.to_rows(),
        "w": d.w,
        "w_tilde": d.w_tilde,
        "kkt_residual": d.kkt_residual,
        "iterations": d.iterations,
        "norms": {
            "x": x.norm(),
            "q_para": d.q_para.norm(),
            "q_perp": d.q_perp.norm(),
        },
    });
    println!("{}", json_text(&out)?);
    Ok(())
}

fn match_cmd(file: &Path) -> Result<(), Failure> {
    let x = read_matrix(file).map_err(config_err)?;
    if let Some(bad) = x
        .as_slice()
        .iter()
        .find(|v| **v < 0.0 || v.fract() != 0.0 || **v > u32::MAX as f64)
    {
        return Err(config_err(format!(
            "weights must be nonnegative integers, got {bad}"
        )));
    }
    let q: QueueMatrix = x.map(|&v| v as u64);
    let result = max_weight_matching_deterministic(&q);
    let out = json!({
        "permutation": result.schedule.perm(),
        "weight": result.weight,
        "w": result.w,
        "w_tilde": result.w_tilde,
    });
    println!("{}", json_text(&out)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, seed, out } => simulate(config, *seed, out),
        Command::Sweep {
            config,
            eps,
            seed,
            r,
            out_dir,
        } => sweep(config, eps, *seed, *r, out_dir),
        Command::Bounds(args) => bounds_cmd(args),
        Command::Project { file } => project(file),
        Command::Match { file } => match_cmd(file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant violation: {msg}");
            ExitCode::from(2)
        }
    }
}
