//! `spdt`: ingest location logs, fit, generate, and simulate diffusion.

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "spdt", version, about = "SPDT contact graphs and airborne diffusion")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Location updates to a temporal graph and CIP samples.
    Ingest(IngestArgs),
    /// Fit model parameters to a CIP sample file.
    Fit(FitArgs),
    /// Synthesize an SPDT graph.
    Generate(GenerateArgs),
    /// Generate a basic activity-driven network.
    Badn(BadnArgs),
    /// Drop indirect links and cut the rest at host departure.
    ClipSpst(ClipArgs),
    /// Fill empty host-days by copying active days.
    Densify(DensifyArgs),
    /// Run SIR diffusion on a graph.
    Simulate(SimulateArgs),
    /// Compare two simulated series.
    Compare(CompareArgs),
    /// Static structure of a graph.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_graph: PathBuf,
    #[arg(long)]
    pub out_cip: PathBuf,
    /// Indirect transmission window, seconds.
    #[arg(long, default_value_t = 10_800)]
    pub delta: i64,
    #[arg(long, default_value_t = 300)]
    pub step: u32,
    #[arg(long, default_value_t = 20.0)]
    pub radius: f64,
    /// Largest gap between updates of one visit, seconds.
    #[arg(long, default_value_t = 1800)]
    pub max_gap: i64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub cip: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub step: u32,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Parameter file; the fitted Shanghai values when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub nodes: u32,
    #[arg(long)]
    pub days: u32,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Print RSE of each CIP marginal against its model law.
    #[arg(long)]
    pub rse: bool,
}

#[derive(Args, Debug)]
pub struct BadnArgs {
    #[arg(long)]
    pub nodes: u32,
    #[arg(long)]
    pub days: u32,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: BadnModelArgs,
}

#[derive(Args, Debug, Clone)]
pub struct BadnModelArgs {
    /// Activations per day.
    #[arg(long, default_value_t = 3.0)]
    pub f: f64,
    /// Average stay, minutes.
    #[arg(long, default_value_t = 50.0)]
    pub stay_min: f64,
    /// Links per activation.
    #[arg(long, default_value_t = 2)]
    pub m: u32,
    #[arg(long, default_value_t = 300)]
    pub step: u32,
}

#[derive(Args, Debug)]
pub struct ClipArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DensifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub days: u32,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Graph file to simulate on.
    #[arg(long, required_unless_present = "badn_nodes", conflicts_with = "badn_nodes")]
    pub graph: Option<PathBuf>,
    /// Simulate on a BADN of this many nodes, regenerated on the fly.
    #[arg(long)]
    pub badn_nodes: Option<u32>,
    /// Seed of the on-the-fly BADN.
    #[arg(long, requires = "badn_nodes")]
    pub badn_seed: Option<u64>,
    #[command(flatten)]
    pub badn: BadnModelArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub runs: u32,
    /// Particle removal rates, 1/h, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub r: Vec<f64>,
    #[arg(long, default_value_t = 0.33)]
    pub sigma: f64,
    /// Particle generation rate, PFU/s.
    #[arg(long, default_value_t = 0.304)]
    pub g: f64,
    /// Breathing rate, L/min.
    #[arg(long, default_value_t = 7.5)]
    pub p: f64,
    /// Proximity volume, m^3.
    #[arg(long = "V", default_value_t = 2512.0)]
    pub volume: f64,
    #[arg(long, default_value_t = 500)]
    pub seeds: u32,
    #[arg(long, default_value_t = 32)]
    pub days: u32,
    #[arg(long, default_value_t = 3)]
    pub min_infectious_days: u32,
    #[arg(long, default_value_t = 5)]
    pub max_infectious_days: u32,
    /// Split exposure of links that cross midnight between days.
    #[arg(long)]
    pub split_midnight: bool,
    /// Series output, `run,day,S,I,R,new_I`.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-run summary output.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Reference ("real") series.
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub observed: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `degree,in_count,out_count`.
    #[arg(long)]
    pub degree_hist: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Fit(a) => commands::fit(a),
        Command::Generate(a) => commands::generate(a),
        Command::Badn(a) => commands::badn(a),
        Command::ClipSpst(a) => commands::clip_spst(a),
        Command::Densify(a) => commands::densify(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Compare(a) => commands::compare(a),
        Command::Analyze(a) => commands::analyze(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
