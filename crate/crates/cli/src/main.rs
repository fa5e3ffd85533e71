use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geocloud_cli::commands::{self, CrpcArgs, EvalArgs, PipelineArgs, SynthArgs};
use geocloud_cli::io::config::{self, FlagOverrides, Settings};

#[derive(Parser)]
#[command(
    name = "geocloud",
    version,
    about = "Multi-view reconstruction from a few accurate correspondences"
)]
struct Cli {
    /// TOML file overriding the built-in defaults (flags win over the file)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Window-correlation threshold is 1 - theta
    #[arg(long, global = true)]
    theta: Option<f64>,

    /// Window length as a fraction of the profile length
    #[arg(long, global = true)]
    ell_frac: Option<f64>,

    /// Reprojection gate in pixels for new cloud points
    #[arg(long, global = true)]
    tau_d: Option<f64>,

    /// Minimum supporting-image count for new cloud points
    #[arg(long, global = true)]
    tau_i: Option<usize>,

    /// Refinement rounds of the iterative solver
    #[arg(long, global = true)]
    iters: Option<usize>,

    /// Minimum spacing for distance refinement (scene units)
    #[arg(long, global = true)]
    delta: Option<f64>,

    /// Reprojection cap for pixel refinement (pixels)
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// RNG seed for generation and subset sampling
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene: correspondences, seed distances, ground
    /// truth, and optionally rendered images
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 27)]
        points: usize,
        #[arg(long, default_value_t = 30)]
        images: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// "box" (free points) or "cylinder" (textured surface patch)
        #[arg(long, default_value = "box")]
        surface: String,
        #[arg(long, default_value_t = 756)]
        height: usize,
        #[arg(long, default_value_t = 1008)]
        width: usize,
        /// Render and write the images (cylinder surface only)
        #[arg(long)]
        render: bool,
        /// How many leading points get measured seed distances
        #[arg(long, default_value_t = 4)]
        seed_points: usize,
    },
    /// Solve world points and cameras from a correspondence file
    Wpfc {
        #[arg(long, alias = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, alias = "out", value_name = "FILE")]
        output: PathBuf,
    },
    /// Grow cloud points between two (or all) solved anchor points
    Crpc {
        #[arg(long, value_name = "FILE")]
        group: PathBuf,
        #[arg(long, value_name = "FILE")]
        corr: PathBuf,
        #[arg(long, value_name = "DIR")]
        images_dir: PathBuf,
        /// Anchor pair "A,B"; omitted means all pairs
        #[arg(long)]
        pair: Option<String>,
        #[arg(long, value_name = "FILE")]
        output: PathBuf,
        /// Write ASCII PLY instead of binary
        #[arg(long)]
        ascii: bool,
    },
    /// Metric seeding, solve, leveled growth and reports, end to end
    Pipeline {
        #[arg(long, value_name = "FILE")]
        corr: PathBuf,
        #[arg(long, value_name = "FILE")]
        seeds: PathBuf,
        #[arg(long, value_name = "DIR")]
        images_dir: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        /// Per-level minimum spacing, e.g. "0.5,0.05"
        #[arg(long)]
        spreads: Option<String>,
        #[arg(long)]
        ascii: bool,
    },
    /// Subset a cloud by minimum spacing (--delta) or error cap (--epsilon)
    Refine {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        output: PathBuf,
        #[arg(long)]
        ascii: bool,
    },
    /// Report reprojection differences (group+corr) or cloud quality (cloud)
    Eval {
        #[arg(long, value_name = "FILE")]
        group: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        corr: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        cloud: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 756)]
        height: usize,
        #[arg(long, default_value_t = 1008)]
        width: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file_config = match &cli.config {
        Some(path) => Some(config::load(path)?),
        None => None,
    };
    let flags = FlagOverrides {
        theta: cli.theta,
        ell_frac: cli.ell_frac,
        tau_d: cli.tau_d,
        tau_i: cli.tau_i,
        iters: cli.iters,
        delta: cli.delta,
        epsilon: cli.epsilon,
        seed: cli.seed,
    };
    let settings = Settings::merge(file_config.as_ref(), &flags)?;

    match cli.cmd {
        Cmd::Synth { out, points, images, sigma, surface, height, width, render, seed_points } => {
            commands::synth(
                &SynthArgs { out, points, images, sigma, surface, height, width, render, seed_points },
                &settings,
            )
        }
        Cmd::Wpfc { input, output } => commands::wpfc_cmd(&input, &output, &settings),
        Cmd::Crpc { group, corr, images_dir, pair, output, ascii } => {
            let pair = pair.map(|p| commands::parse_pair(&p)).transpose()?;
            commands::crpc_cmd(
                &CrpcArgs { group, corr, images_dir, pair, output, ascii },
                &settings,
            )
        }
        Cmd::Pipeline { corr, seeds, images_dir, out_dir, levels, spreads, ascii } => {
            let spreads = match spreads {
                Some(s) => commands::parse_spreads(&s)?,
                None => vec![0.5, 0.05],
            };
            commands::pipeline_cmd(
                &PipelineArgs { corr, seeds, images_dir, out_dir, levels, spreads, ascii },
                &settings,
            )
        }
        Cmd::Refine { input, output, ascii } => {
            commands::refine_cmd(&input, &output, ascii, &settings)
        }
        Cmd::Eval { group, corr, cloud, out_dir, height, width } => {
            commands::eval_cmd(&EvalArgs { group, corr, cloud, out_dir, height, width }, &settings)
        }
    }
}
