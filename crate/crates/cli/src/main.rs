use std::path::PathBuf;
use std::process::ExitCode;

use bevsplat::commands::{cmd_bench, cmd_eval, cmd_fit, cmd_gen, cmd_splat, CommonOptions};
use bevsplat::pipeline::Modality;
use bevsplat::raster::SortOrder;
use bevsplat::training::FitConfig;
use bevsplat::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bevsplat",
    version,
    about = "Gaussian splatting of camera and radar features into BEV"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// BEV cell size, m.
    #[arg(long, global = true, default_value_t = 0.5)]
    grid_res: f64,
    /// Half extent of the square BEV grid, m.
    #[arg(long, global = true, default_value_t = 50.0)]
    grid_range: f64,
    /// Number of depth bins.
    #[arg(long, global = true, default_value_t = 64)]
    bins: usize,
    #[arg(long, global = true, default_value_t = 0.5)]
    dmin: f64,
    #[arg(long, global = true, default_value_t = 60.0)]
    dmax: f64,
    /// Depth-uncertainty scale on camera covariances.
    #[arg(long, global = true, default_value_t = 0.5)]
    k: f64,
    /// Opacity below which Gaussians are pruned.
    #[arg(long, global = true, default_value_t = 0.01)]
    alpha_min: f64,
    /// Blend order: z-desc, z-asc or opacity-desc.
    #[arg(long, global = true, default_value = "z-desc")]
    sort_order: SortOrder,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "BEVSPLAT_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene file.
    Gen {
        #[arg(long, default_value_t = 5)]
        n_vehicles: usize,
        #[arg(long, default_value_t = 3)]
        n_lanes: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Splat a scene into a BEV feature tensor and preview image.
    Splat {
        scene: PathBuf,
        #[arg(long, default_value = "both")]
        modality: Modality,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit heads to the scene's ground truth.
    Fit {
        scene: PathBuf,
        #[arg(long, default_value = "both")]
        modality: Modality,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Per-class IoU of a logit tensor against a ground-truth tensor.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Time forward rasterization of random batches.
    Bench {
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "1000,2000,4000,8000,16000,32000"
        )]
        n: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        feature_dim: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

impl Global {
    fn options(&self) -> CommonOptions {
        CommonOptions {
            seed: self.seed,
            grid_range: self.grid_range,
            grid_res: self.grid_res,
            bins: self.bins,
            d_min: self.dmin,
            d_max: self.dmax,
            k: self.k,
            alpha_min: self.alpha_min,
            sort_order: self.sort_order,
        }
    }
}

fn run(cli: Cli) -> bevsplat::Result<()> {
    let opts = cli.global.options();
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Gen {
            n_vehicles,
            n_lanes,
            out,
        } => {
            cmd_gen(opts.seed, n_vehicles, n_lanes, &out)?;
        }
        Command::Splat {
            scene,
            modality,
            out,
        } => {
            let s = cmd_splat(&scene, &opts.pipeline(modality)?, &out)?;
            eprintln!(
                "{} camera + {} radar Gaussians, {} channels",
                s.camera_gaussians,
                s.radar_gaussians,
                s.features.channels()
            );
        }
        Command::Fit {
            scene,
            modality,
            iterations,
            lr,
            threshold,
            out,
        } => {
            let cfg = FitConfig {
                lr,
                iterations,
                threshold,
                seed: opts.seed,
                ..FitConfig::default()
            };
            let r = cmd_fit(&scene, &opts.pipeline(modality)?, &cfg, &out)?;
            let iou: Vec<String> = r.final_iou.iter().map(|v| format!("{v:.4}")).collect();
            eprintln!("final loss {:.6}, iou {}", r.final_loss, iou.join(" "));
        }
        Command::Eval {
            pred,
            gt,
            threshold,
        } => {
            cmd_eval(&pred, &gt, threshold, &mut stdout)?;
        }
        Command::Bench {
            n,
            feature_dim,
            repeats,
        } => {
            cmd_bench(&n, feature_dim, repeats, &opts, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Divergence { .. } = e {
                eprintln!("partial metrics were kept");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
