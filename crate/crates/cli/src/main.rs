use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uvforge_cli::{
    cmd_edit, cmd_eval, cmd_fit, cmd_interp, cmd_render, cmd_synth, cmd_train, CliError, EditArgs, EvalArgs, FitArgs,
    InterpArgs, RenderArgs, Result, TrainArgs,
};

#[derive(Parser)]
#[command(name = "uvforge", version, about = "UV-texture GAN experiments on a synthetic morphable model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_color(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [r, g, b] if v.iter().all(|c| (0.0..=1.0).contains(c)) => Ok([r, g, b]),
        _ => Err(format!("expected three comma-separated values in [0, 1], got '{s}'")),
    }
}

fn parse_steps(s: &str) -> std::result::Result<(usize, usize), String> {
    let bad = || format!("expected N or NxM, got '{s}'");
    let mut it = s.split('x').map(|p| p.parse::<usize>().map_err(|_| bad()));
    let u = it.next().ok_or_else(bad)??;
    let v = it.next().transpose()?.unwrap_or(u);
    if it.next().is_some() || u == 0 || v == 0 {
        return Err(bad());
    }
    Ok((u, v))
}

#[derive(Subcommand)]
enum Command {
    /// Build the synthetic model and dataset into OUT/model and OUT/dataset.
    Synth {
        /// Synthesis config (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit shape, camera, light and linear texture to one image.
    Fit {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
        /// Fitting config (JSON); the flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        lambda_pix: Option<f64>,
        #[arg(long)]
        lambda_lm: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write trace.png.
        #[arg(long)]
        plot: bool,
    },
    /// Train the UV generator through the renderer.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Training config (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's total step count.
        #[arg(long)]
        steps: Option<u64>,
        /// Checkpoint directory to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: bool,
    },
    /// FID proxy of a checkpoint (or the ground-truth UV maps) against the dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required_unless_present = "ground_truth")]
        checkpoint: Option<PathBuf>,
        /// Render the dataset's own UV maps instead of generated ones.
        #[arg(long)]
        ground_truth: bool,
        /// Also report the masked FID.
        #[arg(long)]
        masked: bool,
        /// downsample | projection
        #[arg(long, default_value = "downsample")]
        extractor: String,
        /// Use the first N samples.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_color, default_value = "0.5,0.5,0.5")]
        bg_color: [f64; 3],
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render interpolation grids between 2-4 corners.
    Interp {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corner JSON files ({"params": ..., "latent": [...]}), top-left first.
        #[arg(long, num_args = 2..=4, required = true)]
        corners: Vec<PathBuf>,
        /// Columns, or COLSxROWS.
        #[arg(long, value_parser = parse_steps, default_value = "5")]
        steps: (usize, usize),
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, value_parser = parse_color, default_value = "0.5,0.5,0.5")]
        bg_color: [f64; 3],
        #[arg(long)]
        out: PathBuf,
    },
    /// Move a latent along an attribute hyperplane and score the renders.
    Edit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled latents ({"latents": [[...]], "labels": [...]}).
        #[arg(long, required_unless_present = "hyperplane", conflicts_with = "hyperplane")]
        labels: Option<PathBuf>,
        /// Hyperplane JSON ({"normal": [...], "bias": x}).
        #[arg(long)]
        hyperplane: Option<PathBuf>,
        #[arg(long)]
        latent: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-2,-1,0,1,2")]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 1e-2)]
        lambda: f64,
        #[arg(long, default_value_t = 10_000)]
        svm_steps: usize,
        #[arg(long, default_value = "downsample")]
        extractor: String,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, value_parser = parse_color, default_value = "0.5,0.5,0.5")]
        bg_color: [f64; 3],
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one parameter set with a UV map or its linear texture.
    Render {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        uv: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, value_parser = parse_color, default_value = "0.5,0.5,0.5")]
        bg_color: [f64; 3],
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("UVFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("UVFORGE_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth { config, out } => {
            let o = cmd_synth(config.as_deref(), &out)?;
            println!("model: {}\ndataset: {}", o.model_dir.display(), o.dataset_dir.display());
        }
        Command::Fit {
            image,
            landmarks,
            model,
            init,
            config,
            steps,
            lr,
            lambda_pix,
            lambda_lm,
            out,
            plot,
        } => {
            let fit = cmd_fit(&FitArgs {
                image,
                landmarks,
                model,
                init,
                config,
                steps,
                lr,
                lambda_pix,
                lambda_lm,
                out,
                plot,
            })?;
            let first = fit.trace.first().map_or(f64::NAN, |r| r.total);
            println!("loss {first:.6} -> {:.6}", fit.loss);
        }
        Command::Train {
            dataset,
            model,
            config,
            steps,
            resume,
            out,
            plot,
        } => {
            let rows = cmd_train(&TrainArgs {
                dataset,
                model,
                config,
                steps,
                resume,
                out,
                plot,
            })?;
            if let Some(fid) = rows.iter().rev().find_map(|r| r.masked_fid) {
                println!("final masked FID proxy {fid:.6}");
            }
        }
        Command::Eval {
            dataset,
            model,
            checkpoint,
            ground_truth,
            masked,
            extractor,
            n,
            seed,
            bg_color,
            out,
        } => {
            for r in cmd_eval(&EvalArgs {
                dataset,
                model,
                checkpoint,
                ground_truth,
                masked,
                extractor,
                n,
                seed,
                bg_color,
                out,
            })? {
                println!("{} {:.6}", r.metric, r.value);
            }
        }
        Command::Interp {
            model,
            checkpoint,
            corners,
            steps,
            size,
            bg_color,
            out,
        } => {
            cmd_interp(&InterpArgs {
                model,
                checkpoint,
                corners,
                steps,
                size,
                bg_color,
                out,
            })?;
        }
        Command::Edit {
            model,
            checkpoint,
            labels,
            hyperplane,
            latent,
            params,
            alpha,
            lambda,
            svm_steps,
            extractor,
            size,
            bg_color,
            out,
        } => {
            for r in cmd_edit(&EditArgs {
                model,
                checkpoint,
                labels,
                hyperplane,
                latent,
                params,
                alphas: alpha,
                lambda,
                svm_steps,
                extractor,
                size,
                bg_color,
                out,
            })? {
                println!("alpha {} score {:.6}", r.alpha, r.score);
            }
        }
        Command::Render {
            params,
            model,
            uv,
            size,
            bg_color,
            out,
        } => {
            cmd_render(&RenderArgs {
                params,
                model,
                uv,
                size,
                bg_color,
                out,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
