//! Command-line driver: prior sampling, inference, proposal training, and
//! evaluation over the library's experiment orchestration.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use contourcad::experiment::{
    run_evaluate, run_infer, run_sample, run_train, total_acceptance, ExperimentConfig,
    SampleConfig, TrainConfig, DEFAULT_PGM_THRESHOLD, REPORT_FILE,
};
use contourcad::inference::{HmcOptions, MixtureWeights, SamplerOptions};
use contourcad::likelihood::default_sigma0;
use contourcad::proposal::DEFAULT_FEATURE_GRID;
use contourcad::render::RenderConfig;
use contourcad::scene::ProgramKind;
use contourcad::ModelConfig;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Program {
    Object,
    Body,
}

impl From<Program> for ProgramKind {
    fn from(p: Program) -> Self {
        match p {
            Program::Object => ProgramKind::Object,
            Program::Body => ProgramKind::Body,
        }
    }
}

/// `WxH` image size.
fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err("render size must be positive".into());
    }
    Ok((w, h))
}

/// `single,block,data,hmc` kernel weights.
fn parse_alphas(s: &str) -> Result<MixtureWeights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad weight in {s:?}")))
        .collect::<Result<_, String>>()?;
    if parts.len() != 4 {
        return Err(format!("expected 4 comma-separated weights, got {}", parts.len()));
    }
    let w = MixtureWeights { single: parts[0], block: parts[1], data: parts[2], hmc: parts[3] };
    w.normalized().map_err(|e| e.to_string())?;
    Ok(w)
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
struct Shared {
    /// Generative program to work with.
    #[arg(long, value_enum, default_value = "object")]
    program: Program,

    /// Model configuration file (TOML); defaults are built in.
    #[arg(long)]
    model_config: Option<PathBuf>,

    /// Render target as WxH pixels. The focal length scales with the width
    /// so framing is resolution independent.
    #[arg(long, value_parser = parse_size, default_value = "128x128")]
    render_size: (u32, u32),

    /// Master random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Shared {
    fn model(&self) -> Result<ModelConfig> {
        Ok(match &self.model_config {
            Some(path) => ModelConfig::from_path(path)
                .with_context(|| format!("loading model config {}", path.display()))?,
            None => ModelConfig::default(),
        })
    }

    fn render(&self) -> RenderConfig {
        let (width, height) = self.render_size;
        let base = RenderConfig::default();
        RenderConfig {
            width,
            height,
            focal_px: base.focal_px * width as f64 / base.width as f64,
            ..base
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "contourcad", version, about = "Scene reconstruction from contour images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw scenes from the prior; write traces, meshes, and images.
    Sample {
        #[command(flatten)]
        shared: Shared,

        /// Number of scenes to draw.
        #[arg(long, default_value_t = 4)]
        n: usize,

        /// Output directory.
        #[arg(long, env = "CONTOURCAD_OUT", default_value = "out")]
        out: PathBuf,
    },

    /// Invert an observation by MCMC; write chain logs and the MAP scene.
    Infer {
        #[command(flatten)]
        shared: Shared,

        /// Observed contour image (.pbm mask or .pgm to threshold).
        #[arg(long, conflicts_with = "synthetic_seed")]
        observation: Option<PathBuf>,

        /// Sample ground truth from the prior with this seed and invert its
        /// render instead of reading an observation file.
        #[arg(long)]
        synthetic_seed: Option<u64>,

        /// Independent chains.
        #[arg(long, default_value_t = 5)]
        chains: usize,

        /// Iterations per chain.
        #[arg(long, default_value_t = 2000)]
        iters: u64,

        /// Kernel mixture weights as single,block,data,hmc.
        #[arg(long, value_parser = parse_alphas)]
        alphas: Option<MixtureWeights>,

        /// Learned proposal index (enables the data-driven kernel).
        #[arg(long)]
        index: Option<PathBuf>,

        /// Neighbors pooled by the data-driven kernel.
        #[arg(long, default_value_t = 10)]
        knn: usize,

        /// Chamfer noise scale in pixels; defaults to 2 px scaled by
        /// resolution.
        #[arg(long)]
        sigma: Option<f64>,

        /// Gray threshold for PGM observations.
        #[arg(long, default_value_t = DEFAULT_PGM_THRESHOLD)]
        threshold: u8,

        /// Output directory.
        #[arg(long, env = "CONTOURCAD_OUT", default_value = "out")]
        out: PathBuf,
    },

    /// Build a proposal index from prior samples.
    TrainProposals {
        #[command(flatten)]
        shared: Shared,

        /// Number of prior draws.
        #[arg(long, default_value_t = 50000)]
        n: usize,

        /// Pooling grid for contour features.
        #[arg(long, default_value_t = DEFAULT_FEATURE_GRID)]
        grid: u32,

        /// Index file to write (a `.names.txt` sidecar appears next to it).
        #[arg(long, default_value = "index.bin")]
        out: PathBuf,
    },

    /// Score a finished run directory against a ground-truth trace.
    Evaluate {
        #[command(flatten)]
        shared: Shared,

        /// Run directory produced by `infer`.
        #[arg(long)]
        run: PathBuf,

        /// Ground-truth trace file.
        #[arg(long)]
        ground_truth: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sample { shared, n, out } => {
            let cfg = SampleConfig {
                program: shared.program.into(),
                model: shared.model()?,
                render: shared.render(),
                n,
                seed: shared.seed,
                out_dir: out,
            };
            let files = run_sample(&cfg)?;
            println!("wrote {} files to {}", files.len(), cfg.out_dir.display());
        }

        Command::Infer {
            shared,
            observation,
            synthetic_seed,
            chains,
            iters,
            alphas,
            index,
            knn,
            sigma,
            threshold,
            out,
        } => {
            if observation.is_none() && synthetic_seed.is_none() {
                bail!("one of --observation or --synthetic-seed is required");
            }
            let render = shared.render();
            let mut sampler = SamplerOptions::default();
            if let Some(w) = alphas {
                sampler.weights = w;
            }
            sampler.data.k = knn;
            sampler.hmc = HmcOptions::default();
            let cfg = ExperimentConfig {
                program: shared.program.into(),
                model: shared.model()?,
                sigma0: sigma.unwrap_or_else(|| default_sigma0(render.width, render.height)),
                render,
                sampler,
                chains,
                iterations: iters,
                seed: shared.seed,
                observation,
                synthetic_seed,
                pgm_threshold: threshold,
                index_path: index,
                out_dir: out,
            };
            let outcome = run_infer(&cfg)?;
            println!(
                "map log posterior {:.4} (prior {:.4}, likelihood {:.4})",
                outcome.map.log_posterior(),
                outcome.map.log_prior,
                outcome.map.log_likelihood
            );
            for (kernel, accepts, attempts) in total_acceptance(&outcome.chains) {
                if attempts > 0 {
                    println!(
                        "  {:>6}: {accepts}/{attempts} accepted ({:.1}%)",
                        kernel.as_str(),
                        100.0 * accepts as f64 / attempts as f64
                    );
                }
            }
            if outcome.report.is_some() {
                println!("report: {}", cfg.out_dir.join(REPORT_FILE).display());
            }
        }

        Command::TrainProposals { shared, n, grid, out } => {
            let cfg = TrainConfig {
                program: shared.program.into(),
                model: shared.model()?,
                render: shared.render(),
                n,
                grid,
                seed: shared.seed,
                out_path: out,
            };
            let stats = run_train(&cfg)?;
            println!(
                "indexed {} of {} draws ({} empty renders dropped) into {}",
                stats.kept,
                stats.requested,
                stats.dropped_empty,
                cfg.out_path.display()
            );
        }

        Command::Evaluate { shared, run, ground_truth } => {
            let report = run_evaluate(&run, &ground_truth, &shared.model()?, &shared.render())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn size_and_alpha_parsers() {
        assert_eq!(parse_size("128x128").unwrap(), (128, 128));
        assert_eq!(parse_size("64X32").unwrap(), (64, 32));
        assert!(parse_size("128").is_err());
        assert!(parse_size("0x4").is_err());

        let w = parse_alphas("1,0,0,0").unwrap();
        assert_eq!(w.single, 1.0);
        assert_eq!((w.block, w.data, w.hmc), (0.0, 0.0, 0.0));
        assert!(parse_alphas("1,2,3").is_err());
        assert!(parse_alphas("a,b,c,d").is_err());
        assert!(parse_alphas("0,0,0,0").is_err());
    }

    #[test]
    fn infer_requires_an_observation_source() {
        let cli = Cli::try_parse_from(["contourcad", "infer", "--synthetic-seed", "3"]).unwrap();
        match cli.command {
            Command::Infer { synthetic_seed, .. } => assert_eq!(synthetic_seed, Some(3)),
            _ => unreachable!(),
        }
        // Both sources at once is a parse error.
        assert!(Cli::try_parse_from([
            "contourcad",
            "infer",
            "--observation",
            "x.pbm",
            "--synthetic-seed",
            "3"
        ])
        .is_err());
    }
}
