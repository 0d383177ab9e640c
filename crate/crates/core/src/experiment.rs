//! End-to-end experiment orchestration at default precision: prior sampling
//! with artifact emission, multi-chain posterior inference, proposal-index
//! training, and evaluation of finished run directories.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::inference::{
    ChainResult, DataContext, ImageTarget, KernelKind, MapEstimate, Sampler, SamplerOptions,
};
use crate::io::{
    load_observation, read_chain_log, read_index, read_trace, write_chain_log,
    write_contour_pbm, write_depth_pgm, write_index, write_obj, write_trace,
};
use crate::likelihood::{default_sigma0, ObservationImage};
use crate::metrics::{
    coverage_mask, keypoint_error, normal_mse, z_mae, ChainSummary, Correspondence, EvalReport,
};
use crate::proposal::{contour_features, generate_dataset, DatasetStats, DEFAULT_FEATURE_GRID};
use crate::render::{render_trace, RenderConfig};
use crate::scene::{
    body::{build_body_mesh, sample_body_prior},
    object::{build_object_mesh, sample_object_prior},
    ProgramKind,
};
use crate::{Mesh, Real, Trace};

/// Gray level at or above which a PGM observation pixel counts as contour.
pub const DEFAULT_PGM_THRESHOLD: u8 = 128;

/// RNG stream reserved for synthetic ground truth; chains use streams
/// `0..chains`, so changing the chain count never perturbs the scene.
const GROUND_TRUTH_STREAM: u64 = u64::MAX;

pub fn sample_prior(program: ProgramKind, model: &ModelConfig, rng: &mut ChaCha8Rng) -> Trace {
    match program {
        ProgramKind::Object => sample_object_prior(rng, model),
        ProgramKind::Body => sample_body_prior(rng, model),
    }
}

pub fn build_mesh(trace: &Trace, model: &ModelConfig) -> Result<Mesh> {
    match trace.program() {
        ProgramKind::Object => build_object_mesh(trace, model),
        ProgramKind::Body => build_body_mesh(trace, model),
    }
}

/// Prior sampling run: `n` traces with meshes and rendered images.
#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub program: ProgramKind,
    pub model: ModelConfig,
    pub render: RenderConfig,
    pub n: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Proposal-index training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub program: ProgramKind,
    pub model: ModelConfig,
    pub render: RenderConfig,
    pub n: usize,
    pub grid: u32,
    pub seed: u64,
    pub out_path: PathBuf,
}

impl TrainConfig {
    pub fn new(program: ProgramKind, n: usize, seed: u64, out_path: PathBuf) -> Self {
        Self {
            program,
            model: ModelConfig::default(),
            render: RenderConfig::default(),
            n,
            grid: DEFAULT_FEATURE_GRID,
            seed,
            out_path,
        }
    }
}

/// One inference run: an observation (from file or synthesized from the
/// prior), a kernel mixture, and a chain budget.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub program: ProgramKind,
    pub model: ModelConfig,
    pub render: RenderConfig,
    pub sampler: SamplerOptions,
    pub chains: usize,
    pub iterations: u64,
    pub seed: u64,
    /// Contour image to invert; mutually exclusive with `synthetic_seed`.
    pub observation: Option<PathBuf>,
    /// Seed for a prior-sampled ground-truth scene used as the observation.
    pub synthetic_seed: Option<u64>,
    /// Chamfer noise scale in pixels.
    pub sigma0: f64,
    /// Gray threshold when the observation is a PGM image.
    pub pgm_threshold: u8,
    /// Learned proposal index for the data-driven kernel.
    pub index_path: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(program: ProgramKind, out_dir: PathBuf) -> Self {
        let render = RenderConfig::default();
        Self {
            program,
            model: ModelConfig::default(),
            sigma0: default_sigma0(render.width, render.height),
            render,
            sampler: SamplerOptions::default(),
            chains: 1,
            iterations: 100,
            seed: 0,
            observation: None,
            synthetic_seed: None,
            pgm_threshold: DEFAULT_PGM_THRESHOLD,
            index_path: None,
            out_dir,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.observation, &self.synthetic_seed) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "observation path and synthetic seed are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "either an observation path or a synthetic seed is required".into(),
                ))
            }
            _ => {}
        }
        if self.chains == 0 || self.iterations == 0 {
            return Err(Error::Config("chains and iterations must be positive".into()));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::Config(format!("sigma0 = {} must be positive", self.sigma0)));
        }
        Ok(())
    }
}

fn trace_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("trace_{i:03}.jsonl"))
}

fn mesh_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("mesh_{i:03}.obj"))
}

fn depth_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("depth_{i:03}.pgm"))
}

fn contour_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("contour_{i:03}.pbm"))
}

pub fn chain_log_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join("chains").join(format!("chain_{chain:02}.jsonl"))
}

pub const MAP_TRACE_FILE: &str = "map_trace.jsonl";
pub const GROUND_TRUTH_TRACE_FILE: &str = "gt_trace.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const SCORES_FILE: &str = "scores.csv";

/// Draw traces from the prior and write each one's trace, mesh, and depth
/// plus contour renders. Entry `i` uses stream `i` of the master seed, so
/// outputs are byte-stable under reruns and independent of `n`.
pub fn run_sample(cfg: &SampleConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut written = Vec::new();
    for i in 0..cfg.n {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let mut trace = sample_prior(cfg.program, &cfg.model, &mut rng);
        let mesh = build_mesh(&trace, &cfg.model)?;
        let view = render_trace(&mut trace, &cfg.model, &cfg.render)?;

        let paths = [
            trace_path(&cfg.out_dir, i),
            mesh_path(&cfg.out_dir, i),
            depth_path(&cfg.out_dir, i),
            contour_path(&cfg.out_dir, i),
        ];
        write_depth_pgm(&paths[2], view, cfg.render.near, cfg.render.far)?;
        write_contour_pbm(&paths[3], view)?;
        write_trace(&paths[0], &trace)?;
        write_obj(&paths[1], &mesh)?;
        written.extend(paths);
    }
    Ok(written)
}

/// Generate a proposal dataset from the prior and persist it.
pub fn run_train(cfg: &TrainConfig) -> Result<DatasetStats> {
    if let Some(parent) = cfg.out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let (index, stats) = generate_dataset::<Real>(
        cfg.n,
        cfg.program,
        &cfg.model,
        &cfg.render,
        cfg.grid,
        cfg.seed,
    )?;
    write_index(&cfg.out_path, &index)?;
    Ok(stats)
}

/// Everything a finished inference run produced, in memory.
pub struct InferOutcome {
    pub map: MapEstimate<Real>,
    pub chains: Vec<ChainResult<Real>>,
    /// Present in synthetic mode, where ground truth is known.
    pub report: Option<EvalReport>,
}

fn summarize_chain(chain: usize, result: &ChainResult<Real>) -> ChainSummary {
    let best = result
        .records
        .iter()
        .map(|r| r.log_prior + r.log_likelihood)
        .fold(f64::NEG_INFINITY, f64::max);
    ChainSummary {
        chain,
        iterations: result.records.len() as u64,
        accepts: result.state.accepts,
        attempts: result.state.attempts,
        final_log_posterior: result.state.log_posterior(),
        best_log_posterior: best,
    }
}

/// Compare a reconstructed trace against ground truth: shift-invariant depth
/// error and normal error always, projected keypoint error for bodies.
pub fn evaluate_traces(
    map: &mut Trace,
    gt: &mut Trace,
    model: &ModelConfig,
    render: &RenderConfig,
    chains: Vec<ChainSummary>,
) -> Result<EvalReport> {
    if map.program() != gt.program() {
        return Err(Error::InvalidParameter(format!(
            "cannot evaluate a {} trace against {} ground truth",
            map.program().as_str(),
            gt.program().as_str()
        )));
    }
    let far = render.far;
    let map_depth = render_trace(map, model, render)?.depth.clone();
    let gt_depth = render_trace(gt, model, render)?.depth.clone();
    let mask = coverage_mask(&map_depth, &gt_depth, far);
    let z = z_mae(&map_depth, &gt_depth, &mask)?;
    let n = normal_mse(
        &build_mesh(map, model)?,
        &build_mesh(gt, model)?,
        Correspondence::NearestVertex,
    )?;
    let keypoint_err = match map.program() {
        ProgramKind::Body => Some(keypoint_error(map, gt, model, render)?.mean_px),
        ProgramKind::Object => None,
    };
    let report =
        EvalReport { program: map.program().as_str().into(), z_mae: z, n_mse: n, keypoint_err, chains };
    report.validate()?;
    Ok(report)
}

fn write_scores(path: &Path, chains: &[ChainResult<Real>]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "chain,iteration,kernel,accepted,log_posterior")?;
    for (c, result) in chains.iter().enumerate() {
        for r in &result.records {
            writeln!(
                w,
                "{c},{},{},{},{}",
                r.iteration,
                r.kernel.as_str(),
                r.accepted as u8,
                r.log_prior + r.log_likelihood
            )?;
        }
    }
    Ok(())
}

/// Run the configured chains against the observation and write all run
/// artifacts: per-chain logs, a score table, the MAP trace with its renders,
/// and (in synthetic mode) the ground truth and an evaluation report.
pub fn run_infer(cfg: &ExperimentConfig) -> Result<InferOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(cfg.out_dir.join("chains"))?;

    // Ground truth (synthetic mode) and the observation to invert.
    let mut ground_truth: Option<Trace> = None;
    let obs: ObservationImage<Real> = match (&cfg.observation, cfg.synthetic_seed) {
        (Some(path), None) => load_observation(path, cfg.pgm_threshold)?,
        (None, Some(gt_seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(gt_seed);
            rng.set_stream(GROUND_TRUTH_STREAM);
            let mut gt = sample_prior(cfg.program, &cfg.model, &mut rng);
            write_trace(&cfg.out_dir.join(GROUND_TRUTH_TRACE_FILE), &gt)?;
            let view = render_trace(&mut gt, &cfg.model, &cfg.render)?;
            let obs = ObservationImage::from_view(view)?;
            write_depth_pgm(
                &cfg.out_dir.join("gt_depth.pgm"),
                view,
                cfg.render.near,
                cfg.render.far,
            )?;
            write_contour_pbm(&cfg.out_dir.join("gt_contour.pbm"), view)?;
            ground_truth = Some(gt);
            obs
        }
        _ => unreachable!("validated"),
    };
    if obs.width != cfg.render.width || obs.height != cfg.render.height {
        return Err(Error::Config(format!(
            "observation is {}x{} but the render target is {}x{}",
            obs.width, obs.height, cfg.render.width, cfg.render.height
        )));
    }

    let index = match &cfg.index_path {
        Some(path) => {
            let index = read_index::<Real>(path)?;
            if index.program != cfg.program {
                return Err(Error::Config(format!(
                    "index holds {} entries but the run is {}",
                    index.program.as_str(),
                    cfg.program.as_str()
                )));
            }
            Some(index)
        }
        None => None,
    };
    let data = match &index {
        Some(index) => Some(DataContext {
            index,
            obs_features: contour_features(&obs.contour, &index.spec)?,
        }),
        None => None,
    };

    let target = ImageTarget::new(&obs, &cfg.model, cfg.render.clone(), cfg.sigma0);
    let sampler = Sampler::new(&target, cfg.sampler.clone(), data)?;

    let chains: Vec<ChainResult<Real>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c as u64);
            let init = sample_prior(cfg.program, &cfg.model, &mut rng);
            sampler.run(init, cfg.iterations, &mut rng)
        })
        .collect::<Result<_>>()?;

    for (c, result) in chains.iter().enumerate() {
        write_chain_log(&chain_log_path(&cfg.out_dir, c), &result.records)?;
    }
    write_scores(&cfg.out_dir.join(SCORES_FILE), &chains)?;

    let best = chains
        .iter()
        .map(|r| &r.map)
        .max_by(|a, b| {
            a.log_posterior()
                .partial_cmp(&b.log_posterior())
                .expect("map scores are finite")
        })
        .expect("at least one chain");
    let mut map = best.clone();
    write_trace(&cfg.out_dir.join(MAP_TRACE_FILE), &map.trace)?;
    let view = render_trace(&mut map.trace, &cfg.model, &cfg.render)?;
    write_depth_pgm(&cfg.out_dir.join("map_depth.pgm"), view, cfg.render.near, cfg.render.far)?;
    write_contour_pbm(&cfg.out_dir.join("map_contour.pbm"), view)?;

    let summaries: Vec<ChainSummary> =
        chains.iter().enumerate().map(|(c, r)| summarize_chain(c, r)).collect();
    let report = match ground_truth.as_mut() {
        Some(gt) => {
            let report =
                evaluate_traces(&mut map.trace, gt, &cfg.model, &cfg.render, summaries)?;
            std::fs::write(
                cfg.out_dir.join(REPORT_FILE),
                serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?,
            )?;
            Some(report)
        }
        None => None,
    };

    Ok(InferOutcome { map, chains, report })
}

/// Re-evaluate a finished run directory against a ground-truth trace file.
/// Produces the same numbers as the in-run report: the MAP artifacts and
/// chain logs are read back and scored with the metrics library.
pub fn run_evaluate(
    run_dir: &Path,
    ground_truth: &Path,
    model: &ModelConfig,
    render: &RenderConfig,
) -> Result<EvalReport> {
    let mut map: Trace = read_trace(&run_dir.join(MAP_TRACE_FILE))?;
    let mut gt: Trace = read_trace(ground_truth)?;

    let chains_dir = run_dir.join("chains");
    let mut log_paths: Vec<PathBuf> = std::fs::read_dir(&chains_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    log_paths.sort();
    let mut summaries = Vec::with_capacity(log_paths.len());
    for (c, path) in log_paths.iter().enumerate() {
        let records = read_chain_log(path)?;
        let mut accepts = [0u64; 4];
        let mut attempts = [0u64; 4];
        for r in &records {
            attempts[r.kernel.index()] += 1;
            accepts[r.kernel.index()] += r.accepted as u64;
        }
        let score = |r: &crate::inference::StepRecord<f64>| r.log_prior + r.log_likelihood;
        summaries.push(ChainSummary {
            chain: c,
            iterations: records.len() as u64,
            accepts,
            attempts,
            final_log_posterior: records.last().map(score).unwrap_or(f64::NEG_INFINITY),
            best_log_posterior: records
                .iter()
                .map(score)
                .fold(f64::NEG_INFINITY, f64::max),
        });
    }
    evaluate_traces(&mut map, &mut gt, model, render, summaries)
}

/// Per-kernel acceptance counters summed over chains, for reporting.
pub fn total_acceptance(chains: &[ChainResult<Real>]) -> [(KernelKind, u64, u64); 4] {
    let mut out = KernelKind::ALL.map(|k| (k, 0u64, 0u64));
    for chain in chains {
        for k in KernelKind::ALL {
            out[k.index()].1 += chain.state.accepts[k.index()];
            out[k.index()].2 += chain.state.attempts[k.index()];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::MixtureWeights;

    fn small_render() -> RenderConfig {
        RenderConfig {
            width: 48,
            height: 48,
            focal_px: 110.0 * 48.0 / 128.0,
            ..RenderConfig::default()
        }
    }

    fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn sample_emits_counted_artifacts_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SampleConfig {
            program: ProgramKind::Object,
            model: ModelConfig::default(),
            render: small_render(),
            n: 4,
            seed: 7,
            out_dir: dir.path().join("a"),
        };
        let files = run_sample(&cfg).unwrap();
        assert_eq!(files.len(), 16); // 4 traces + 4 meshes + 8 images
        let traces = files.iter().filter(|p| p.to_string_lossy().contains("trace_")).count();
        let meshes = files.iter().filter(|p| p.extension().is_some_and(|e| e == "obj")).count();
        let images = files
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "pgm" || e == "pbm"))
            .count();
        assert_eq!((traces, meshes, images), (4, 4, 8));

        let rerun = SampleConfig { out_dir: dir.path().join("b"), ..cfg };
        run_sample(&rerun).unwrap();
        assert_eq!(read_all(&dir.path().join("a")), read_all(&dir.path().join("b")));
    }

    #[test]
    fn sample_body_program_round_trips_as_body() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SampleConfig {
            program: ProgramKind::Body,
            model: ModelConfig::default(),
            render: small_render(),
            n: 2,
            seed: 1,
            out_dir: dir.path().to_path_buf(),
        };
        run_sample(&cfg).unwrap();
        for i in 0..2 {
            let t: Trace = read_trace(&trace_path(dir.path(), i)).unwrap();
            assert_eq!(t.program(), ProgramKind::Body);
            assert_eq!(t.len(), 42);
        }
    }

    #[test]
    fn config_requires_exactly_one_observation_source() {
        let mut cfg = ExperimentConfig::new(ProgramKind::Object, PathBuf::from("out"));
        assert!(cfg.validate().is_err());
        cfg.synthetic_seed = Some(3);
        cfg.validate().unwrap();
        cfg.observation = Some(PathBuf::from("obs.pbm"));
        assert!(cfg.validate().is_err());
    }

    fn tiny_infer_config(out_dir: PathBuf) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(ProgramKind::Object, out_dir);
        cfg.render = small_render();
        cfg.sigma0 = default_sigma0(48, 48);
        cfg.chains = 2;
        cfg.iterations = 40;
        cfg.seed = 11;
        cfg.synthetic_seed = Some(21);
        cfg.sampler.weights = MixtureWeights { single: 0.6, block: 0.2, data: 0.0, hmc: 0.2 };
        cfg
    }

    #[test]
    fn synthetic_infer_writes_artifacts_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_infer_config(dir.path().join("run1"));
        let outcome = run_infer(&cfg).unwrap();
        assert_eq!(outcome.chains.len(), 2);
        let report = outcome.report.as_ref().unwrap();
        report.validate().unwrap();
        assert_eq!(report.chains.len(), 2);
        for name in [MAP_TRACE_FILE, GROUND_TRUTH_TRACE_FILE, REPORT_FILE, SCORES_FILE] {
            assert!(cfg.out_dir.join(name).exists(), "missing {name}");
        }
        for c in 0..2 {
            assert!(chain_log_path(&cfg.out_dir, c).exists());
        }

        let cfg2 = ExperimentConfig { out_dir: dir.path().join("run2"), ..cfg.clone() };
        let outcome2 = run_infer(&cfg2).unwrap();
        assert_eq!(outcome.map.log_posterior(), outcome2.map.log_posterior());
        for c in 0..2 {
            let a = std::fs::read(chain_log_path(&cfg.out_dir, c)).unwrap();
            let b = std::fs::read(chain_log_path(&cfg2.out_dir, c)).unwrap();
            assert_eq!(a, b, "chain {c} log differs between identical runs");
        }
    }

    #[test]
    fn zero_weight_kernels_never_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_infer_config(dir.path().to_path_buf());
        cfg.sampler.weights = MixtureWeights { single: 1.0, block: 0.0, data: 0.0, hmc: 0.0 };
        let outcome = run_infer(&cfg).unwrap();
        for chain in &outcome.chains {
            assert_eq!(chain.state.attempts[0], cfg.iterations);
            assert_eq!(chain.state.attempts[1..], [0, 0, 0]);
        }
    }

    #[test]
    fn evaluate_run_matches_in_run_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_infer_config(dir.path().to_path_buf());
        let outcome = run_infer(&cfg).unwrap();
        let in_run = outcome.report.unwrap();
        let again = run_evaluate(
            &cfg.out_dir,
            &cfg.out_dir.join(GROUND_TRUTH_TRACE_FILE),
            &cfg.model,
            &cfg.render,
        )
        .unwrap();
        assert_eq!(again.z_mae, in_run.z_mae);
        assert_eq!(again.n_mse, in_run.n_mse);
        assert_eq!(again.chains.len(), in_run.chains.len());
        for (a, b) in again.chains.iter().zip(&in_run.chains) {
            assert_eq!(a.accepts, b.accepts);
            assert_eq!(a.attempts, b.attempts);
            assert_eq!(a.final_log_posterior, b.final_log_posterior);
            assert_eq!(a.best_log_posterior, b.best_log_posterior);
        }
    }

    #[test]
    fn train_writes_a_loadable_index() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            render: small_render(),
            grid: 4,
            ..TrainConfig::new(ProgramKind::Object, 10, 5, dir.path().join("p.idx"))
        };
        let stats = run_train(&cfg).unwrap();
        assert!(stats.kept > 0);
        let index = read_index::<Real>(&cfg.out_path).unwrap();
        assert_eq!(index.len(), stats.kept);
        assert_eq!(index.program, ProgramKind::Object);
    }

    #[test]
    fn infer_with_trained_index_attempts_data_kernel() {
        let dir = tempfile::tempdir().unwrap();
        let train = TrainConfig {
            render: small_render(),
            grid: 4,
            ..TrainConfig::new(ProgramKind::Object, 40, 5, dir.path().join("p.idx"))
        };
        run_train(&train).unwrap();
        let mut cfg = tiny_infer_config(dir.path().join("run"));
        cfg.sampler.weights = MixtureWeights { single: 0.5, block: 0.2, data: 0.1, hmc: 0.2 };
        cfg.sampler.data.k = 5;
        cfg.index_path = Some(dir.path().join("p.idx"));
        let outcome = run_infer(&cfg).unwrap();
        let totals = total_acceptance(&outcome.chains);
        assert!(totals[KernelKind::DataDriven.index()].2 > 0, "data kernel never attempted");
    }
}
