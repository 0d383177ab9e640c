//! MCMC over scene traces: a mixture of single-site, block, data-driven,
//! and Hamiltonian kernels with shared Metropolis-Hastings bookkeeping.

pub mod diagnostics;
pub mod hmc;
pub mod target;

use rand::Rng;

use crate::error::{Error, Result};
use crate::proposal::{bandwidth_floors, coord_bounds, fit_kde, Kde, ProposalIndex};
use crate::scalar::{to_f64, Scalar};
use crate::scene::SceneTrace;

pub use hmc::{HmcOptions, HmcTargets};
pub use target::{FlatTarget, GaussianSiteTarget, ImageTarget, Target, LIKELIHOOD_FLOOR};

/// The four proposal kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    SingleSite,
    Block,
    DataDriven,
    Hmc,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] =
        [KernelKind::SingleSite, KernelKind::Block, KernelKind::DataDriven, KernelKind::Hmc];

    pub fn index(self) -> usize {
        match self {
            KernelKind::SingleSite => 0,
            KernelKind::Block => 1,
            KernelKind::DataDriven => 2,
            KernelKind::Hmc => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::SingleSite => "single",
            KernelKind::Block => "block",
            KernelKind::DataDriven => "data",
            KernelKind::Hmc => "hmc",
        }
    }
}

/// Mixture weights over the kernels; renormalized before use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureWeights {
    pub single: f64,
    pub block: f64,
    pub data: f64,
    pub hmc: f64,
}

impl Default for MixtureWeights {
    fn default() -> Self {
        Self { single: 0.5, block: 0.2, data: 0.1, hmc: 0.2 }
    }
}

impl MixtureWeights {
    pub fn without_data(mut self) -> Self {
        self.data = 0.0;
        self
    }

    pub fn pure(kernel: KernelKind) -> Self {
        let mut w = Self { single: 0.0, block: 0.0, data: 0.0, hmc: 0.0 };
        match kernel {
            KernelKind::SingleSite => w.single = 1.0,
            KernelKind::Block => w.block = 1.0,
            KernelKind::DataDriven => w.data = 1.0,
            KernelKind::Hmc => w.hmc = 1.0,
        }
        w
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.single, self.block, self.data, self.hmc]
    }

    pub fn normalized(&self) -> Result<[f64; 4]> {
        let raw = self.as_array();
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!("kernel weights {raw:?}")));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidParameter("kernel weights sum to zero".into()));
        }
        Ok([raw[0] / sum, raw[1] / sum, raw[2] / sum, raw[3] / sum])
    }
}

/// Data-driven kernel settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DataOptions {
    /// Neighbors pooled into the proposal density.
    pub k: usize,
    /// KDE bandwidth floor as a fraction of each coordinate's prior scale.
    pub floor_frac: f64,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self { k: 10, floor_frac: 1e-6 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplerOptions {
    pub weights: MixtureWeights,
    pub hmc: HmcOptions,
    pub data: DataOptions,
    /// Latent names resampled alongside every block move.
    pub block_coupled: Vec<String>,
}

/// Observation-side context for the data-driven kernel.
pub struct DataContext<'a, T> {
    pub index: &'a ProposalIndex<T>,
    pub obs_features: Vec<T>,
}

/// Current chain position and per-kernel acceptance counters. Kernel
/// counters are indexed by `KernelKind::index`.
#[derive(Debug, Clone)]
pub struct ChainState<T> {
    pub trace: SceneTrace<T>,
    pub log_likelihood: T,
    pub iteration: u64,
    pub accepts: [u64; 4],
    pub attempts: [u64; 4],
}

impl<T: Scalar> ChainState<T> {
    pub fn init(mut trace: SceneTrace<T>, target: &dyn Target<T>) -> Self {
        let log_likelihood = target.log_likelihood(&mut trace);
        Self { trace, log_likelihood, iteration: 0, accepts: [0; 4], attempts: [0; 4] }
    }

    pub fn log_posterior(&self) -> T {
        self.trace.log_prior() + self.log_likelihood
    }

    pub fn acceptance_rate(&self, kernel: KernelKind) -> f64 {
        let k = kernel.index();
        if self.attempts[k] == 0 {
            0.0
        } else {
            self.accepts[k] as f64 / self.attempts[k] as f64
        }
    }
}

/// Shared Metropolis-Hastings acceptance: compares prior + likelihood plus
/// the proposal correction, moves the state on acceptance. Non-finite
/// ratios reject unless the proposal is strictly better off-support (+inf).
pub fn mh_accept<T: Scalar, R: Rng + ?Sized>(
    state: &mut ChainState<T>,
    kernel: KernelKind,
    proposed: SceneTrace<T>,
    proposed_ll: T,
    log_q_fwd: T,
    log_q_rev: T,
    rng: &mut R,
) -> bool {
    let k = kernel.index();
    state.attempts[k] += 1;
    let ratio = (proposed_ll + proposed.log_prior() + log_q_rev)
        - (state.log_likelihood + state.trace.log_prior() + log_q_fwd);
    let accept = if ratio.is_finite() {
        // u in (0, 1] so ln u is always defined.
        let u = T::one() - rng.random_range(T::zero()..T::one());
        u.ln() < ratio
    } else {
        to_f64(ratio) == f64::INFINITY
    };
    if accept {
        state.trace = proposed;
        state.log_likelihood = proposed_ll;
        state.accepts[k] += 1;
    }
    accept
}

/// Single-site kernel: resample one uniformly chosen coordinate from its
/// prior (Metropolis), or one discrete latent from its exact conditional
/// (Gibbs over the enumerable support).
pub fn step_single<T: Scalar, R: Rng + ?Sized>(
    state: &mut ChainState<T>,
    target: &dyn Target<T>,
    rng: &mut R,
) -> bool {
    let sites = state.trace.continuous_sites();
    let discretes = state.trace.discrete_latents();
    let total = sites.len() + discretes.len();
    debug_assert!(total > 0);
    let slot = rng.random_range(0..total);

    if slot < sites.len() {
        let site = sites[slot];
        let prior = state.trace.latents()[site.latent].prior.clone();
        let old = state.trace.coord(site);
        let new = prior.sample_scalar(rng);
        let mut proposed = state.trace.fork();
        proposed.set_coord(site, new);
        let ll = target.log_likelihood(&mut proposed);
        // Prior terms cancel against the proposal densities, leaving the
        // likelihood ratio; both are still computed explicitly.
        mh_accept(
            state,
            KernelKind::SingleSite,
            proposed,
            ll,
            prior.log_density(new),
            prior.log_density(old),
            rng,
        )
    } else {
        let latent = discretes[slot - sites.len()];
        gibbs_discrete(state, target, latent, rng)
    }
}

/// Exact Gibbs update of one integer latent: enumerate its support, score
/// prior mass times likelihood, draw from the normalized conditional.
fn gibbs_discrete<T: Scalar, R: Rng + ?Sized>(
    state: &mut ChainState<T>,
    target: &dyn Target<T>,
    latent: usize,
    rng: &mut R,
) -> bool {
    let k = KernelKind::SingleSite.index();
    state.attempts[k] += 1;
    let prior = state.trace.latents()[latent].prior.clone();
    let (lo, hi) = match prior {
        crate::scene::Prior::UniformInt { lo, hi } => (lo, hi),
        _ => unreachable!("discrete latents carry integer priors"),
    };
    let mut options: Vec<(SceneTrace<T>, T, T)> = Vec::with_capacity((hi - lo + 1) as usize);
    for v in lo..=hi {
        let mut cand = state.trace.fork();
        cand.set_int(latent, v);
        let ll = target.log_likelihood(&mut cand);
        let lw = prior.log_mass_int(v) + ll;
        options.push((cand, ll, lw));
    }
    let weights: Vec<T> = options.iter().map(|o| o.2).collect();
    let total = crate::proposal::log_sum_exp(&weights);
    if !total.is_finite() {
        return false;
    }
    let u = to_f64(T::one() - rng.random_range(T::zero()..T::one()));
    let mut acc = 0.0;
    let mut pick = options.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        acc += to_f64((*w - total).exp());
        if u <= acc {
            pick = i;
            break;
        }
    }
    let (trace, ll, _) = options.swap_remove(pick);
    state.trace = trace;
    state.log_likelihood = ll;
    state.accepts[k] += 1;
    true
}

/// Block kernel: resample every latent in one uniformly chosen group (plus
/// any configured coupled latents) jointly from the prior.
pub fn step_block<T: Scalar, R: Rng + ?Sized>(
    state: &mut ChainState<T>,
    target: &dyn Target<T>,
    coupled: &[String],
    rng: &mut R,
) -> bool {
    let groups = state.trace.groups();
    debug_assert!(!groups.is_empty(), "block kernel needs grouped latents");
    let group = &groups[rng.random_range(0..groups.len())];

    let mut proposed = state.trace.fork();
    let members: Vec<usize> = proposed
        .latents()
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            l.group.as_deref() == Some(group.as_str()) || coupled.iter().any(|c| c == &l.name)
        })
        .map(|(i, _)| i)
        .collect();
    let mut log_q_fwd = T::zero();
    let mut log_q_rev = T::zero();
    for i in members {
        log_q_rev += proposed.latents()[i].log_prior_term();
        log_q_fwd += proposed.resample_latent(i, rng);
    }
    let ll = target.log_likelihood(&mut proposed);
    mh_accept(state, KernelKind::Block, proposed, ll, log_q_fwd, log_q_rev, rng)
}

/// Data-driven kernel: independence proposal from a KDE over the latents of
/// the dataset entries nearest to the observation's contour features. The
/// KDE is truncated to the prior support, so every draw lands in-support
/// and the forward and reverse densities are exact for the proposal
/// actually made.
pub fn step_data<T: Scalar, R: Rng + ?Sized>(
    state: &mut ChainState<T>,
    target: &dyn Target<T>,
    kde: &Kde<T>,
    rng: &mut R,
) -> bool {
    let x = kde.sample(rng);
    let log_q_fwd = kde.log_density(&x);
    let log_q_rev = kde.log_density(&state.trace.flat_values());
    let mut proposed = state.trace.fork();
    if proposed.set_flat(&x).is_err() {
        let k = KernelKind::DataDriven.index();
        state.attempts[k] += 1;
        return false;
    }
    let ll = target.log_likelihood(&mut proposed);
    mh_accept(state, KernelKind::DataDriven, proposed, ll, log_q_fwd, log_q_rev, rng)
}

/// One per-iteration record, enough to replay score traces and kernel
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub iteration: u64,
    pub kernel: KernelKind,
    pub accepted: bool,
    pub log_prior: T,
    pub log_likelihood: T,
    /// Hamiltonian energy error, present only on `Hmc` steps.
    pub delta_h: Option<f64>,
}

/// Highest-posterior trace seen along a chain.
#[derive(Debug, Clone)]
pub struct MapEstimate<T> {
    pub trace: SceneTrace<T>,
    pub log_prior: T,
    pub log_likelihood: T,
}

impl<T: Scalar> MapEstimate<T> {
    pub fn log_posterior(&self) -> T {
        self.log_prior + self.log_likelihood
    }
}

#[derive(Debug, Clone)]
pub struct ChainResult<T> {
    pub state: ChainState<T>,
    pub records: Vec<StepRecord<T>>,
    pub map: MapEstimate<T>,
}

/// A configured kernel mixture bound to one target and optional proposal
/// dataset. `run` drives one chain; determinism follows from the caller's
/// RNG seed.
pub struct Sampler<'a, T: Scalar> {
    pub target: &'a dyn Target<T>,
    pub options: SamplerOptions,
    pub data: Option<DataContext<'a, T>>,
}

impl<'a, T: Scalar> Sampler<'a, T> {
    /// Validates the mixture. A positive data weight without a usable index
    /// is forced to zero (the kernel is disabled) rather than erroring; the
    /// remaining weights must still sum to something positive.
    pub fn new(
        target: &'a dyn Target<T>,
        mut options: SamplerOptions,
        data: Option<DataContext<'a, T>>,
    ) -> Result<Self> {
        if options.weights.data > 0.0 {
            match &data {
                None => options.weights.data = 0.0,
                Some(ctx) if ctx.index.is_empty() => options.weights.data = 0.0,
                Some(ctx) => {
                    if ctx.obs_features.len() != ctx.index.feature_dim() {
                        return Err(Error::InvalidParameter(format!(
                            "observation features {} vs index feature dim {}",
                            ctx.obs_features.len(),
                            ctx.index.feature_dim()
                        )));
                    }
                    if options.data.k == 0 {
                        return Err(Error::InvalidParameter("data kernel needs k >= 1".into()));
                    }
                }
            }
        }
        options.weights.normalized()?;
        Ok(Self { target, options, data })
    }

    pub fn run<R: Rng + ?Sized>(
        &self,
        init: SceneTrace<T>,
        iterations: u64,
        rng: &mut R,
    ) -> Result<ChainResult<T>> {
        let weights = self.options.weights.normalized()?;
        let mut state = ChainState::init(init, self.target);

        let hmc_coords = if weights[KernelKind::Hmc.index()] > 0.0 {
            Some(hmc::resolve_hmc_coords(&state.trace, &self.options.hmc)?)
        } else {
            None
        };

        // The observation is fixed for the whole run, so the data-driven
        // proposal density is fit once.
        let kde = if weights[KernelKind::DataDriven.index()] > 0.0 {
            let ctx = self.data.as_ref().expect("validated in new");
            let floors = bandwidth_floors(&state.trace, self.options.data.floor_frac);
            if floors.len() != ctx.index.latent_dim() {
                return Err(Error::InvalidParameter(format!(
                    "trace dimension {} vs index latent dim {}",
                    floors.len(),
                    ctx.index.latent_dim()
                )));
            }
            let bounds = coord_bounds(&state.trace);
            let neighbors = ctx.index.knn(&ctx.obs_features, self.options.data.k)?;
            Some(fit_kde(ctx.index, &neighbors, &floors, &bounds))
        } else {
            None
        };

        let mut map = MapEstimate {
            trace: state.trace.fork(),
            log_prior: state.trace.log_prior(),
            log_likelihood: state.log_likelihood,
        };
        let mut records = Vec::with_capacity(iterations as usize);

        for iteration in 0..iterations {
            let pick = rng.random_range(0.0..1.0_f64);
            let kernel = if pick < weights[0] {
                KernelKind::SingleSite
            } else if pick < weights[0] + weights[1] {
                KernelKind::Block
            } else if pick < weights[0] + weights[1] + weights[2] {
                KernelKind::DataDriven
            } else {
                KernelKind::Hmc
            };

            let mut delta_h = None;
            let accepted = match kernel {
                KernelKind::SingleSite => step_single(&mut state, self.target, rng),
                KernelKind::Block => {
                    step_block(&mut state, self.target, &self.options.block_coupled, rng)
                }
                KernelKind::DataDriven => {
                    step_data(&mut state, self.target, kde.as_ref().expect("kde fit"), rng)
                }
                KernelKind::Hmc => {
                    let (acc, dh) = hmc::step_hmc(
                        &mut state,
                        self.target,
                        hmc_coords.as_ref().expect("hmc coords resolved"),
                        &self.options.hmc,
                        rng,
                    );
                    delta_h = Some(dh);
                    acc
                }
            };

            let log_prior = state.trace.log_prior();
            if accepted && log_prior + state.log_likelihood > map.log_posterior() {
                map = MapEstimate {
                    trace: state.trace.fork(),
                    log_prior,
                    log_likelihood: state.log_likelihood,
                };
            }
            state.iteration = iteration + 1;
            records.push(StepRecord {
                iteration,
                kernel,
                accepted,
                log_prior,
                log_likelihood: state.log_likelihood,
                delta_h,
            });
        }

        Ok(ChainResult { state, records, map })
    }
}
