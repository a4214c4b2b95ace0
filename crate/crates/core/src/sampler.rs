//! The irreversible Langevin chain on `SO(3) × so(3)`.
//!
//! Every step:
//!
//! 1. refreshes the momentum with the exact OU transition at the current
//!    position, `v* ~ N(e^{−(β/2)D(g)h} v, Σ_h)`;
//! 2. runs a leapfrog trajectory from `(g, v*)`;
//! 3. accepts the endpoint with probability `min{1, e^{−βΔH}}`, and otherwise
//!    stays at `(g, −v*)`.
//!
//! No flip is applied after an accepted move. For finite `h` the momentum
//! keeps memory across steps, which makes the chain irreversible; at
//! `h = ∞` the refresh is an independent Gaussian draw and the chain is
//! standard HMC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::group::{haar_sample, AlgebraElement, GroupElement};
use crate::integrator::{hamiltonian, leapfrog_trajectory, LeapfrogParams, PhaseState};
use crate::model::{Diffusion, NoiseModel, Potential, TraceNoise, TracePotential};
use crate::ou::{OuTime, OuTransition};

/// Parameters of a single chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Inverse temperature; the target marginal is `∝ e^{−βV}` w.r.t. Haar.
    pub beta: f64,
    /// OU refresh time.
    pub h: OuTime,
    pub leapfrog: LeapfrogParams,
    /// Shape of the potential `V(g) = e^{α Tr g}`.
    pub alpha: f64,
    /// Scale of the noise Hamiltonians.
    pub epsilon: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Use `D(I)` everywhere instead of recomputing `D(g)` each step.
    #[serde(default)]
    pub freeze_diffusion: bool,
    /// Multiplies `βΔH` in the acceptance exponent. Anything but 1 breaks
    /// invariance of the target; only used as a negative control.
    #[doc(hidden)]
    #[serde(skip, default = "unit")]
    pub acceptance_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            beta: 1.0,
            h: OuTime::Finite(0.1),
            leapfrog: LeapfrogParams { step_size: 0.1, n_steps: 5 },
            alpha: 1.0,
            epsilon: 1.0,
            n_samples: 5000,
            seed: 0,
            freeze_diffusion: false,
            acceptance_scale: 1.0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !self.alpha.is_finite() {
            return bad(format!("alpha must be finite, got {}", self.alpha));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        if let OuTime::Finite(h) = self.h {
            if !(h.is_finite() && h > 0.0) {
                return bad(format!("h must be >= 0, got {h}"));
            }
        }
        self.leapfrog.validate()
    }
}

/// Outcome of one chain step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// The new state: the proposal if accepted, `(g, −v*)` otherwise.
    pub state: PhaseState,
    /// `H(state)`
    pub hamiltonian: f64,
    pub accepted: bool,
    /// `H` at the leapfrog endpoint.
    pub proposal_hamiltonian: f64,
    /// Momentum `v*` after the OU refresh, before the trajectory.
    pub refreshed: AlgebraElement,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub records: Vec<StepRecord>,
    pub config: ChainConfig,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.records.iter().filter(|r| r.accepted).count() as f64 / self.records.len().max(1) as f64
    }

    pub fn positions(&self) -> impl Iterator<Item = &GroupElement> + '_ {
        self.records.iter().map(|r| &r.state.g)
    }
}

/// Starting point of a chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `g = I`, `v ~ N(0, I/β)`.
    Identity,
    /// Haar-random `g`, `v ~ N(0, I/β)`.
    HaarRandom,
    State(PhaseState),
}

/// RNG for stream `stream` of master seed `seed`.
///
/// ChaCha20 keyed by `seed`, with `stream` selecting one of its 2⁶⁴
/// independent streams. Experiments use `stream = (h_index << 32) | chain`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gibbs_momentum<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> AlgebraElement {
    let sd = beta.recip().sqrt();
    AlgebraElement::from_coords(Vector3::from_fn(|_, _| sd * rng.sample::<f64, _>(StandardNormal)))
}

/// A chain with its potential and noise model.
#[derive(Clone, Debug)]
pub struct Sampler<P = TracePotential, N = TraceNoise> {
    config: ChainConfig,
    potential: P,
    noise: N,
    frozen: Option<OuTransition>,
}

impl Sampler<TracePotential, TraceNoise> {
    /// The trace potential and trace noise parameterized by `config`.
    pub fn new(config: ChainConfig) -> Result<Self> {
        let potential = TracePotential::new(config.alpha);
        let noise = TraceNoise::new(config.epsilon);
        Self::with_models(config, potential, noise)
    }
}

impl<P: Potential, N: NoiseModel> Sampler<P, N> {
    pub fn with_models(config: ChainConfig, potential: P, noise: N) -> Result<Self> {
        config.validate()?;
        let frozen = match config.h {
            OuTime::Zero => Some(OuTransition::identity()),
            OuTime::Infinite => Some(OuTransition::full_refresh(config.beta)),
            h if config.freeze_diffusion => {
                let d = Diffusion::decompose(&noise.sigma(&GroupElement::identity()))?;
                Some(OuTransition::from_diffusion(&d, config.beta, h)?)
            }
            _ => None,
        };
        Ok(Sampler { config, potential, noise, frozen })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn potential(&self) -> &P {
        &self.potential
    }

    pub fn hamiltonian(&self, s: &PhaseState) -> f64 {
        hamiltonian(&self.potential, s)
    }

    /// The OU transition used at position `g`.
    pub fn transition_at(&self, g: &GroupElement) -> Result<OuTransition> {
        match &self.frozen {
            Some(t) => Ok(t.clone()),
            None => {
                // D(g) degenerates on a surface in SO(3) that long chains
                // pass close to; the exact transition stays valid there.
                let d = Diffusion::decompose(&self.noise.sigma(g))?;
                OuTransition::from_diffusion(&d, self.config.beta, self.config.h)
            }
        }
    }

    /// Step 1: exact OU refresh of `s.v` at frozen `s.g`.
    pub fn refresh<R: Rng + ?Sized>(&self, s: &PhaseState, rng: &mut R) -> Result<AlgebraElement> {
        Ok(match &self.frozen {
            Some(t) => t.sample(&s.v, rng),
            None => self.transition_at(&s.g)?.sample(&s.v, rng),
        })
    }

    pub fn step<R: Rng + ?Sized>(&self, s: &PhaseState, rng: &mut R) -> Result<StepRecord> {
        let v_star = self.refresh(s, rng)?;
        let start = PhaseState::new(s.g, v_star);
        let h0 = self.hamiltonian(&start);

        let proposal = leapfrog_trajectory(&self.potential, &start, &self.config.leapfrog);
        let h1 = self.hamiltonian(&proposal);

        let log_ratio = -self.config.acceptance_scale * self.config.beta * (h1 - h0);
        let u: f64 = rng.random();
        // NaN energies compare false and are rejected
        let accepted = u < log_ratio.min(0.0).exp();

        Ok(if accepted {
            StepRecord {
                state: proposal,
                hamiltonian: h1,
                accepted,
                proposal_hamiltonian: h1,
                refreshed: v_star,
            }
        } else {
            StepRecord {
                state: start.flipped(),
                hamiltonian: h0,
                accepted,
                proposal_hamiltonian: h1,
                refreshed: v_star,
            }
        })
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, init: Init, rng: &mut R) -> PhaseState {
        match init {
            Init::Identity => PhaseState::new(GroupElement::identity(), gibbs_momentum(self.config.beta, rng)),
            Init::HaarRandom => {
                let g = haar_sample(rng);
                PhaseState::new(g, gibbs_momentum(self.config.beta, rng))
            }
            Init::State(s) => s,
        }
    }

    /// `n_samples` consecutive steps from `init`.
    pub fn run<R: Rng + ?Sized>(&self, init: Init, rng: &mut R) -> Result<Trace> {
        let mut state = self.initial_state(init, rng);
        let mut records = Vec::with_capacity(self.config.n_samples);
        for _ in 0..self.config.n_samples {
            let rec = self.step(&state, rng)?;
            state = rec.state;
            records.push(rec);
        }
        Ok(Trace { records, config: self.config.clone() })
    }
}

/// One step of the default chain described by `cfg`.
pub fn mcmc_step<R: Rng + ?Sized>(s: &PhaseState, cfg: &ChainConfig, rng: &mut R) -> Result<StepRecord> {
    Sampler::new(cfg.clone())?.step(s, rng)
}

/// Runs the default chain described by `cfg`.
pub fn run_chain<R: Rng + ?Sized>(cfg: &ChainConfig, init: Init, rng: &mut R) -> Result<Trace> {
    Sampler::new(cfg.clone())?.run(init, rng)
}
