//! Particle-based inference for the extended agent.
//!
//! The association variables of each step are summed out in closed form
//! (see [`crate::likelihood`]), so the message passing reduces to a
//! sequential importance-resampling filter over the agent state:
//! predict, reweight by the per-step likelihood, estimate, resample.

use alloc::vec::Vec;

use nalgebra::{Matrix4, Matrix4x2, Matrix6, SymmetricEigen, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::likelihood::{LikelihoodModel, Mode, ResolvedStep};
use crate::model::{orientation_from_velocity, AgentState, ExtentModel, MeasurementSet, Vec2};

/// Constant-velocity agent with white acceleration, random-walk bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub dt: f64,
    pub accel_std: f64,
    pub bias_std: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        Self {
            dt: 0.1,
            accel_std: 3.0,
            bias_std: 0.1,
        }
    }
}

impl MotionModel {
    /// State transition of `[p; v]`.
    pub fn transition(&self) -> Matrix4<f64> {
        let mut f = Matrix4::identity();
        f[(0, 2)] = self.dt;
        f[(1, 3)] = self.dt;
        f
    }

    /// Maps the acceleration onto `[p; v]`.
    pub fn noise_gain(&self) -> Matrix4x2<f64> {
        let h = 0.5 * self.dt * self.dt;
        Matrix4x2::new(h, 0.0, 0.0, h, self.dt, 0.0, 0.0, self.dt)
    }

    pub fn process_covariance(&self) -> Matrix4<f64> {
        let g = self.noise_gain();
        g * g.transpose() * (self.accel_std * self.accel_std)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(self.accel_std >= 0.0) {
            return Err(Error::invalid("accel_std", "must be nonnegative"));
        }
        if !(self.bias_std >= 0.0) {
            return Err(Error::invalid("bias_std", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn propagate<R: Rng + ?Sized>(&self, state: &AgentState, rng: &mut R) -> AgentState {
        let accel =
            Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * self.accel_std;
        let walk =
            Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * self.bias_std;
        let dt = self.dt;
        AgentState {
            position: state.position + state.velocity * dt + accel * (0.5 * dt * dt),
            velocity: state.velocity + accel * dt,
            bias: state.bias + walk,
        }
    }
}

fn to_vector(s: &AgentState) -> Vector6<f64> {
    Vector6::new(
        s.position.x,
        s.position.y,
        s.velocity.x,
        s.velocity.y,
        s.bias.x,
        s.bias.y,
    )
}

fn from_vector(v: &Vector6<f64>) -> AgentState {
    AgentState::new(
        Vec2::new(v[0], v[1]),
        Vec2::new(v[2], v[3]),
        Vec2::new(v[4], v[5]),
    )
}

/// Gaussian prior over `[p; v; b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: AgentState,
    pub covariance: Matrix6<f64>,
}

impl GaussianPrior {
    pub fn diagonal(mean: AgentState, position_std: f64, velocity_std: f64, bias_std: f64) -> Self {
        let (p, v, b) = (position_std.powi(2), velocity_std.powi(2), bias_std.powi(2));
        Self {
            mean,
            covariance: Matrix6::from_diagonal(&Vector6::new(p, p, v, v, b, b)),
        }
    }

    /// Symmetric square root, valid for singular covariances.
    fn root(&self) -> Result<Matrix6<f64>> {
        let sym = (self.covariance + self.covariance.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        if eig
            .eigenvalues
            .iter()
            .any(|&l| !(l >= -1e-12 * sym.norm().max(1.0)))
        {
            return Err(Error::invalid(
                "prior",
                "covariance must be positive semidefinite",
            ));
        }
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(eig.eigenvectors * Matrix6::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
    }
}

/// Post-resampling regularization noise per state component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub position: f64,
    pub velocity: f64,
    pub bias: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        position: 0.0,
        velocity: 0.0,
        bias: 0.0,
    };
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            position: 0.01,
            velocity: 0.01,
            bias: 0.005,
        }
    }
}

/// Anything that scores a state hypothesis for the current step.
pub trait StateLikelihood {
    fn ln_likelihood(&self, state: &AgentState, heading: f64) -> f64;
}

/// Radio measurements of one step under one estimator variant.
#[derive(Debug, Clone)]
pub struct RadioLikelihood<'a> {
    model: &'a LikelihoodModel,
    extent: &'a ExtentModel,
    step: ResolvedStep,
    mode: Mode,
}

impl<'a> RadioLikelihood<'a> {
    pub fn new(
        model: &'a LikelihoodModel,
        extent: &'a ExtentModel,
        set: &MeasurementSet,
        mode: Mode,
    ) -> Result<Self> {
        Ok(Self {
            model,
            extent,
            step: model.resolve(set)?,
            mode,
        })
    }
}

impl StateLikelihood for RadioLikelihood<'_> {
    fn ln_likelihood(&self, state: &AgentState, heading: f64) -> f64 {
        let extent = if self.mode.uses_extent() {
            self.extent.oriented(heading)
        } else {
            *self.extent.base()
        };
        self.step
            .ln_likelihood(self.model, state, &extent, self.mode)
    }
}

/// Weighted state hypotheses. Log-weights are kept normalized so that
/// `sum(exp(log_weights)) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub states: Vec<AgentState>,
    /// Last valid heading of each particle.
    pub headings: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Uniformly weighted ensemble; headings follow each particle's velocity,
    /// falling back to `default_heading`.
    pub fn from_states(states: Vec<AgentState>, default_heading: f64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("particles", "need at least one particle"));
        }
        let headings = states
            .iter()
            .map(|s| orientation_from_velocity(&s.velocity).unwrap_or(default_heading))
            .collect();
        let lw = -(states.len() as f64).ln();
        let log_weights = alloc::vec![lw; states.len()];
        Ok(Self {
            states,
            headings,
            log_weights,
        })
    }

    /// `count` independent draws from the prior.
    pub fn init<R: Rng + ?Sized>(prior: &GaussianPrior, count: usize, rng: &mut R) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("particles", "need at least one particle"));
        }
        let root = prior.root()?;
        let mean = to_vector(&prior.mean);
        let states = (0..count)
            .map(|_| {
                let z = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                from_vector(&(mean + root * z))
            })
            .collect();
        let heading = orientation_from_velocity(&prior.mean.velocity).unwrap_or(0.0);
        Self::from_states(states, heading)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    /// `1 / sum(w^2)`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self
            .log_weights
            .iter()
            .map(|lw| (2.0 * lw).exp())
            .sum::<f64>()
    }

    /// Propagates every particle through the motion model; weights unchanged.
    pub fn predict<R: Rng + ?Sized>(&mut self, motion: &MotionModel, rng: &mut R) {
        for s in &mut self.states {
            *s = motion.propagate(s, rng);
        }
    }

    /// Multiplies each weight by the step likelihood and renormalizes.
    /// Particles slower than `min_speed` keep their previous heading.
    pub fn update<L: StateLikelihood>(
        &mut self,
        likelihood: &L,
        min_speed: f64,
        step: usize,
    ) -> Result<()> {
        for ((state, heading), lw) in self
            .states
            .iter()
            .zip(&mut self.headings)
            .zip(&mut self.log_weights)
        {
            if state.velocity.norm() >= min_speed {
                if let Ok(theta) = orientation_from_velocity(&state.velocity) {
                    *heading = theta;
                }
            }
            let ll = likelihood.ln_likelihood(state, *heading);
            *lw += if ll.is_nan() { f64::NEG_INFINITY } else { ll };
        }
        self.normalize(step)
    }

    fn normalize(&mut self, step: usize) -> Result<()> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .filter(|w| w.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::EnsembleCollapse { step });
        }
        let sum: f64 = self.log_weights.iter().map(|lw| (lw - max).exp()).sum();
        let shift = max + sum.ln();
        for lw in &mut self.log_weights {
            *lw = if lw.is_finite() {
                *lw - shift
            } else {
                f64::NEG_INFINITY
            };
        }
        Ok(())
    }

    /// Systematic resampling when the effective sample size drops below
    /// `threshold * len`. Returns whether it resampled.
    pub fn resample_if_needed<R: Rng + ?Sized>(
        &mut self,
        threshold: f64,
        jitter: &Jitter,
        rng: &mut R,
    ) -> bool {
        let n = self.len();
        if self.effective_sample_size() >= threshold * n as f64 {
            return false;
        }
        let weights = self.weights();
        let stride = 1.0 / n as f64;
        let start = rng.random::<f64>() * stride;
        let mut states = Vec::with_capacity(n);
        let mut headings = Vec::with_capacity(n);
        let mut source = 0;
        let mut cumulative = weights[0];
        for k in 0..n {
            let target = start + k as f64 * stride;
            while cumulative < target && source + 1 < n {
                source += 1;
                cumulative += weights[source];
            }
            states.push(self.states[source]);
            headings.push(self.headings[source]);
        }
        let mut gauss = || rng.sample::<f64, _>(StandardNormal);
        for s in &mut states {
            s.position += Vec2::new(gauss(), gauss()) * jitter.position;
            s.velocity += Vec2::new(gauss(), gauss()) * jitter.velocity;
            s.bias += Vec2::new(gauss(), gauss()) * jitter.bias;
        }
        self.states = states;
        self.headings = headings;
        self.log_weights.fill(-(n as f64).ln());
        true
    }

    /// Weighted mean of the particle states.
    pub fn mmse(&self) -> AgentState {
        let mut acc = AgentState::default();
        for (s, lw) in self.states.iter().zip(&self.log_weights) {
            let w = lw.exp();
            acc.position += s.position * w;
            acc.velocity += s.velocity * w;
            acc.bias += s.bias * w;
        }
        acc
    }

    /// Square root of the trace of the weighted position covariance.
    pub fn position_spread(&self) -> f64 {
        let mean = self.mmse().position;
        self.states
            .iter()
            .zip(&self.log_weights)
            .map(|(s, lw)| lw.exp() * (s.position - mean).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

/// Filter settings independent of the scenario geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub particles: usize,
    pub motion: MotionModel,
    /// Resample when ESS falls below this fraction of the particle count.
    pub ess_threshold: f64,
    pub jitter: Jitter,
    pub min_speed: f64,
    pub prior_position_std: f64,
    pub prior_velocity_std: f64,
    pub prior_bias_std: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            particles: 5000,
            motion: MotionModel::default(),
            ess_threshold: 0.5,
            jitter: Jitter::default(),
            min_speed: 1e-3,
            prior_position_std: 0.3,
            prior_velocity_std: 0.3,
            prior_bias_std: 0.3,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::invalid("particles", "must be positive"));
        }
        self.motion.validate()?;
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return Err(Error::invalid("ess_threshold", "must lie in (0, 1]"));
        }
        for (key, v) in [
            ("prior_position_std", self.prior_position_std),
            ("prior_velocity_std", self.prior_velocity_std),
            ("prior_bias_std", self.prior_bias_std),
            ("jitter", self.jitter.position),
            ("jitter", self.jitter.velocity),
            ("jitter", self.jitter.bias),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Prior centered on the true initial position and velocity; the bias
    /// prior is centered at zero.
    pub fn prior(&self, initial: &AgentState) -> GaussianPrior {
        let mean = AgentState::new(initial.position, initial.velocity, Vec2::zeros());
        GaussianPrior::diagonal(
            mean,
            self.prior_position_std,
            self.prior_velocity_std,
            self.prior_bias_std,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackerOutput {
    pub estimates: Vec<AgentState>,
    pub ess: Vec<f64>,
    pub position_spread: Vec<f64>,
}

impl TrackerOutput {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// Runs predict / update / estimate / resample over a measurement record.
/// `likelihood_for` builds the step likelihood from the step's measurements.
pub fn run_filter_with<T, L, F, R>(
    record: &[T],
    config: &TrackerConfig,
    prior: &GaussianPrior,
    likelihood_for: F,
    rng: &mut R,
) -> Result<TrackerOutput>
where
    L: StateLikelihood,
    F: FnMut(&T) -> Result<L>,
    R: Rng + ?Sized,
{
    let (out, stopped) = run_filter_partial(record, config, prior, likelihood_for, rng)?;
    match stopped {
        Some(err) => Err(err),
        None => Ok(out),
    }
}

/// Like [`run_filter_with`], but an ensemble collapse ends the run early
/// instead of discarding it: the estimates up to the failing step are
/// returned together with the error. Configuration and measurement errors
/// are still reported through the outer `Result`.
pub fn run_filter_partial<T, L, F, R>(
    record: &[T],
    config: &TrackerConfig,
    prior: &GaussianPrior,
    mut likelihood_for: F,
    rng: &mut R,
) -> Result<(TrackerOutput, Option<Error>)>
where
    L: StateLikelihood,
    F: FnMut(&T) -> Result<L>,
    R: Rng + ?Sized,
{
    config.validate()?;
    let mut ens = ParticleEnsemble::init(prior, config.particles, rng)?;
    let mut out = TrackerOutput::default();
    for (k, item) in record.iter().enumerate() {
        let step = k + 1;
        ens.predict(&config.motion, rng);
        match ens.update(&likelihood_for(item)?, config.min_speed, step) {
            Ok(()) => {}
            Err(err @ Error::EnsembleCollapse { .. }) => return Ok((out, Some(err))),
            Err(err) => return Err(err),
        }
        out.estimates.push(ens.mmse());
        out.ess.push(ens.effective_sample_size());
        out.position_spread.push(ens.position_spread());
        ens.resample_if_needed(config.ess_threshold, &config.jitter, rng);
    }
    Ok((out, None))
}

/// Full filter over radio measurements; one output per record entry.
pub fn run_filter<R: Rng + ?Sized>(
    record: &[MeasurementSet],
    model: &LikelihoodModel,
    extent: &ExtentModel,
    prior: &GaussianPrior,
    config: &TrackerConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<TrackerOutput> {
    run_filter_with(
        record,
        config,
        prior,
        |set| RadioLikelihood::new(model, extent, set, mode),
        rng,
    )
}
