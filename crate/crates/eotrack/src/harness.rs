//! Monte Carlo orchestration over realizations and estimator modes.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use eotrack_core::bounds::{kinematic_prior, pcrlb_los};
use eotrack_core::likelihood::{LikelihoodModel, Mode};
use eotrack_core::scenario::{MeasurementGenerator, Scenario};
use eotrack_core::tracker::run_filter_partial;
use eotrack_core::{AgentState, MeasurementSet};

use crate::config::RunSpec;
use crate::Error;

/// Aggregated results of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeResult {
    pub mode: Mode,
    /// Position RMSE per step over all realizations, meters.
    pub rmse: Vec<f64>,
    /// Every per-step position error of every realization, ascending.
    pub sorted_errors: Vec<f64>,
    pub diverged: usize,
    pub collapsed: usize,
}

impl ModeResult {
    pub fn divergence_fraction(&self, realizations: usize) -> f64 {
        self.diverged as f64 / realizations as f64
    }

    /// Mean RMSE over the inclusive 1-based step range.
    pub fn mean_rmse(&self, first: usize, last: usize) -> f64 {
        let s = &self.rmse[first - 1..last];
        s.iter().sum::<f64>() / s.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub realizations: usize,
    /// Position bound per step, meters.
    pub bound: Vec<f64>,
    pub modes: Vec<ModeResult>,
    pub wall_time: Duration,
}

impl ResultTable {
    pub fn steps(&self) -> usize {
        self.bound.len()
    }

    pub fn mode(&self, mode: Mode) -> Option<&ModeResult> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

/// Outcome of one mode on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// Position error per step; after a collapse the last estimate is
    /// extrapolated at constant velocity.
    pub errors: Vec<f64>,
    pub collapsed_at: Option<usize>,
}

/// Everything shared by the realizations of one run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: RunSpec,
    pub scenario: Scenario,
    pub model: LikelihoodModel,
}

impl Experiment {
    pub fn new(spec: RunSpec) -> Result<Self, Error> {
        spec.validate()?;
        let scenario = Scenario::new(spec.scenario.clone())?;
        let model = scenario.likelihood_model(spec.ut, spec.los_detection_prob)?;
        Ok(Self {
            spec,
            scenario,
            model,
        })
    }

    pub fn seed(&self, realization: usize) -> u64 {
        self.spec.base_seed.wrapping_add(realization as u64)
    }

    /// Measurement record of one realization; stream 0 of its seed.
    pub fn record(&self, realization: usize) -> Result<Vec<MeasurementSet>, Error> {
        let rng = ChaCha8Rng::seed_from_u64(self.seed(realization));
        Ok(MeasurementGenerator::new(&self.scenario, rng).record()?)
    }

    /// Runs one mode on a given record. Each mode draws from its own stream
    /// of the realization seed, so adding or removing modes leaves the
    /// others unchanged.
    pub fn track(
        &self,
        realization: usize,
        record: &[MeasurementSet],
        mode: Mode,
    ) -> Result<Track, Error> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed(realization));
        rng.set_stream(1 + Mode::ALL.iter().position(|&m| m == mode).unwrap_or(0) as u64);
        let truth = &self.scenario.truth;
        let tracker = &self.spec.tracker;
        let prior = tracker.prior(&truth.initial);
        let (out, stopped) = run_filter_partial(
            record,
            tracker,
            &prior,
            |set| {
                eotrack_core::tracker::RadioLikelihood::new(
                    &self.model,
                    &self.scenario.extent,
                    set,
                    mode,
                )
            },
            &mut rng,
        )?;
        let mut estimates = out.estimates;
        let mut last: AgentState = estimates.last().copied().unwrap_or(prior.mean);
        while estimates.len() < record.len() {
            last.position += last.velocity * tracker.motion.dt;
            estimates.push(last);
        }
        let errors = estimates
            .iter()
            .enumerate()
            .map(|(k, e)| (e.position - truth.state(k + 1).position).norm())
            .collect();
        let collapsed_at = match stopped {
            Some(eotrack_core::Error::EnsembleCollapse { step }) => Some(step),
            _ => None,
        };
        Ok(Track {
            errors,
            collapsed_at,
        })
    }

    pub fn is_diverged(&self, track: &Track) -> bool {
        let rule = self.spec.divergence;
        let tail = rule.tail_steps.min(track.errors.len());
        track.collapsed_at.is_some()
            || track.errors[track.errors.len() - tail..]
                .iter()
                .any(|&e| e > rule.threshold_m)
    }

    /// All modes on the shared record of one realization.
    pub fn realization(&self, realization: usize) -> Result<Vec<Track>, Error> {
        let record = self.record(realization)?;
        self.spec
            .modes
            .iter()
            .map(|&mode| self.track(realization, &record, mode))
            .collect()
    }

    /// Realizations run in parallel; aggregation happens afterwards in
    /// realization order, so the result does not depend on scheduling.
    pub fn run(&self) -> Result<ResultTable, Error> {
        let start = Instant::now();
        let runs: Vec<Vec<Track>> = (0..self.spec.realizations)
            .into_par_iter()
            .map(|r| self.realization(r))
            .collect::<Result<_, _>>()?;
        let steps = self.scenario.truth.len();
        let modes = self
            .spec
            .modes
            .iter()
            .enumerate()
            .map(|(k, &mode)| {
                let mut sum_sq = vec![0.0; steps];
                let mut sorted_errors = Vec::with_capacity(steps * runs.len());
                let (mut diverged, mut collapsed) = (0, 0);
                for tracks in &runs {
                    let track = &tracks[k];
                    for (acc, e) in sum_sq.iter_mut().zip(&track.errors) {
                        *acc += e * e;
                    }
                    sorted_errors.extend_from_slice(&track.errors);
                    diverged += usize::from(self.is_diverged(track));
                    collapsed += usize::from(track.collapsed_at.is_some());
                }
                sorted_errors.sort_by(f64::total_cmp);
                let rmse = sum_sq
                    .iter()
                    .map(|s| (s / runs.len() as f64).sqrt())
                    .collect();
                ModeResult {
                    mode,
                    rmse,
                    sorted_errors,
                    diverged,
                    collapsed,
                }
            })
            .collect();
        Ok(ResultTable {
            realizations: runs.len(),
            bound: self.bound()?,
            modes,
            wall_time: start.elapsed(),
        })
    }

    /// Direct-path position bound along the true track, started from the
    /// tracker's prior.
    pub fn bound(&self) -> Result<Vec<f64>, Error> {
        let t = &self.spec.tracker;
        let trace = pcrlb_los(
            &self.scenario.truth,
            &self.scenario.config.anchors,
            &self.scenario.noise,
            &self.scenario.amplitude,
            &t.motion,
            &kinematic_prior(t.prior_position_std, t.prior_velocity_std),
        )?;
        Ok(trace.position_bound)
    }
}

pub fn run_experiment(spec: &RunSpec) -> Result<ResultTable, Error> {
    Experiment::new(spec.clone())?.run()
}
