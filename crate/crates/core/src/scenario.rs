//! Ground truth and synthetic measurements.
//!
//! Measurements are produced at the parameter level: each path contributes a
//! range perturbed by the Fisher-information noise floor of its amplitude,
//! and anything below the detection threshold is dropped.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::likelihood::{AssociationParams, LikelihoodModel, NoiseModel, UtConfig};
use crate::model::{
    active_scatter_distance, los_distance, orientation_from_velocity, passive_scatter_distance,
    sqrtm_psd, ActiveChannel, AgentState, Anchor, AnchorId, ExtentModel, Mat2, Measurement,
    MeasurementSet, PassiveChannel, Transmitter, Vec2,
};

/// Every constant of the simulated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub anchors: Vec<Anchor>,
    pub passive_tx: AnchorId,
    /// Whether the passive transmitter also records its own return.
    pub passive_self_pair: bool,
    pub num_steps: usize,
    pub dt: f64,
    pub speed: f64,
    pub waypoints: Vec<Vec2>,
    /// `(long, short)` semi-axes of the body ellipse.
    pub semi_axes: (f64, f64),
    pub bias: Vec2,
    /// Inclusive step interval during which the direct path is blocked.
    pub olos_window: Option<(usize, usize)>,
    /// Normalized direct-path amplitude at 1 m, dB.
    pub ref_amplitude_db: f64,
    pub beta_active: f64,
    pub beta_passive: f64,
    /// Passive scatter amplitude below the concurrent direct path, dB.
    pub passive_offset_db: f64,
    pub gamma: f64,
    pub mu_meas: f64,
    pub mu_clutter: f64,
    pub d_max: f64,
    pub rolloff: f64,
    pub bandwidth_hz: f64,
    pub noise_enabled: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut anchors = alloc::vec![
            Anchor::new(1, 0.0, 0.0),
            Anchor::new(2, 6.0, 0.0),
            Anchor::new(3, 0.0, 6.0),
            Anchor::new(4, 6.0, 6.0),
        ];
        anchors[3].can_transmit_passive = true;
        Self {
            anchors,
            passive_tx: AnchorId(4),
            passive_self_pair: false,
            num_steps: 190,
            dt: 0.1,
            speed: 0.5,
            waypoints: alloc::vec![
                Vec2::new(1.0, 1.0),
                Vec2::new(1.0, 5.0),
                Vec2::new(5.0, 5.0),
                Vec2::new(5.0, 2.0),
            ],
            semi_axes: (0.3, 0.2),
            bias: Vec2::new(0.25, 0.1),
            olos_window: Some((80, 129)),
            ref_amplitude_db: 40.0,
            beta_active: 0.2,
            beta_passive: 0.8,
            passive_offset_db: 10.0,
            gamma: 2.0,
            mu_meas: 5.0,
            mu_clutter: 10.0,
            d_max: 30.0,
            rolloff: 0.6,
            bandwidth_hz: 5e8,
            noise_enabled: true,
        }
    }
}

fn positive(key: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(key, "must be positive and finite"))
    }
}

fn nonnegative(key: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(key, "must be nonnegative and finite"))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::invalid("anchors", "at least one anchor required"));
        }
        for (i, a) in self.anchors.iter().enumerate() {
            if !(a.position.x.is_finite() && a.position.y.is_finite()) {
                return Err(Error::invalid("anchors", "positions must be finite"));
            }
            if self.anchors[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::invalid(
                    "anchors",
                    alloc::format!("duplicate id {}", a.id.0),
                ));
            }
        }
        if !self.anchors.iter().any(|a| a.id == self.passive_tx) {
            return Err(Error::invalid(
                "passive_tx_anchor",
                "not one of the anchors",
            ));
        }
        if self.num_steps == 0 {
            return Err(Error::invalid("num_steps", "must be positive"));
        }
        positive("dt", self.dt)?;
        positive("speed", self.speed)?;
        if self.waypoints.len() < 2 {
            return Err(Error::invalid("waypoints", "need at least two waypoints"));
        }
        if self
            .waypoints
            .iter()
            .any(|w| !(w.x.is_finite() && w.y.is_finite()))
        {
            return Err(Error::invalid("waypoints", "must be finite"));
        }
        nonnegative("semi_axes", self.semi_axes.0)?;
        nonnegative("semi_axes", self.semi_axes.1)?;
        if !(self.bias.x.is_finite() && self.bias.y.is_finite()) {
            return Err(Error::invalid("bias", "must be finite"));
        }
        if let Some((start, end)) = self.olos_window {
            if start < 1 || start > end || end > self.num_steps {
                return Err(Error::invalid(
                    "olos_window",
                    "must be an interval inside [1, num_steps]",
                ));
            }
        }
        if !self.ref_amplitude_db.is_finite() {
            return Err(Error::invalid("ref_amplitude_db", "must be finite"));
        }
        positive("beta_active", self.beta_active)?;
        positive("beta_passive", self.beta_passive)?;
        if !self.passive_offset_db.is_finite() {
            return Err(Error::invalid("passive_offset_db", "must be finite"));
        }
        positive("gamma", self.gamma)?;
        nonnegative("mu_meas", self.mu_meas)?;
        nonnegative("mu_clutter", self.mu_clutter)?;
        positive("d_max", self.d_max)?;
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::invalid("rolloff", "must lie in [0, 1]"));
        }
        positive("bandwidth_hz", self.bandwidth_hz)?;
        Ok(())
    }

    pub fn anchor(&self, id: AnchorId) -> Result<&Anchor> {
        self.anchors
            .iter()
            .find(|a| a.id == id)
            .ok_or(Error::UnknownAnchor(id.0))
    }

    pub fn is_blocked(&self, step: usize) -> bool {
        self.olos_window
            .is_some_and(|(s, e)| (s..=e).contains(&step))
    }

    /// Receivers of the passive channel, in anchor order.
    pub fn passive_receivers(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors
            .iter()
            .filter(move |a| self.passive_self_pair || a.id != self.passive_tx)
    }
}

/// True states for steps `0..=num_steps`; step 0 is the prior epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub initial: AgentState,
    pub initial_orientation: f64,
    /// `states[n - 1]` is the state at step `n`.
    pub states: Vec<AgentState>,
    pub orientations: Vec<f64>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State at step `n`, `0 <= n <= len`.
    pub fn state(&self, n: usize) -> &AgentState {
        if n == 0 {
            &self.initial
        } else {
            &self.states[n - 1]
        }
    }

    pub fn orientation(&self, n: usize) -> f64 {
        if n == 0 {
            self.initial_orientation
        } else {
            self.orientations[n - 1]
        }
    }
}

/// Constant-speed track along the waypoint polyline. Step `n` sits at arc
/// length `n * dt * speed`.
pub fn build_trajectory(config: &ScenarioConfig) -> Result<GroundTruth> {
    config.validate()?;
    let segments: Vec<(Vec2, Vec2, f64)> = config
        .waypoints
        .windows(2)
        .map(|w| (w[0], w[1], (w[1] - w[0]).norm()))
        .filter(|s| s.2 > 0.0)
        .collect();
    if segments.is_empty() {
        return Err(Error::invalid("waypoints", "path has zero length"));
    }
    let path: f64 = segments.iter().map(|s| s.2).sum();
    let required = config.num_steps as f64 * config.dt * config.speed;
    if required > path * (1.0 + 1e-12) {
        return Err(Error::TrajectoryUnderrun {
            path_m: path,
            required_m: required,
        });
    }

    let at = |s: f64| -> AgentState {
        let mut start = 0.0;
        for (k, &(a, b, len)) in segments.iter().enumerate() {
            let last = k + 1 == segments.len();
            if s <= start + len || last {
                let dir = (b - a) / len;
                let t = (s - start).clamp(0.0, len);
                return AgentState::new(a + dir * t, dir * config.speed, config.bias);
            }
            start += len;
        }
        unreachable!("segments is non-empty")
    };

    let initial = at(0.0);
    let initial_orientation = orientation_from_velocity(&initial.velocity)?;
    let mut states = Vec::with_capacity(config.num_steps);
    let mut orientations = Vec::with_capacity(config.num_steps);
    for n in 1..=config.num_steps {
        let st = at(n as f64 * config.dt * config.speed);
        orientations.push(orientation_from_velocity(&st.velocity)?);
        states.push(st);
    }
    Ok(GroundTruth {
        initial,
        initial_orientation,
        states,
        orientations,
    })
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

fn linear_to_db(x: f64) -> f64 {
    20.0 * x.log10()
}

/// Free-space normalized amplitudes in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeModel {
    pub ref_db: f64,
    pub beta_active_db: f64,
    pub beta_passive_db: f64,
    /// Passive transmit level, calibrated per scenario.
    pub passive_tx_db: f64,
}

impl AmplitudeModel {
    pub fn los_db(&self, distance: f64) -> f64 {
        self.ref_db - linear_to_db(distance)
    }

    pub fn los(&self, distance: f64) -> f64 {
        db_to_linear(self.los_db(distance))
    }

    pub fn active_scatter(&self, distance: f64) -> f64 {
        db_to_linear(self.los_db(distance) + self.beta_active_db)
    }

    pub fn passive_db(&self, tx_leg: f64, rx_leg: f64) -> f64 {
        self.passive_tx_db - linear_to_db(tx_leg * rx_leg) + self.beta_passive_db
    }

    pub fn passive_scatter(&self, tx_leg: f64, rx_leg: f64) -> f64 {
        db_to_linear(self.passive_db(tx_leg, rx_leg))
    }

    /// Picks the passive transmit level so that the median over receivers of
    /// (direct-path dB - passive dB) at `state` equals `offset_db`.
    pub fn calibrate(config: &ScenarioConfig, state: &AgentState) -> Result<Self> {
        let mut model = Self {
            ref_db: config.ref_amplitude_db,
            beta_active_db: linear_to_db(config.beta_active),
            beta_passive_db: linear_to_db(config.beta_passive),
            passive_tx_db: 0.0,
        };
        let tx = config.anchor(config.passive_tx)?;
        let center = state.body_center();
        let mut levels: Vec<f64> = config
            .passive_receivers()
            .map(|rx| {
                let target =
                    model.los_db(los_distance(&state.position, rx)) - config.passive_offset_db;
                target
                    - model.passive_db((center - tx.position).norm(), (center - rx.position).norm())
            })
            .filter(|v| v.is_finite())
            .collect();
        if levels.is_empty() {
            return Err(Error::invalid(
                "passive_tx_anchor",
                "no passive receivers to calibrate against",
            ));
        }
        levels.sort_by(f64::total_cmp);
        let mid = levels.len() / 2;
        model.passive_tx_db = if levels.len() % 2 == 1 {
            levels[mid]
        } else {
            0.5 * (levels[mid - 1] + levels[mid])
        };
        Ok(model)
    }
}

/// Ground truth plus the derived models of one configured experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub truth: GroundTruth,
    pub extent: ExtentModel,
    pub noise: NoiseModel,
    pub amplitude: AmplitudeModel,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let truth = build_trajectory(&config)?;
        let extent = ExtentModel::from_semi_axes(config.semi_axes.0, config.semi_axes.1)?;
        let noise = NoiseModel::from_pulse(config.rolloff, config.bandwidth_hz)?;
        let amplitude = AmplitudeModel::calibrate(&config, truth.state(config.num_steps / 2))?;
        let scenario = Self {
            config,
            truth,
            extent,
            noise,
            amplitude,
        };
        let reach = scenario.max_range();
        if reach >= scenario.config.d_max {
            return Err(Error::invalid(
                "d_max",
                alloc::format!(
                    "{} m does not exceed the largest range along the track ({reach:.3} m)",
                    scenario.config.d_max
                ),
            ));
        }
        Ok(scenario)
    }

    /// Largest direct, monostatic or bistatic range the body can produce.
    pub fn max_range(&self) -> f64 {
        let margin = self.config.semi_axes.0.max(self.config.semi_axes.1);
        let Ok(tx) = self.config.anchor(self.config.passive_tx) else {
            return f64::INFINITY;
        };
        let mut reach: f64 = 0.0;
        for n in 0..=self.truth.len() {
            let st = self.truth.state(n);
            let c = st.body_center();
            for a in &self.config.anchors {
                reach = reach
                    .max(los_distance(&st.position, a))
                    .max((c - a.position).norm() + margin);
            }
            for rx in self.config.passive_receivers() {
                reach =
                    reach.max((c - tx.position).norm() + (c - rx.position).norm() + 2.0 * margin);
            }
        }
        reach
    }

    pub fn likelihood_model(
        &self,
        ut: UtConfig,
        los_detection_prob: f64,
    ) -> Result<LikelihoodModel> {
        ut.validate()?;
        if !(0.0..=1.0).contains(&los_detection_prob) {
            return Err(Error::invalid("los_detection_prob", "must lie in [0, 1]"));
        }
        let assoc = AssociationParams::uniform(
            self.config.mu_meas,
            self.config.mu_clutter,
            self.config.d_max,
        )?;
        Ok(LikelihoodModel {
            anchors: self.config.anchors.clone(),
            noise: self.noise,
            ut,
            assoc,
            los_detection_prob,
        })
    }
}

/// Uniform draw from the solid ellipse `{q : q^T X^-1 q <= 4}` whose
/// covariance is `X`.
pub fn sample_scatter_on_ellipse<R: Rng + ?Sized>(extent: &Mat2, rng: &mut R) -> Vec2 {
    let r = rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    let (s, c) = phi.sin_cos();
    sqrtm_psd(extent) * Vec2::new(c, s) * (2.0 * r)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng);
    draw as usize
}

/// Counters for auditing the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerationStats {
    pub object_candidates: u64,
    pub below_threshold: u64,
    pub out_of_range: u64,
    pub clutter: u64,
}

impl GenerationStats {
    /// Fraction of object candidates that were dropped.
    pub fn rejection_rate(&self) -> f64 {
        if self.object_candidates == 0 {
            0.0
        } else {
            (self.below_threshold + self.out_of_range) as f64 / self.object_candidates as f64
        }
    }
}

/// Measurement generator owning its random stream.
#[derive(Debug)]
pub struct MeasurementGenerator<'a, R> {
    scenario: &'a Scenario,
    rng: R,
    stats: GenerationStats,
}

impl<'a, R: Rng> MeasurementGenerator<'a, R> {
    pub fn new(scenario: &'a Scenario, rng: R) -> Self {
        Self {
            scenario,
            rng,
            stats: GenerationStats::default(),
        }
    }

    pub fn stats(&self) -> GenerationStats {
        self.stats
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    fn emit(
        &mut self,
        distance: f64,
        amplitude: f64,
        rx: AnchorId,
        tx: Transmitter,
    ) -> Option<Measurement> {
        let cfg = &self.scenario.config;
        self.stats.object_candidates += 1;
        if !(amplitude >= cfg.gamma) {
            self.stats.below_threshold += 1;
            return None;
        }
        let noisy = if cfg.noise_enabled {
            let std = self.scenario.noise.std_amplitude_product() / amplitude;
            distance + std * self.rng.sample::<f64, _>(StandardNormal)
        } else {
            distance
        };
        if !(0.0..=cfg.d_max).contains(&noisy) {
            self.stats.out_of_range += 1;
            return None;
        }
        Some(Measurement {
            distance: noisy,
            amplitude,
            rx,
            tx,
        })
    }

    /// Direct path (unless blocked), body scatter and clutter seen by one
    /// anchor from the agent's transmission. Sorted by distance.
    pub fn active(
        &mut self,
        state: &AgentState,
        theta: f64,
        rx: AnchorId,
        blocked: bool,
    ) -> Result<Vec<Measurement>> {
        let scenario = self.scenario;
        let anchor = *scenario.config.anchor(rx)?;
        let amp = scenario.amplitude;
        let mut out = Vec::new();
        if !blocked {
            let d = los_distance(&state.position, &anchor);
            out.extend(self.emit(d, amp.los(d), rx, Transmitter::Agent));
        }
        let extent = scenario.extent.oriented(theta);
        for _ in 0..poisson(scenario.config.mu_meas, &mut self.rng) {
            let q = sample_scatter_on_ellipse(&extent, &mut self.rng);
            let d = active_scatter_distance(&state.position, &state.bias, &q, &anchor);
            out.extend(self.emit(d, amp.active_scatter(d), rx, Transmitter::Agent));
        }
        out.extend(self.clutter(rx, Transmitter::Agent));
        out.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        Ok(out)
    }

    /// Body scatter and clutter of the anchor-to-anchor channel `tx -> rx`.
    pub fn passive(
        &mut self,
        state: &AgentState,
        theta: f64,
        tx: AnchorId,
        rx: AnchorId,
    ) -> Result<Vec<Measurement>> {
        let scenario = self.scenario;
        if tx != scenario.config.passive_tx {
            return Err(Error::invalid(
                "passive_tx_anchor",
                alloc::format!("anchor {} is not the passive transmitter", tx.0),
            ));
        }
        let tx_anchor = *scenario.config.anchor(tx)?;
        let rx_anchor = *scenario.config.anchor(rx)?;
        let extent = scenario.extent.oriented(theta);
        let mut out = Vec::new();
        for _ in 0..poisson(scenario.config.mu_meas, &mut self.rng) {
            let q = sample_scatter_on_ellipse(&extent, &mut self.rng);
            let point = state.body_center() + q;
            let d =
                passive_scatter_distance(&state.position, &state.bias, &q, &tx_anchor, &rx_anchor);
            let u = scenario.amplitude.passive_scatter(
                (point - tx_anchor.position).norm(),
                (point - rx_anchor.position).norm(),
            );
            out.extend(self.emit(d, u, rx, Transmitter::Anchor(tx)));
        }
        out.extend(self.clutter(rx, Transmitter::Anchor(tx)));
        out.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        Ok(out)
    }

    /// False alarms: uniform distance, unit-Rayleigh amplitude above `gamma`.
    pub fn clutter(&mut self, rx: AnchorId, tx: Transmitter) -> Vec<Measurement> {
        let cfg = &self.scenario.config;
        let count = poisson(cfg.mu_clutter, &mut self.rng);
        self.stats.clutter += count as u64;
        (0..count)
            .map(|_| {
                let distance = cfg.d_max * self.rng.random::<f64>();
                // inverse CDF of a Rayleigh truncated to [gamma, inf)
                let u: f64 = 1.0 - self.rng.random::<f64>();
                let amplitude = (cfg.gamma * cfg.gamma - 2.0 * u.ln()).sqrt();
                Measurement {
                    distance,
                    amplitude,
                    rx,
                    tx,
                }
            })
            .collect()
    }

    /// Every active and passive channel at step `n` (1-based).
    pub fn step(&mut self, n: usize) -> Result<MeasurementSet> {
        let scenario = self.scenario;
        let cfg = &scenario.config;
        if n == 0 || n > cfg.num_steps {
            return Err(Error::invalid(
                "num_steps",
                alloc::format!("step {n} outside 1..={}", cfg.num_steps),
            ));
        }
        let state = *scenario.truth.state(n);
        let theta = scenario.truth.orientation(n);
        let blocked = cfg.is_blocked(n);
        let mut set = MeasurementSet::empty(n);
        for anchor in &cfg.anchors {
            let measurements = self.active(&state, theta, anchor.id, blocked)?;
            set.active.push(ActiveChannel {
                rx: anchor.id,
                measurements,
            });
        }
        for rx in cfg.passive_receivers() {
            let measurements = self.passive(&state, theta, cfg.passive_tx, rx.id)?;
            set.passive.push(PassiveChannel {
                tx: cfg.passive_tx,
                rx: rx.id,
                measurements,
            });
        }
        Ok(set)
    }

    /// Measurements for steps `1..=num_steps`.
    pub fn record(&mut self) -> Result<Vec<MeasurementSet>> {
        (1..=self.scenario.config.num_steps)
            .map(|n| self.step(n))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    extern crate std;

    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet() -> ScenarioConfig {
        ScenarioConfig {
            mu_meas: 0.0,
            mu_clutter: 0.0,
            noise_enabled: false,
            ..Default::default()
        }
    }

    #[test]
    fn straight_line_kinematics() {
        let cfg = ScenarioConfig {
            waypoints: alloc::vec![Vec2::new(1.0, 1.0), Vec2::new(1.0, 5.0)],
            num_steps: 80,
            olos_window: None,
            ..Default::default()
        };
        let truth = build_trajectory(&cfg).unwrap();
        assert_eq!(truth.len(), 80);
        assert_relative_eq!(
            truth.state(40).position,
            Vec2::new(1.0, 3.0),
            epsilon = 1e-9
        );
        assert_relative_eq!(
            truth.state(80).position,
            Vec2::new(1.0, 5.0),
            epsilon = 1e-9
        );
        let short = ScenarioConfig {
            num_steps: 81,
            ..cfg
        };
        assert!(matches!(
            build_trajectory(&short),
            Err(Error::TrajectoryUnderrun { .. })
        ));
    }

    #[test]
    fn default_trajectory() {
        let truth = build_trajectory(&ScenarioConfig::default()).unwrap();
        assert_eq!(truth.len(), 190);
        assert!(truth.states.iter().all(|s| s.bias == Vec2::new(0.25, 0.1)));
        // two turns: heading changes exactly twice
        let turns = truth
            .orientations
            .windows(2)
            .filter(|w| (w[0] - w[1]).abs() > 1e-9)
            .count();
        assert_eq!(turns, 2);
        for n in 1..=190 {
            let prev = truth.state(n - 1);
            let cur = truth.state(n);
            assert!(
                ((cur.position - prev.position).norm() - 0.05).abs() < 1e-9 || n == 81 || n == 161
            );
            assert!((cur.velocity.norm() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn scatter_degenerate_and_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_scatter_on_ellipse(&Mat2::zeros(), &mut rng),
            Vec2::zeros()
        );
        let x = ExtentModel::from_semi_axes(0.3, 0.2).unwrap().oriented(0.0);
        for _ in 0..10_000 {
            let q = sample_scatter_on_ellipse(&x, &mut rng);
            assert!((q.x / 0.3).powi(2) + (q.y / 0.2).powi(2) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn scatter_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = ExtentModel::from_semi_axes(0.3, 0.2).unwrap().oriented(0.0);
        let n = 100_000;
        let (mut sxx, mut syy, mut sxy, mut mx, mut my) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut fourth_x = 0.0;
        for _ in 0..n {
            let q = sample_scatter_on_ellipse(&x, &mut rng);
            sxx += q.x * q.x;
            syy += q.y * q.y;
            sxy += q.x * q.y;
            mx += q.x;
            my += q.y;
            fourth_x += q.x.powi(4);
        }
        let nf = n as f64;
        let var_x = sxx / nf;
        // standard error of the second moment from the sample fourth moment
        let se = ((fourth_x / nf - var_x * var_x) / nf).sqrt();
        assert!((var_x - 0.09 / 4.0).abs() < 3.0 * se, "{var_x}");
        assert!((syy / nf - 0.04 / 4.0).abs() < 3.0 * se);
        assert!((sxy / nf).abs() < 3.0 * se);
        assert!((mx / nf).abs() < 3.0 * (0.0225 / nf).sqrt());
        assert!((my / nf).abs() < 3.0 * (0.01 / nf).sqrt());
    }

    #[test]
    fn active_noise_free_single_los() {
        let scenario = Scenario::new(quiet()).unwrap();
        let mut gen = MeasurementGenerator::new(&scenario, ChaCha8Rng::seed_from_u64(3));
        let st = *scenario.truth.state(10);
        let out = gen.active(&st, 0.0, AnchorId(2), false).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].distance, (st.position - Vec2::new(6.0, 0.0)).norm());
        assert!(gen.active(&st, 0.0, AnchorId(2), true).unwrap().is_empty());
        assert!(gen
            .passive(&st, 0.0, AnchorId(4), AnchorId(1))
            .unwrap()
            .is_empty());
        assert!(gen.passive(&st, 0.0, AnchorId(1), AnchorId(2)).is_err());
    }

    #[test]
    fn los_amplitude_at_one_meter() {
        let scenario = Scenario::new(quiet()).unwrap();
        assert_relative_eq!(scenario.amplitude.los(1.0), 100.0, max_relative = 1e-12);
        assert_relative_eq!(scenario.amplitude.los(2.0), 50.0, max_relative = 1e-12);
        assert_relative_eq!(
            scenario.amplitude.active_scatter(1.0),
            20.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn blocked_channel_has_scatter_only() {
        let cfg = ScenarioConfig {
            mu_clutter: 0.0,
            noise_enabled: false,
            ..Default::default()
        };
        let scenario = Scenario::new(cfg).unwrap();
        let mut gen = MeasurementGenerator::new(&scenario, ChaCha8Rng::seed_from_u64(4));
        for n in [80, 100, 129] {
            let set = gen.step(n).unwrap();
            let st = scenario.truth.state(n);
            for ch in &set.active {
                let los = (st.position - scenario.config.anchor(ch.rx).unwrap().position).norm();
                for m in &ch.measurements {
                    assert_ne!(m.distance, los);
                    // scatter amplitudes sit 14 dB under the direct path
                    assert_relative_eq!(
                        m.amplitude,
                        0.2 * scenario.amplitude.los(m.distance),
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn passive_on_baseline() {
        let cfg = ScenarioConfig {
            mu_clutter: 0.0,
            noise_enabled: false,
            gamma: 1e-6,
            waypoints: alloc::vec![Vec2::new(1.0, 1.0), Vec2::new(1.0, 5.0)],
            num_steps: 40,
            olos_window: None,
            ..Default::default()
        };
        let scenario = Scenario::new(cfg).unwrap();
        let mut gen = MeasurementGenerator::new(&scenario, ChaCha8Rng::seed_from_u64(5));
        // body center at (3, 3) sits on the (0,0)-(6,6) diagonal
        let st = AgentState::new(
            Vec2::new(2.75, 2.9),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.25, 0.1),
        );
        let base = 72f64.sqrt();
        let mut seen = 0;
        for _ in 0..20 {
            for m in gen
                .passive(&st, PI / 4.0, AnchorId(4), AnchorId(1))
                .unwrap()
            {
                assert!(m.distance >= base - 1e-12 && m.distance <= base + 2.0 * 0.3);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn passive_calibration_ten_db_below_los() {
        let cfg = ScenarioConfig {
            mu_clutter: 0.0,
            noise_enabled: false,
            gamma: 1e-6,
            mu_meas: 20.0,
            ..Default::default()
        };
        let scenario = Scenario::new(cfg).unwrap();
        let n = scenario.config.num_steps / 2;
        let st = *scenario.truth.state(n);
        let mut gen = MeasurementGenerator::new(&scenario, ChaCha8Rng::seed_from_u64(6));
        let mut gaps = std::vec::Vec::new();
        for _ in 0..50 {
            let set = gen.step(n).unwrap();
            for ch in &set.passive {
                let los_u = scenario
                    .amplitude
                    .los((st.position - scenario.config.anchor(ch.rx).unwrap().position).norm());
                gaps.extend(
                    ch.measurements
                        .iter()
                        .map(|m| 20.0 * (los_u / m.amplitude).log10()),
                );
            }
        }
        gaps.sort_by(f64::total_cmp);
        let median = gaps[gaps.len() / 2];
        assert!((median - 10.0).abs() <= 2.0, "median gap {median} dB");
    }

    #[test]
    fn clutter_support_and_rate() {
        let cfg = ScenarioConfig::default();
        let scenario = Scenario::new(cfg).unwrap();
        let mut gen = MeasurementGenerator::new(&scenario, ChaCha8Rng::seed_from_u64(7));
        let draws = 100_000;
        let mut total = 0usize;
        for _ in 0..draws {
            let c = gen.clutter(AnchorId(1), Transmitter::Agent);
            for m in &c {
                assert!((0.0..=30.0).contains(&m.distance));
                assert!(m.amplitude >= 2.0);
            }
            total += c.len();
        }
        let mean = total as f64 / draws as f64;
        assert!(
            (mean - 10.0).abs() < 3.0 * (10.0 / draws as f64).sqrt(),
            "{mean}"
        );

        let none = Scenario::new(ScenarioConfig {
            mu_clutter: 0.0,
            ..Default::default()
        })
        .unwrap();
        let mut gen = MeasurementGenerator::new(&none, ChaCha8Rng::seed_from_u64(8));
        assert!(gen.clutter(AnchorId(1), Transmitter::Agent).is_empty());
    }

    #[test]
    fn step_layout_and_determinism() {
        let scenario = Scenario::new(ScenarioConfig::default()).unwrap();
        let mut a = MeasurementGenerator::new(&scenario, ChaCha8Rng::seed_from_u64(9));
        let mut b = MeasurementGenerator::new(&scenario, ChaCha8Rng::seed_from_u64(9));
        let sa = a.step(12).unwrap();
        assert_eq!(sa, b.step(12).unwrap());
        assert_eq!(sa.active.len(), 4);
        assert_eq!(sa.passive.len(), 3);
        assert!(a.step(0).is_err());
        assert!(a.step(191).is_err());
        for m in sa.iter() {
            assert!((0.0..=30.0).contains(&m.distance) && m.amplitude >= 2.0);
        }
    }

    #[test]
    fn self_pair_adds_fourth_passive_channel() {
        let scenario = Scenario::new(ScenarioConfig {
            passive_self_pair: true,
            ..Default::default()
        })
        .unwrap();
        let mut gen = MeasurementGenerator::new(&scenario, ChaCha8Rng::seed_from_u64(10));
        assert_eq!(gen.step(1).unwrap().passive.len(), 4);
    }

    #[test]
    fn validation_errors() {
        let bad = |cfg: ScenarioConfig, key: &str| match cfg.validate() {
            Err(Error::InvalidConfig { key: k, .. }) => assert_eq!(k, key),
            other => panic!("expected error on {key}, got {other:?}"),
        };
        bad(
            ScenarioConfig {
                gamma: -1.0,
                ..Default::default()
            },
            "gamma",
        );
        bad(
            ScenarioConfig {
                dt: 0.0,
                ..Default::default()
            },
            "dt",
        );
        bad(
            ScenarioConfig {
                olos_window: Some((0, 10)),
                ..Default::default()
            },
            "olos_window",
        );
        bad(
            ScenarioConfig {
                olos_window: Some((10, 300)),
                ..Default::default()
            },
            "olos_window",
        );
        bad(
            ScenarioConfig {
                passive_tx: AnchorId(9),
                ..Default::default()
            },
            "passive_tx_anchor",
        );
        bad(
            ScenarioConfig {
                mu_clutter: -0.5,
                ..Default::default()
            },
            "mu_clutter",
        );
        match Scenario::new(ScenarioConfig {
            d_max: 5.0,
            ..Default::default()
        }) {
            Err(Error::InvalidConfig { key, .. }) => assert_eq!(key, "d_max"),
            other => panic!("{other:?}"),
        }
    }
}
