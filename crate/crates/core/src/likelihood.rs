//! Measurement likelihoods.
//!
//! Every likelihood is Gaussian in the measured distance. The variance always
//! contains the delay-estimation floor `sigma_d^2(u) = c^2 / (8 pi^2 beta_bw^2 u^2)`
//! driven by the measured normalized amplitude `u`. Scattering likelihoods add
//! the spread `l` of the body's scatter distribution mapped into the range
//! domain by an unscented transform.
//!
//! Per step, binary association variables are independent across
//! measurements, so summing them out gives a closed-form product of
//! `1 + mu_m f / (mu_c f_c)` factors. [`LikelihoodModel::step_likelihood`]
//! evaluates that product; [`ResolvedStep`] is the precomputed form the
//! particle filter uses.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{
    sqrtm_psd, AgentState, Anchor, AnchorId, Mat2, Measurement, MeasurementSet, Transmitter, Vec2,
};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// RMS bandwidth of a root-raised-cosine pulse with symbol rate `bandwidth_hz`.
///
/// The energy spectrum of the pulse is the raised-cosine spectrum. Its second
/// moment is integrated with composite Simpson, split at the edge of the flat
/// part so each piece is smooth.
pub fn rms_bandwidth(rolloff: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::invalid("rolloff", "must lie in [0, 1]"));
    }
    if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
        return Err(Error::invalid("bandwidth_hz", "must be positive"));
    }
    let symbol = 1.0 / bandwidth_hz;
    let flat_edge = (1.0 - rolloff) / (2.0 * symbol);
    let outer_edge = (1.0 + rolloff) / (2.0 * symbol);
    let spectrum = |f: f64| {
        if f <= flat_edge {
            1.0
        } else if f <= outer_edge {
            0.5 * (1.0 + (PI * symbol / rolloff * (f - flat_edge)).cos())
        } else {
            0.0
        }
    };
    let mut energy = simpson(|_| 1.0, 0.0, flat_edge, 2);
    let mut moment = simpson(|f| f * f, 0.0, flat_edge, 2);
    if rolloff > 0.0 {
        energy += simpson(spectrum, flat_edge, outer_edge, 4096);
        moment += simpson(|f| f * f * spectrum(f), flat_edge, outer_edge, 4096);
    }
    Ok((moment / energy).sqrt())
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Range-noise model driven by the Fisher information of delay estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub rms_bandwidth: f64,
    pub speed_of_light: f64,
}

impl NoiseModel {
    pub fn new(rms_bandwidth: f64) -> Result<Self> {
        if !(rms_bandwidth > 0.0 && rms_bandwidth.is_finite()) {
            return Err(Error::invalid("rms_bandwidth", "must be positive"));
        }
        Ok(Self {
            rms_bandwidth,
            speed_of_light: SPEED_OF_LIGHT,
        })
    }

    pub fn from_pulse(rolloff: f64, bandwidth_hz: f64) -> Result<Self> {
        Self::new(rms_bandwidth(rolloff, bandwidth_hz)?)
    }

    /// `sigma_d * u`, the same for every amplitude.
    pub fn std_amplitude_product(&self) -> f64 {
        self.speed_of_light / (2.0 * 2.0.sqrt() * PI * self.rms_bandwidth)
    }

    pub fn distance_std(&self, amplitude: f64) -> Result<f64> {
        if !(amplitude > 0.0) {
            return Err(Error::NonPositiveAmplitude(amplitude));
        }
        Ok(self.std_amplitude_product() / amplitude)
    }

    /// Unchecked variance; callers guarantee `amplitude > 0`.
    pub fn distance_variance(&self, amplitude: f64) -> f64 {
        let s = self.std_amplitude_product() / amplitude;
        s * s
    }
}

/// Sigma-point parameters of the unscented transform in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            kappa: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtWeights {
    /// `sqrt(L + lambda)`, the scale applied to the matrix-root columns.
    pub spread: f64,
    pub mean_center: f64,
    pub cov_center: f64,
    pub outer: f64,
}

impl UtConfig {
    const DIM: f64 = 2.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("ut_alpha", "must be positive"));
        }
        let lambda = self.lambda();
        if !(Self::DIM + lambda > 0.0) {
            return Err(Error::invalid("ut_kappa", "L + lambda must be positive"));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.alpha * self.alpha * (Self::DIM + self.kappa) - Self::DIM
    }

    pub fn weights(&self) -> UtWeights {
        let lambda = self.lambda();
        let n = Self::DIM + lambda;
        let mean_center = lambda / n;
        UtWeights {
            spread: n.sqrt(),
            mean_center,
            cov_center: mean_center + 1.0 - self.alpha * self.alpha + self.beta,
            outer: 0.5 / n,
        }
    }
}

/// A propagation channel, resolved to anchor coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    Active { anchor: Vec2 },
    Passive { tx: Vec2, rx: Vec2 },
}

impl Channel {
    /// Range of a scatter at `point`: monostatic for active, bistatic for passive.
    pub fn scatter_range(&self, point: &Vec2) -> f64 {
        match self {
            Channel::Active { anchor } => (point - anchor).norm(),
            Channel::Passive { tx, rx } => (point - tx).norm() + (point - rx).norm(),
        }
    }
}

/// Sigma-point offsets of `N(0, extent)`, reusable across channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPoints {
    offsets: [Vec2; 2],
    weights: UtWeights,
}

impl SigmaPoints {
    pub fn new(extent: &Mat2, ut: &UtConfig) -> Self {
        let weights = ut.weights();
        let root = sqrtm_psd(extent) * weights.spread;
        Self {
            offsets: [root.column(0).into(), root.column(1).into()],
            weights,
        }
    }

    /// Weighted variance of the channel range over the sigma points placed
    /// around `center`.
    pub fn range_variance(&self, center: &Vec2, channel: &Channel) -> f64 {
        let w = &self.weights;
        let y0 = channel.scatter_range(center);
        let [a, b] = self.offsets;
        let ys = [
            channel.scatter_range(&(center + a)),
            channel.scatter_range(&(center - a)),
            channel.scatter_range(&(center + b)),
            channel.scatter_range(&(center - b)),
        ];
        let mean = w.mean_center * y0 + w.outer * ys.iter().sum::<f64>();
        let var = w.cov_center * (y0 - mean).powi(2)
            + w.outer * ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
        var.max(0.0)
    }
}

/// Variance in the range domain of scatter offsets `N(0, extent)` around
/// `center`, propagated with sigma points.
pub fn ut_scatter_variance(center: &Vec2, extent: &Mat2, channel: &Channel, ut: &UtConfig) -> f64 {
    SigmaPoints::new(extent, ut).range_variance(center, channel)
}

pub fn gaussian_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
}

pub fn gaussian_ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / variance - 0.5 * variance.ln() - LN_SQRT_2PI
}

/// Direct-path likelihood of an active measurement.
pub fn los_lhf(z: &Measurement, state: &AgentState, anchor: &Anchor, noise: &NoiseModel) -> f64 {
    let range = (state.position - anchor.position).norm();
    gaussian_pdf(z.distance, range, noise.distance_variance(z.amplitude))
}

pub fn active_scatter_lhf(
    z: &Measurement,
    state: &AgentState,
    extent: &Mat2,
    anchor: &Anchor,
    noise: &NoiseModel,
    ut: &UtConfig,
) -> f64 {
    let center = state.body_center();
    let channel = Channel::Active {
        anchor: anchor.position,
    };
    let spread = ut_scatter_variance(&center, extent, &channel, ut);
    gaussian_pdf(
        z.distance,
        channel.scatter_range(&center),
        noise.distance_variance(z.amplitude) + spread,
    )
}

pub fn passive_scatter_lhf(
    z: &Measurement,
    state: &AgentState,
    extent: &Mat2,
    tx: &Anchor,
    rx: &Anchor,
    noise: &NoiseModel,
    ut: &UtConfig,
) -> f64 {
    let center = state.body_center();
    let channel = Channel::Passive {
        tx: tx.position,
        rx: rx.position,
    };
    let spread = ut_scatter_variance(&center, extent, &channel, ut);
    gaussian_pdf(
        z.distance,
        channel.scatter_range(&center),
        noise.distance_variance(z.amplitude) + spread,
    )
}

/// Active measurement model: direct path plus body scattering.
pub fn active_model(
    z: &Measurement,
    state: &AgentState,
    extent: &Mat2,
    anchor: &Anchor,
    noise: &NoiseModel,
    ut: &UtConfig,
) -> f64 {
    los_lhf(z, state, anchor, noise) + active_scatter_lhf(z, state, extent, anchor, noise, ut)
}

/// Poisson rates of object-originated and clutter measurements, and the
/// clutter density over distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationParams {
    pub mu_meas: f64,
    pub mu_clutter: f64,
    pub clutter_density: f64,
}

impl AssociationParams {
    pub fn new(mu_meas: f64, mu_clutter: f64, clutter_density: f64) -> Result<Self> {
        for (key, v) in [("mu_meas", mu_meas), ("mu_clutter", mu_clutter)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be nonnegative"));
            }
        }
        if !(clutter_density > 0.0 && clutter_density.is_finite()) {
            return Err(Error::invalid("clutter_density", "must be positive"));
        }
        Ok(Self {
            mu_meas,
            mu_clutter,
            clutter_density,
        })
    }

    /// Clutter uniform over `[0, d_max]`.
    pub fn uniform(mu_meas: f64, mu_clutter: f64, d_max: f64) -> Result<Self> {
        if !(d_max > 0.0) {
            return Err(Error::invalid("d_max", "must be positive"));
        }
        Self::new(mu_meas, mu_clutter, 1.0 / d_max)
    }

    /// `mu_m / (mu_c f_c)`; infinite without clutter.
    pub fn object_to_clutter(&self) -> f64 {
        self.mu_meas / (self.mu_clutter * self.clutter_density)
    }

    pub fn ln_object_to_clutter(&self) -> f64 {
        self.mu_meas.ln() - self.mu_clutter.ln() - self.clutter_density.ln()
    }
}

/// Value of a single binary association variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Association {
    Clutter,
    Object,
}

/// Estimator variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Active only; at most one direct-path measurement per anchor.
    APda,
    /// Active only; direct path and body scatter, many per anchor.
    AEopda,
    /// Active and passive, extended-object association.
    ApEopda,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::APda, Mode::AEopda, Mode::ApEopda];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::APda => "a-pda",
            Mode::AEopda => "a-eopda",
            Mode::ApEopda => "ap-eopda",
        }
    }

    pub fn uses_extent(&self) -> bool {
        !matches!(self, Mode::APda)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid("modes", alloc::format!("unknown mode `{s}`")))
    }
}

/// Everything needed to weigh a state hypothesis against one step of
/// measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodModel {
    pub anchors: Vec<Anchor>,
    pub noise: NoiseModel,
    pub ut: UtConfig,
    pub assoc: AssociationParams,
    /// Direct-path detection probability used by [`Mode::APda`].
    pub los_detection_prob: f64,
}

impl LikelihoodModel {
    pub fn anchor(&self, id: AnchorId) -> Result<&Anchor> {
        self.anchors
            .iter()
            .find(|a| a.id == id)
            .ok_or(Error::UnknownAnchor(id.0))
    }

    /// Channel geometry of a measurement.
    pub fn channel(&self, z: &Measurement) -> Result<Channel> {
        let rx = self.anchor(z.rx)?.position;
        Ok(match z.tx {
            Transmitter::Agent => Channel::Active { anchor: rx },
            Transmitter::Anchor(tx) => Channel::Passive {
                tx: self.anchor(tx)?.position,
                rx,
            },
        })
    }

    /// Object likelihood `f_A` for active or `f_P` for passive measurements.
    pub fn object_density(
        &self,
        z: &Measurement,
        state: &AgentState,
        extent: &Mat2,
    ) -> Result<f64> {
        let rx = self.anchor(z.rx)?;
        Ok(match z.tx {
            Transmitter::Agent => active_model(z, state, extent, rx, &self.noise, &self.ut),
            Transmitter::Anchor(tx) => passive_scatter_lhf(
                z,
                state,
                extent,
                self.anchor(tx)?,
                rx,
                &self.noise,
                &self.ut,
            ),
        })
    }

    pub fn pseudo_likelihood(
        &self,
        z: &Measurement,
        state: &AgentState,
        extent: &Mat2,
        association: Association,
    ) -> Result<f64> {
        match association {
            Association::Clutter => Ok(1.0),
            Association::Object => {
                Ok(self.assoc.object_to_clutter() * self.object_density(z, state, extent)?)
            }
        }
    }

    /// Association-marginalized likelihood factor of one step.
    pub fn step_likelihood(
        &self,
        state: &AgentState,
        extent: &Mat2,
        set: &MeasurementSet,
        mode: Mode,
    ) -> Result<f64> {
        Ok(self.ln_step_likelihood(state, extent, set, mode)?.exp())
    }

    pub fn ln_step_likelihood(
        &self,
        state: &AgentState,
        extent: &Mat2,
        set: &MeasurementSet,
        mode: Mode,
    ) -> Result<f64> {
        Ok(self.resolve(set)?.ln_likelihood(self, state, extent, mode))
    }

    /// Looks up anchor positions and measurement variances once per step.
    pub fn resolve(&self, set: &MeasurementSet) -> Result<ResolvedStep> {
        let mut channels = Vec::with_capacity(set.active.len() + set.passive.len());
        for ch in &set.active {
            let anchor = self.anchor(ch.rx)?.position;
            channels.push(self.resolve_channel(Channel::Active { anchor }, &ch.measurements)?);
        }
        for ch in &set.passive {
            let tx = self.anchor(ch.tx)?.position;
            let rx = self.anchor(ch.rx)?.position;
            channels.push(self.resolve_channel(Channel::Passive { tx, rx }, &ch.measurements)?);
        }
        Ok(ResolvedStep { channels })
    }

    fn resolve_channel(
        &self,
        channel: Channel,
        measurements: &[Measurement],
    ) -> Result<ResolvedChannel> {
        let mut ms = Vec::with_capacity(measurements.len());
        for z in measurements {
            if !(z.amplitude > 0.0) {
                return Err(Error::NonPositiveAmplitude(z.amplitude));
            }
            ms.push((z.distance, self.noise.distance_variance(z.amplitude)));
        }
        Ok(ResolvedChannel {
            channel,
            measurements: ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ResolvedChannel {
    channel: Channel,
    /// `(distance, sigma_d^2(u))` per measurement.
    measurements: Vec<(f64, f64)>,
}

/// One step of measurements with anchors and noise variances looked up.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedStep {
    channels: Vec<ResolvedChannel>,
}

impl ResolvedStep {
    pub fn is_empty(&self) -> bool {
        self.channels.iter().all(|c| c.measurements.is_empty())
    }

    /// Log of the association-marginalized likelihood of `state`.
    ///
    /// Exact while both Poisson rates are positive. With a zero clutter rate
    /// the likelihood carries an infinite state-independent factor, which is
    /// dropped; with a zero object rate every factor is 1.
    pub fn ln_likelihood(
        &self,
        model: &LikelihoodModel,
        state: &AgentState,
        extent: &Mat2,
        mode: Mode,
    ) -> f64 {
        let center = state.body_center();
        let ln_ratio = model.assoc.ln_object_to_clutter();
        if ln_ratio == f64::NEG_INFINITY && mode != Mode::APda {
            return 0.0;
        }
        // ln(1 + r f) = ln r + ln(1/r + f), without the ln r when r is infinite
        let (shift, floor) = if ln_ratio.is_finite() {
            (ln_ratio, -ln_ratio)
        } else {
            (0.0, f64::NEG_INFINITY)
        };
        let sigma = if mode.uses_extent() {
            Some(SigmaPoints::new(extent, &model.ut))
        } else {
            None
        };
        let mut total = 0.0;
        for ch in &self.channels {
            if ch.measurements.is_empty() {
                continue;
            }
            match (ch.channel, mode) {
                (Channel::Active { anchor }, Mode::APda) => {
                    total +=
                        ln_pda_factor(model, (state.position - anchor).norm(), &ch.measurements);
                }
                (Channel::Passive { .. }, Mode::APda | Mode::AEopda) => {}
                (Channel::Active { anchor }, _) => {
                    let los = (state.position - anchor).norm();
                    let body = ch.channel.scatter_range(&center);
                    let spread = sigma
                        .as_ref()
                        .map_or(0.0, |s| s.range_variance(&center, &ch.channel));
                    for &(d, var) in &ch.measurements {
                        let ln_f = ln_add(
                            gaussian_ln_pdf(d, los, var),
                            gaussian_ln_pdf(d, body, var + spread),
                        );
                        total += shift + ln_add(floor, ln_f);
                    }
                }
                (Channel::Passive { .. }, Mode::ApEopda) => {
                    let body = ch.channel.scatter_range(&center);
                    let spread = sigma
                        .as_ref()
                        .map_or(0.0, |s| s.range_variance(&center, &ch.channel));
                    for &(d, var) in &ch.measurements {
                        total += shift + ln_add(floor, gaussian_ln_pdf(d, body, var + spread));
                    }
                }
            }
        }
        total
    }
}

/// `ln((1 - P_d) + P_d sum_l f_LOS(z_l) / (mu_c f_c))`, dropping the
/// infinite constant when there is no clutter.
fn ln_pda_factor(model: &LikelihoodModel, los: f64, measurements: &[(f64, f64)]) -> f64 {
    let pd = model.los_detection_prob;
    if pd <= 0.0 {
        return 0.0;
    }
    let clutter = model.assoc.mu_clutter * model.assoc.clutter_density;
    let ln_sum = measurements
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &(d, var)| {
            ln_add(acc, gaussian_ln_pdf(d, los, var))
        });
    if clutter > 0.0 {
        let ln_scale = pd.ln() - clutter.ln();
        ln_scale + ln_add((1.0 - pd).ln() - ln_scale, ln_sum)
    } else {
        ln_sum
    }
}

/// `ln(e^a + e^b)`.
fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
