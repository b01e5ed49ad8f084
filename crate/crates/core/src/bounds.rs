//! Posterior Cramér–Rao bound on the agent position, assuming the direct path
//! to every anchor is available at every step.
//!
//! The bound covers the kinematic substate `[p; v]` only. Direct-path ranges
//! do not depend on the body bias, so the bias block would decouple.

use alloc::vec::Vec;

use nalgebra::Matrix4;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::likelihood::NoiseModel;
use crate::model::{Anchor, Vec2};
use crate::scenario::{AmplitudeModel, GroundTruth};
use crate::tracker::MotionModel;

pub type Info4 = Matrix4<f64>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundTrace {
    /// `sqrt(tr(P_pos))` per step, meters.
    pub position_bound: Vec<f64>,
    /// Filtering information matrix `J_n` per step.
    pub information: Vec<Info4>,
}

/// Fisher information of the direct-path ranges at `position`, embedded in
/// the position block. Each anchor contributes `h h^T / sigma_d^2`, with `h`
/// the unit vector from the anchor to the agent.
pub fn los_information(
    position: &Vec2,
    anchors: &[Anchor],
    noise: &NoiseModel,
    amplitude: &AmplitudeModel,
) -> Result<Info4> {
    let mut info = Info4::zeros();
    for a in anchors {
        let diff = position - a.position;
        let range = diff.norm();
        if !(range > 0.0) {
            return Err(Error::CoincidentAnchor(a.id.0));
        }
        let h = diff / range;
        let precision = 1.0 / noise.distance_variance(amplitude.los(range));
        let block = h * h.transpose() * precision;
        let mut pos = info.fixed_view_mut::<2, 2>(0, 0);
        pos += block;
    }
    Ok(info)
}

fn symmetrize(m: &Info4) -> Info4 {
    (m + m.transpose()) * 0.5
}

fn position_bound(info: &Info4, step: usize) -> Result<(f64, Info4)> {
    let cov = info
        .try_inverse()
        .ok_or(Error::SingularInformation { step })?;
    let tr = cov[(0, 0)] + cov[(1, 1)];
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::SingularInformation { step });
    }
    Ok((tr.sqrt(), cov))
}

/// `J_n = (Q + F J_{n-1}^{-1} F^T)^{-1} + J_meas(n)` for `n = 1..=steps`,
/// starting from the prior covariance of `[p; v]`.
pub fn pcrlb_recursion<F>(
    steps: usize,
    motion: &MotionModel,
    prior_covariance: &Info4,
    mut measurement_info: F,
) -> Result<BoundTrace>
where
    F: FnMut(usize) -> Result<Info4>,
{
    let f = motion.transition();
    let q = motion.process_covariance();
    let mut cov = symmetrize(prior_covariance);
    let mut out = BoundTrace::default();
    for n in 1..=steps {
        let predicted = symmetrize(&(q + f * cov * f.transpose()));
        let prior_info = predicted
            .try_inverse()
            .ok_or(Error::SingularInformation { step: n })?;
        let info = symmetrize(&(prior_info + measurement_info(n)?));
        let (bound, next_cov) = position_bound(&info, n)?;
        cov = symmetrize(&next_cov);
        out.position_bound.push(bound);
        out.information.push(info);
    }
    Ok(out)
}

/// Bound along a fixed true trajectory with all direct paths available.
pub fn pcrlb_los(
    truth: &GroundTruth,
    anchors: &[Anchor],
    noise: &NoiseModel,
    amplitude: &AmplitudeModel,
    motion: &MotionModel,
    prior_covariance: &Info4,
) -> Result<BoundTrace> {
    pcrlb_recursion(truth.len(), motion, prior_covariance, |n| {
        los_information(&truth.state(n).position, anchors, noise, amplitude)
    })
}

/// Kinematic prior covariance matching the tracker's diagonal prior.
pub fn kinematic_prior(position_std: f64, velocity_std: f64) -> Info4 {
    let (p, v) = (position_std * position_std, velocity_std * velocity_std);
    Info4::from_diagonal(&nalgebra::Vector4::new(p, p, v, v))
}

#[cfg(test)]
mod tests {
    extern crate std;

    use super::*;
    use crate::scenario::{Scenario, ScenarioConfig};
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;

    fn amp() -> AmplitudeModel {
        AmplitudeModel {
            ref_db: 40.0,
            beta_active_db: 0.0,
            beta_passive_db: 0.0,
            passive_tx_db: 0.0,
        }
    }

    fn noise() -> NoiseModel {
        NoiseModel::from_pulse(0.6, 5e8).unwrap()
    }

    fn square() -> std::vec::Vec<Anchor> {
        std::vec![
            Anchor::new(1, 0.0, 0.0),
            Anchor::new(2, 6.0, 0.0),
            Anchor::new(3, 0.0, 6.0),
            Anchor::new(4, 6.0, 6.0)
        ]
    }

    #[test]
    fn single_anchor_rank_one() {
        let info = los_information(&Vec2::new(2.0, 1.0), &square()[..1], &noise(), &amp()).unwrap();
        let block = info.fixed_view::<2, 2>(0, 0).into_owned();
        assert!(block.determinant().abs() < 1e-9 * block.norm_squared());
        assert!(block.norm() > 0.0);
        assert_eq!(
            info.fixed_view::<2, 2>(2, 2).into_owned(),
            nalgebra::Matrix2::zeros()
        );
    }

    #[test]
    fn center_of_square_is_isotropic() {
        let info = los_information(&Vec2::new(3.0, 3.0), &square(), &noise(), &amp()).unwrap();
        assert_relative_eq!(info[(0, 0)], info[(1, 1)], max_relative = 1e-12);
        assert!(info[(0, 1)].abs() < 1e-9 * info[(0, 0)]);
        assert!(matches!(
            los_information(&Vec2::new(6.0, 6.0), &square(), &noise(), &amp()),
            Err(Error::CoincidentAnchor(4))
        ));
    }

    #[test]
    fn no_measurements_bound_grows() {
        let motion = MotionModel::default();
        let trace = pcrlb_recursion(30, &motion, &kinematic_prior(0.3, 0.3), |_| {
            Ok(Info4::zeros())
        })
        .unwrap();
        assert!(trace.position_bound.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn bound_is_symmetric_psd_on_default_track() {
        let scenario = Scenario::new(ScenarioConfig::default()).unwrap();
        let motion = MotionModel::default();
        let trace = pcrlb_los(
            &scenario.truth,
            &scenario.config.anchors,
            &scenario.noise,
            &scenario.amplitude,
            &motion,
            &kinematic_prior(0.3, 0.3),
        )
        .unwrap();
        assert_eq!(trace.position_bound.len(), 190);
        for j in &trace.information {
            assert!((j - j.transpose()).norm() <= 1e-10 * j.norm());
            assert!(SymmetricEigen::new(*j)
                .eigenvalues
                .iter()
                .all(|&l| l >= 0.0));
        }
        // direct paths at millimeter accuracy
        assert!(trace.position_bound[50] < 0.01);
    }
}
