use eotrack_core::likelihood::{
    ut_scatter_variance, Association, AssociationParams, Channel, LikelihoodModel, Mode,
    NoiseModel, UtConfig,
};
use eotrack_core::model::{
    los_distance, orientation_from_velocity, oriented_extent, passive_scatter_distance,
    rotation_matrix, ActiveChannel, PassiveChannel, Transmitter,
};
use eotrack_core::tracker::{Jitter, ParticleEnsemble, StateLikelihood};
use eotrack_core::{AgentState, Anchor, AnchorId, Mat2, Measurement, MeasurementSet, Vec2};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coord() -> impl Strategy<Value = f64> {
    -20.0..20.0f64
}

fn point() -> impl Strategy<Value = Vec2> {
    (coord(), coord()).prop_map(|(x, y)| Vec2::new(x, y))
}

fn psd() -> impl Strategy<Value = Mat2> {
    (0.0..1.0f64, 0.0..1.0f64, -3.2..3.2f64).prop_map(|(a, b, phi)| {
        let r = rotation_matrix(phi);
        r * Mat2::new(a * a, 0.0, 0.0, b * b) * r.transpose()
    })
}

fn sorted_eigenvalues(m: &Mat2) -> [f64; 2] {
    let e = SymmetricEigen::new(*m).eigenvalues;
    [e[0].min(e[1]), e[0].max(e[1])]
}

fn model(anchors: Vec<Anchor>) -> LikelihoodModel {
    LikelihoodModel {
        anchors,
        noise: NoiseModel::from_pulse(0.6, 5e8).unwrap(),
        ut: UtConfig::default(),
        assoc: AssociationParams::uniform(5.0, 10.0, 30.0).unwrap(),
        los_detection_prob: 0.95,
    }
}

fn square() -> Vec<Anchor> {
    vec![
        Anchor::new(1, 0.0, 0.0),
        Anchor::new(2, 6.0, 0.0),
        Anchor::new(3, 0.0, 6.0),
        Anchor::new(4, 6.0, 6.0),
    ]
}

/// Measurements near the body so that every factor is far from 1.
fn measurement_set() -> impl Strategy<Value = (AgentState, Vec<(usize, bool, f64, f64)>)> {
    let state =
        (0.5..5.5f64, 0.5..5.5f64, -0.4..0.4f64, -0.4..0.4f64).prop_map(|(x, y, bx, by)| {
            AgentState::new(Vec2::new(x, y), Vec2::new(0.5, 0.1), Vec2::new(bx, by))
        });
    // (anchor index, passive, distance offset, amplitude)
    let meas = prop::collection::vec(
        (0..4usize, any::<bool>(), -0.3..0.3f64, 2.0..50.0f64),
        0..=12,
    );
    (state, meas)
}

fn build_set(
    model: &LikelihoodModel,
    state: &AgentState,
    raw: &[(usize, bool, f64, f64)],
) -> MeasurementSet {
    let tx = AnchorId(4);
    let mut set = MeasurementSet::empty(1);
    for &(k, passive, offset, amplitude) in raw {
        let rx = model.anchors[k];
        let z = if passive {
            let c = state.body_center();
            let range = (c - model.anchors[3].position).norm() + (c - rx.position).norm();
            Measurement {
                distance: range + offset,
                amplitude,
                rx: rx.id,
                tx: Transmitter::Anchor(tx),
            }
        } else {
            Measurement {
                distance: los_distance(&state.position, &rx) + offset,
                amplitude,
                rx: rx.id,
                tx: Transmitter::Agent,
            }
        };
        if passive {
            match set.passive.iter_mut().find(|c| c.rx == rx.id) {
                Some(c) => c.measurements.push(z),
                None => set.passive.push(PassiveChannel {
                    tx,
                    rx: rx.id,
                    measurements: vec![z],
                }),
            }
        } else {
            match set.active.iter_mut().find(|c| c.rx == rx.id) {
                Some(c) => c.measurements.push(z),
                None => set.active.push(ActiveChannel {
                    rx: rx.id,
                    measurements: vec![z],
                }),
            }
        }
    }
    set
}

/// Sum over every association vector of the product of pseudo-likelihoods.
fn brute_force(
    model: &LikelihoodModel,
    state: &AgentState,
    extent: &Mat2,
    zs: &[Measurement],
) -> f64 {
    let m = zs.len();
    (0..1u32 << m)
        .map(|mask| {
            zs.iter()
                .enumerate()
                .map(|(l, z)| {
                    let a = if mask >> l & 1 == 1 {
                        Association::Object
                    } else {
                        Association::Clutter
                    };
                    model.pseudo_likelihood(z, state, extent, a).unwrap()
                })
                .product::<f64>()
        })
        .sum()
}

struct Quadratic {
    scale: f64,
    offset: f64,
}

impl StateLikelihood for Quadratic {
    fn ln_likelihood(&self, s: &AgentState, _: f64) -> f64 {
        -self.scale * (s.position - Vec2::new(1.0, 2.0)).norm_squared() + self.offset
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rotation_preserves_extent_eigenvalues(m in psd(), theta in -10.0..10.0f64) {
        let before = sorted_eigenvalues(&m);
        let after = sorted_eigenvalues(&oriented_extent(&m, theta));
        for (a, b) in before.iter().zip(after) {
            prop_assert!((a - b).abs() <= 1e-12 * before[1].max(1e-300) + 1e-15);
        }
        let x = oriented_extent(&m, theta);
        prop_assert_eq!(x[(0, 1)], x[(1, 0)]);
    }

    #[test]
    fn bistatic_range_exceeds_baseline(p in point(), b in point(), q in point(), tx in point(), rx in point()) {
        let (t, r) = (Anchor::new(1, tx.x, tx.y), Anchor::new(2, rx.x, rx.y));
        let d = passive_scatter_distance(&p, &(b * 0.05), &(q * 0.05), &t, &r);
        prop_assert!(d >= (tx - rx).norm() * (1.0 - 1e-15));
    }

    #[test]
    fn direct_range_is_symmetric(p in point(), a in point()) {
        let forward = los_distance(&p, &Anchor::new(1, a.x, a.y));
        let backward = los_distance(&a, &Anchor::new(1, p.x, p.y));
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn heading_ignores_speed(v in point(), k in 1e-3..1e3f64) {
        prop_assume!(v.norm() > 1e-6);
        let a = orientation_from_velocity(&v).unwrap();
        let b = orientation_from_velocity(&(v * k)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn spread_is_translation_invariant_and_reciprocal(
        m in psd(),
        center in point(),
        a in point(),
        rx in point(),
        shift in point(),
    ) {
        prop_assume!((center - a).norm() > 0.5 && (center - rx).norm() > 0.5);
        let ut = UtConfig::default();
        for (ch, moved) in [
            (Channel::Active { anchor: a }, Channel::Active { anchor: a + shift }),
            (Channel::Passive { tx: a, rx }, Channel::Passive { tx: a + shift, rx: rx + shift }),
        ] {
            let v = ut_scatter_variance(&center, &m, &ch, &ut);
            let w = ut_scatter_variance(&(center + shift), &m, &moved, &ut);
            prop_assert!(v >= 0.0);
            prop_assert!((v - w).abs() <= 1e-9 * v.max(1e-6), "{v} vs {w}");
        }
        let forward = ut_scatter_variance(&center, &m, &Channel::Passive { tx: a, rx }, &ut);
        let backward = ut_scatter_variance(&center, &m, &Channel::Passive { tx: rx, rx: a }, &ut);
        prop_assert!((forward - backward).abs() <= 1e-12 * forward.max(1e-12));
    }

    #[test]
    fn marginal_matches_enumeration((state, raw) in measurement_set(), theta in -3.2..3.2f64) {
        let model = model(square());
        let set = build_set(&model, &state, &raw);
        let extent = oriented_extent(&Mat2::new(0.0225, 0.0, 0.0, 0.01), theta);
        for mode in [Mode::AEopda, Mode::ApEopda] {
            let zs: Vec<Measurement> = set.iter().filter(|z| mode == Mode::ApEopda || z.is_active()).copied().collect();
            let exact = brute_force(&model, &state, &extent, &zs);
            let fast = model.step_likelihood(&state, &extent, &set, mode).unwrap();
            prop_assert!((fast - exact).abs() <= 1e-9 * exact, "{mode}: {fast} vs {exact}");
        }
    }

    #[test]
    fn weights_ignore_constant_factor(seed in any::<u64>(), offset in -500.0..500.0f64, scale in 0.0..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<AgentState> = (0..64)
            .map(|_| AgentState::new(Vec2::new(rng.random(), rng.random::<f64>() * 3.0), Vec2::new(0.5, 0.0), Vec2::zeros()))
            .collect();
        let mut a = ParticleEnsemble::from_states(states.clone(), 0.0).unwrap();
        let mut b = ParticleEnsemble::from_states(states, 0.0).unwrap();
        a.update(&Quadratic { scale, offset: 0.0 }, 1e-3, 1).unwrap();
        b.update(&Quadratic { scale, offset }, 1e-3, 1).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn ess_within_bounds(seed in any::<u64>(), n in 1..300usize, scale in 0.0..1e4f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<AgentState> = (0..n)
            .map(|_| AgentState::new(Vec2::new(rng.random(), rng.random()), Vec2::new(0.5, 0.0), Vec2::zeros()))
            .collect();
        let mut ens = ParticleEnsemble::from_states(states, 0.0).unwrap();
        ens.update(&Quadratic { scale, offset: 0.0 }, 1e-3, 1).unwrap();
        let ess = ens.effective_sample_size();
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= n as f64 * (1.0 + 1e-9), "{ess}");
        let total: f64 = ens.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        ens.resample_if_needed(0.5, &Jitter::NONE, &mut rng);
        prop_assert_eq!(ens.len(), n);
    }
}
