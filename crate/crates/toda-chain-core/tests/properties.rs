//! Cross-module invariants on random data.

use proptest::prelude::*;

use toda_chain_core::dynamics::{controlled_field, drift_field, total_energy, ControlSignal};
use toda_chain_core::lie::{
    chain_generators, closed_form_ad, leading_coefficient, rank_profile, DistributionKind,
};
use toda_chain_core::linearize::{flat_coordinates, invert_chart};
use toda_chain_core::sample;
use toda_chain_core::state::Channel;
use toda_chain_core::{ChainState, PotentialModel};

fn small_state(n: usize) -> impl Strategy<Value = ChainState> {
    (
        proptest::collection::vec(-2.0..2.0f64, n),
        proptest::collection::vec(-2.0..2.0f64, n),
    )
        .prop_map(|(q, p)| ChainState::new(q, p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn controlled_field_is_affine_in_the_controls(
        x in small_state(3),
        u in -3.0..3.0f64,
        v in -3.0..3.0f64,
    ) {
        let pot = PotentialModel::Toda;
        let base = drift_field(&x, &pot).unwrap();
        let forced = controlled_field(&x, &pot, u, v, ).unwrap();
        for i in 0..6 {
            let expect = base[i]
                + if i == 3 { u } else { 0.0 }
                + if i == 5 { v } else { 0.0 };
            prop_assert!((forced[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_rate_telescopes(x in small_state(4)) {
        let f = drift_field(&x, &PotentialModel::Toda).unwrap();
        let sum: f64 = f[4..].iter().sum();
        prop_assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn energy_is_kinetic_plus_potential(x in small_state(3)) {
        let pot = PotentialModel::Toda;
        let kinetic: f64 = x.p.iter().map(|p| 0.5 * p * p).sum();
        let interaction: f64 = (0..2).map(|j| pot.energy(x.q[j] - x.q[j + 1])).sum();
        let h = total_energy(&x, &pot).unwrap();
        prop_assert!((h - (kinetic + interaction)).abs() <= 1e-12 * (1.0 + h.abs()));
    }

    #[test]
    fn piecewise_signal_respects_declared_bounds(
        s1 in 0.1..0.9f64,
        gap in 0.05..0.5f64,
    ) {
        let sig = ControlSignal::piecewise(
            vec![s1, s1 + gap],
            vec![1.0, -1.0, 1.0],
            vec![0.0, -1.0, 0.0],
        ).unwrap();
        let bounds = toda_chain_core::dynamics::ControlBounds::rectangle(1.0);
        prop_assert!(sig.within_bounds(&bounds, 0.0));
        for t in [0.0, s1 - 1e-6, s1 + 1e-6, s1 + gap + 1e-6, 2.0] {
            let (u, v) = sig.value(t);
            prop_assert!(bounds.contains(u, v, 0.0));
        }
    }
}

/// Lemma-level constancy: the rank profiles do not depend on the sample
/// point, and the zero-time span is full at every point.
#[test]
fn rank_profiles_are_constant_across_random_states() {
    let pot = PotentialModel::Toda;
    for n in [2usize, 3] {
        let mut rng = sample::rng(100 + n as u64);
        let mut reference = None;
        for _ in 0..25 {
            let x = sample::gaussian_state(n, 1.0, &mut rng);
            let lam = rank_profile(&x, &pot, DistributionKind::ControlU, 1e-8).unwrap();
            let xi = rank_profile(&x, &pot, DistributionKind::ControlV, 1e-8).unwrap();
            let joint = rank_profile(&x, &pot, DistributionKind::Joint, 1e-8).unwrap();
            assert_eq!(*joint.last().unwrap(), 2 * n, "zero-time span not full");
            let triple = (lam, xi, joint);
            match &reference {
                None => reference = Some(triple),
                Some(r) => assert_eq!(r, &triple, "profile changed between states (n={n})"),
            }
        }
    }
}

/// The dual-number bracket chain and the closed forms agree at random
/// states for every order and both channels (the dual route is itself
/// validated against finite differences in the unit tests).
#[test]
fn closed_forms_match_brackets_up_to_n5() {
    let pot = PotentialModel::Toda;
    for n in [2usize, 3, 5] {
        let mut rng = sample::rng(17 + n as u64);
        for _ in 0..4 {
            let x = sample::gaussian_state(n, 0.8, &mut rng);
            for channel in [Channel::U, Channel::V] {
                let chain = chain_generators(&x, &pot, channel, 2 * n, None).unwrap();
                for k in 1..=n {
                    let pair = closed_form_ad(k, channel, &x, &pot).unwrap();
                    let (lead, _) = leading_coefficient(&chain[2 * k - 2], &pair.momentum, n);
                    let denom = 1.0 + pair.momentum.coefficient.abs();
                    assert!(
                        (lead - pair.momentum.coefficient).abs() / denom < 1e-6,
                        "momentum member mismatch n={n} k={k}"
                    );
                }
            }
        }
    }
}

/// Flat coordinates followed by Newton inversion reproduce the state.
#[test]
fn chart_round_trip_to_1e9() {
    let pot = PotentialModel::Toda;
    for n in 2..=5usize {
        let mut rng = sample::rng(40 + n as u64);
        for _ in 0..6 {
            let x = sample::gaussian_state(n, 0.7, &mut rng);
            let coords = flat_coordinates(&x, &pot).unwrap();
            let mut seed = x.clone();
            for p in seed.p.iter_mut() {
                *p += 0.05;
            }
            let back = invert_chart(&coords, &seed, &pot, 1e-12).unwrap();
            let err: f64 = back
                .to_flat()
                .iter()
                .zip(x.to_flat())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-9, "round trip error {err} at n={n}");
        }
    }
}
