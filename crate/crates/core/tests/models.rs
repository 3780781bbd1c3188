use proptest::prelude::*;
use stabex_core::dynamics::{integrate_with, Controls, Flow, SystemModel};
use stabex_core::energy::{EnergyFunction, MultiMachineEnergy, SmibEnergy};
use stabex_core::equilibria::EquilibriumPoint;
use stabex_core::models::scenario::{ieee39_prepared, IEEE39_FAULT_BUSES};
use stabex_core::models::{FaultScenario, Losses, MachineSystem, ReducedMachineModel, Smib, ThreeMachine};
use std::f64::consts::TAU;

/// Undamped lossless 39-bus post-fault model.
fn conservative_39() -> ReducedMachineModel {
    ieee39_prepared().reduce(None, Losses::DropTransfer).unwrap().with_damping_ratio(0.0)
}

/// The SEP of `model` shifted by `kick` inside the COI subspace.
fn kicked(model: &ReducedMachineModel, kick: &[f64]) -> Vec<f64> {
    let q = model.invariant_basis().unwrap();
    let v = &q * &q.transpose() * nalgebra::DVector::from_column_slice(kick);
    model.sep_state().iter().zip(v.iter()).map(|(a, b)| a + b).collect()
}

fn coi_momentum(model: &ReducedMachineModel, x: &[f64]) -> f64 {
    let n = model.machines();
    x[n..].iter().zip(model.inertia()).map(|(w, m)| m * w).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn three_machine_field_is_periodic(a in -6.0..6.0f64, b in -6.0..6.0f64, i in -2i32..=2, j in -2i32..=2) {
        let f = ThreeMachine.field(&[a, b]);
        let g = ThreeMachine.field(&[a + i as f64 * TAU, b + j as f64 * TAU]);
        prop_assert!((f[0] - g[0]).abs() < 1e-12 && (f[1] - g[1]).abs() < 1e-12);
    }

    #[test]
    fn smib_field_is_periodic_in_the_angle(d in -4.0..4.0f64, w in -10.0..10.0f64, k in -2i32..=2) {
        let sys = MachineSystem::Smib(Smib { damping: 0.05, ..Smib::default() });
        let f = sys.field(&[d, w]);
        let g = sys.field(&[d + k as f64 * TAU, w]);
        prop_assert!((f[0] - g[0]).abs() < 1e-12 && (f[1] - g[1]).abs() < 1e-12);
    }
}

#[test]
fn coi_momentum_and_energy_are_conserved() {
    let model = conservative_39();
    let energy = MultiMachineEnergy::new(&model);
    let n = model.machines();
    let kick: Vec<f64> = (0..2 * n).map(|i| 0.05 * (((i * 37) % 11) as f64 - 5.0) / 5.0).collect();
    let x0 = kicked(&model, &kick);
    let v0 = energy.value(&x0);
    assert!(coi_momentum(&model, &x0).abs() < 1e-12);
    let mut worst_p = 0.0f64;
    let mut worst_v = 0.0f64;
    let controls = Controls::default().with_tolerances(1e-12, 1e-14);
    integrate_with(&model, &x0, 10.0, &controls, |_, x| {
        worst_p = worst_p.max(coi_momentum(&model, x).abs());
        worst_v = worst_v.max((energy.value(x) - v0).abs());
        Flow::Continue
    })
    .unwrap();
    assert!(worst_p < 1e-8, "COI momentum {worst_p:e}");
    assert!(worst_v < 1e-6, "energy drift {worst_v:e}");
}

#[test]
fn smib_energy_is_conserved_without_damping() {
    let p = Smib::default();
    let sys = MachineSystem::Smib(p);
    let energy = SmibEnergy::new(p);
    let x0 = [p.stable_angle() + 0.6, 1.5];
    let v0 = energy.value(&x0);
    let mut worst = 0.0f64;
    let controls = Controls::default().with_tolerances(1e-12, 1e-14);
    integrate_with(&sys, &x0, 10.0, &controls, |_, x| {
        worst = worst.max((energy.value(x) - v0).abs());
        Flow::Continue
    })
    .unwrap();
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn every_bundled_fault_starts_at_an_asep() {
    let net = ieee39_prepared();
    for losses in [Losses::Keep, Losses::DropTransfer] {
        for bus in IEEE39_FAULT_BUSES {
            let sc = FaultScenario::network_fault(&net, bus, losses).unwrap();
            let post = sc.post_fault.as_model();
            let r = post.field(&sc.x0_pre).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(r <= 1e-10, "bus {bus}: residual {r:e}");
            let p = EquilibriumPoint::classify(post, sc.x0_pre.clone()).unwrap();
            assert!(p.is_asep(), "bus {bus}: {}", p.kind);
            // The fault changes the dynamics at the pre-fault point.
            assert!(sc.fault_on.field(&sc.x0_pre).iter().any(|v| v.abs() > 1e-3));
        }
    }
}

#[test]
fn dropping_transfer_conductance_gives_a_lossless_model() {
    let net = ieee39_prepared();
    assert!(net.reduce(None, Losses::DropTransfer).unwrap().is_lossless());
    assert!(!net.reduce(None, Losses::Keep).unwrap().is_lossless());
    assert!(conservative_39().is_conservative());
}
