use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stabex_core::dynamics::SystemModel;
use stabex_core::energy::{EnergyFunction, ThreeMachineEnergy};
use stabex_core::equilibria::{
    closest_uep, enumerate_equilibria, find_equilibrium, mark_boundary, EquilibriumKind, EquilibriumPoint, ShootingOptions,
};
use stabex_core::grid::Bounds;
use stabex_core::models::{Benchmark3d, Smib, ThreeMachine};
use std::sync::OnceLock;

struct Found {
    asep: EquilibriumPoint,
    points: Vec<EquilibriumPoint>,
}

fn three_machine() -> &'static Found {
    static F: OnceLock<Found> = OnceLock::new();
    F.get_or_init(|| {
        let (lo, hi) = ThreeMachine::area_of_interest();
        let mut found = enumerate_equilibria(&ThreeMachine, &Bounds::new(lo.to_vec(), hi.to_vec()).unwrap(), 32).unwrap();
        let asep = find_equilibrium(&ThreeMachine, &[0.0, 0.0], 1e-12).unwrap();
        mark_boundary(&ThreeMachine, &mut found.points, &asep, &ShootingOptions::default());
        Found { asep, points: found.points }
    })
}

fn unstable_count(j: &DMatrix<f64>) -> usize {
    j.complex_eigenvalues().iter().filter(|l| l.re > 0.0).count()
}

#[test]
fn enumerated_points_are_accurate_and_hyperbolic() {
    let f = three_machine();
    assert!(f.points.len() >= 9);
    for p in &f.points {
        assert!(p.residual < 1e-10, "{:?}", p.state);
        assert!(p.hyperbolicity_margin() > 1e-8);
        assert_eq!(p.kind.unstable_dim(), unstable_count(&ThreeMachine.jacobian(&p.state)));
    }
    // Periodic copies of the ASEP lie inside the area too.
    assert!(f.points.iter().any(|p| p.is_asep() && (p.state[0] - f.asep.state[0]).abs() + (p.state[1] - f.asep.state[1]).abs() < 1e-8));
}

#[test]
fn classification_survives_tiny_jacobian_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in &three_machine().points {
        let j = ThreeMachine.jacobian(&p.state);
        for _ in 0..20 {
            let noise = DMatrix::from_fn(2, 2, |_, _| rand::Rng::gen_range(&mut rng, -1e-9..1e-9));
            assert_eq!(unstable_count(&(&j + noise)), p.kind.unstable_dim());
        }
    }
}

#[test]
fn benchmark_and_smib_equilibria_classify() {
    let asep = find_equilibrium(&Benchmark3d, &Benchmark3d::ROUNDED_ASEP, 1e-12).unwrap();
    assert!(asep.is_asep());
    // Without damping the SMIB equilibria are centres.
    let p = Smib { damping: 0.1, ..Smib::default() };
    let sys = stabex_core::models::MachineSystem::Smib(p);
    let sep = find_equilibrium(&sys, &[p.stable_angle(), 0.0], 1e-12).unwrap();
    let uep = find_equilibrium(&sys, &[p.unstable_angle(), 0.0], 1e-12).unwrap();
    assert!(sep.is_asep());
    assert_eq!(uep.kind, EquilibriumKind::Uep(1));
}

/// The CUEP of the fault example sits one period below the closest UEP in
/// `x2`; the slanted potential gives the lower copy a higher energy.
#[test]
fn rounded_ueps_refine_to_one_point_modulo_the_period() {
    let cl = closest_uep(&ThreeMachineEnergy, &three_machine().asep, &three_machine().points).unwrap();
    let near = find_equilibrium(&ThreeMachine, &[0.04667, 3.11489], 1e-12).unwrap();
    let cuep = find_equilibrium(&ThreeMachine, &[0.0467, -3.1683], 1e-12).unwrap();
    assert!((near.state[0] - cl.state[0]).abs() < 1e-9 && (near.state[1] - cl.state[1]).abs() < 1e-9);
    assert_eq!(cuep.kind, EquilibriumKind::Uep(1));
    assert!((cuep.state[0] - near.state[0]).abs() < 1e-9);
    assert!((near.state[1] - cuep.state[1] - std::f64::consts::TAU).abs() < 1e-9);
    assert!(ThreeMachineEnergy.value(&cuep.state) > ThreeMachineEnergy.value(&near.state));
    // The other reading is not an equilibrium.
    assert!(ThreeMachine.field(&[0.4667, 3.1149]).iter().any(|v| v.abs() > 0.1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn closest_uep_ignores_candidate_order(seed in any::<u64>()) {
        let f = three_machine();
        let want = closest_uep(&ThreeMachineEnergy, &f.asep, &f.points).unwrap();
        let mut shuffled = f.points.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let got = closest_uep(&ThreeMachineEnergy, &f.asep, &shuffled).unwrap();
        prop_assert_eq!(got.state, want.state);
    }
}
