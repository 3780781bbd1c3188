use proptest::prelude::*;
use stabex_core::dynamics::SystemModel;
use stabex_core::energy::{EnergyFunction, LevelSet, MultiMachineEnergy, QuadraticLyapunov, SmibEnergy, ThreeMachineEnergy};
use stabex_core::equilibria::{closest_uep, enumerate_equilibria, find_equilibrium, mark_boundary, Boundary, ShootingOptions};
use stabex_core::grid::{Bounds, Grid};
use stabex_core::models::scenario::ieee39_prepared;
use stabex_core::models::{Losses, MachineSystem, ReducedMachineModel, Smib, ThreeMachine};
use std::sync::OnceLock;

fn lossy() -> &'static ReducedMachineModel {
    static M: OnceLock<ReducedMachineModel> = OnceLock::new();
    M.get_or_init(|| ieee39_prepared().reduce(None, Losses::Keep).unwrap())
}

fn damped_lossless() -> &'static ReducedMachineModel {
    static M: OnceLock<ReducedMachineModel> = OnceLock::new();
    M.get_or_init(|| ieee39_prepared().reduce(None, Losses::DropTransfer).unwrap().with_damping_ratio(0.2))
}

/// A state near the SEP, on the COI surface.
fn near_sep(model: &ReducedMachineModel, seed: &[f64], scale: f64) -> Vec<f64> {
    let q = model.invariant_basis().unwrap();
    let kick = nalgebra::DVector::from_iterator(q.nrows(), (0..q.nrows()).map(|i| scale * seed[i % seed.len()] * ((i % 3) as f64 - 1.0 + 0.5)));
    let v = &q * &q.transpose() * kick;
    model.sep_state().iter().zip(v.iter()).map(|(a, b)| a + b).collect()
}

fn gradient_defect(e: &dyn EnergyFunction, x: &[f64]) -> f64 {
    let g = e.gradient(x);
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (0..x.len())
        .map(|i| {
            let eps = 1e-6;
            let (mut p, mut m) = (x.to_vec(), x.to_vec());
            p[i] += eps;
            m[i] -= eps;
            ((e.value(&p) - e.value(&m)) / (2.0 * eps) - g[i]).abs() / scale
        })
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradients_match_differences(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -1.0..1.0f64) {
        prop_assert!(gradient_defect(&ThreeMachineEnergy, &[a, b]) < 1e-5);
        prop_assert!(gradient_defect(&QuadraticLyapunov::new(vec![0.1, -0.2, 0.3]), &[a, b, c]) < 1e-5);
        prop_assert!(gradient_defect(&SmibEnergy::new(Smib::default()), &[a, 5.0 * c]) < 1e-5);
        let x = near_sep(lossy(), &[a, b, c], 0.2);
        prop_assert!(gradient_defect(&MultiMachineEnergy::new(lossy()), &x) < 1e-5);
        prop_assert!(gradient_defect(&MultiMachineEnergy::lossless(lossy()), &x) < 1e-5);
    }

    #[test]
    fn split_sums_to_the_value(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -1.0..1.0f64) {
        let smib = SmibEnergy::new(Smib::default());
        let x = [a, 5.0 * c];
        let (k, p) = smib.split(&x).unwrap();
        prop_assert!((k + p - smib.value(&x)).abs() <= 1e-12 * smib.value(&x).abs().max(1.0));
        prop_assert!(k >= 0.0);
        let e = MultiMachineEnergy::new(lossy());
        let y = near_sep(lossy(), &[a, b, c], 0.3);
        let (k, p) = e.split(&y).unwrap();
        prop_assert!((k + p - e.value(&y)).abs() <= 1e-12 * e.value(&y).abs().max(1.0));
    }

    #[test]
    fn energy_never_increases_along_damped_lossless_flow(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -1.0..1.0f64) {
        let m = damped_lossless();
        let x = near_sep(m, &[a, b, c], 0.4);
        prop_assert!(dot(&MultiMachineEnergy::new(m).gradient(&x), &m.field(&x)) <= 1e-8);

        let sys = MachineSystem::Smib(Smib { damping: 0.05, ..Smib::default() });
        let y = [a, 5.0 * c];
        prop_assert!(dot(&SmibEnergy::new(Smib::default()).gradient(&y), &sys.field(&y)) <= 1e-8);

        prop_assert!(dot(&ThreeMachineEnergy.gradient(&[a, b]), &ThreeMachine.field(&[a, b])) <= 1e-12);
    }
}

#[test]
fn closest_uep_attains_the_lowest_boundary_energy() {
    let (lo, hi) = ThreeMachine::area_of_interest();
    let bounds = Bounds::new(lo.to_vec(), hi.to_vec()).unwrap();
    let mut found = enumerate_equilibria(&ThreeMachine, &bounds, 32).unwrap();
    let asep = find_equilibrium(&ThreeMachine, &[0.0, 0.0], 1e-12).unwrap();
    mark_boundary(&ThreeMachine, &mut found.points, &asep, &ShootingOptions::default());
    let cl = closest_uep(&ThreeMachineEnergy, &asep, &found.points).unwrap();
    let lowest = found
        .points
        .iter()
        .filter(|p| !p.is_asep() && p.on_boundary == Boundary::Yes)
        .map(|p| ThreeMachineEnergy.value(&p.state))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(cl.energy, Some(lowest));
}

#[test]
fn sublevel_component_below_the_closest_uep_converges() {
    let (lo, hi) = ThreeMachine::area_of_interest();
    let grid = Grid::uniform(Bounds::new(lo.to_vec(), hi.to_vec()).unwrap(), 120).unwrap();
    let asep = find_equilibrium(&ThreeMachine, &[0.0, 0.0], 1e-12).unwrap();
    let set = LevelSet::new(&ThreeMachineEnergy, 3.5, asep.state.clone());
    let mask = set.grid_component(&grid);
    let members: Vec<usize> = (0..grid.len()).filter(|&k| mask[k]).collect();
    assert!(members.len() > 100);
    // No node of the component touches the edge of the area of interest.
    for &k in &members {
        let idx = grid.multi_index(k);
        assert!(idx.iter().zip(&grid.counts).all(|(&i, &n)| i > 0 && i + 1 < n));
    }
    for &k in members.iter().step_by(members.len() / 60) {
        let x = grid.point(k);
        let traj = stabex_core::dynamics::integrate(&ThreeMachine, &x, 60.0, &Default::default()).unwrap();
        let d = traj.final_state().iter().zip(&asep.state).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-4, "node {x:?} ends {d} away");
    }
}
