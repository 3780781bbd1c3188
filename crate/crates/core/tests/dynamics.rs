use proptest::prelude::*;
use stabex_core::dynamics::{empirical_order, integrate, rk_step, Controls, Reversed, Scheme, SystemModel};
use stabex_core::equilibria::{find_equilibrium, newton, NewtonOptions};
use stabex_core::models::scenario::ieee39_prepared;
use stabex_core::models::{Benchmark3d, FaultScenario, Losses, MachineSystem, Smib, ThreeMachine};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Worst relative mismatch between the analytic Jacobian and central
/// differences of the field.
fn jacobian_defect(model: &dyn SystemModel, x: &[f64]) -> f64 {
    let j = model.jacobian(x);
    let n = model.dim();
    let scale = j.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for c in 0..n {
        let eps = 1e-6 * x[c].abs().max(1.0);
        let (mut p, mut m) = (x.to_vec(), x.to_vec());
        p[c] += eps;
        m[c] -= eps;
        let (fp, fm) = (model.field(&p), model.field(&m));
        for r in 0..n {
            let fd = (fp[r] - fm[r]) / (2.0 * eps);
            worst = worst.max((fd - j[(r, c)]).abs() / scale);
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobians_match_differences(a in -6.0..6.0f64, b in -6.0..6.0f64, c in -2.0..2.0f64) {
        prop_assert!(jacobian_defect(&ThreeMachine, &[a, b]) < 1e-5);
        prop_assert!(jacobian_defect(&Benchmark3d, &[a / 3.0, b / 3.0, c]) < 1e-5);
        let smib = MachineSystem::Smib(Smib { damping: 0.1, ..Smib::default() });
        prop_assert!(jacobian_defect(smib.as_model(), &[a, 4.0 * b]) < 1e-5);
    }

    #[test]
    fn field_is_deterministic(a in -6.0..6.0f64, b in -6.0..6.0f64) {
        prop_assert_eq!(ThreeMachine.field(&[a, b]), ThreeMachine.field(&[a, b]));
    }

    #[test]
    fn equilibria_are_fixed_points(h in -1.0..1.0f64) {
        let p = find_equilibrium(&ThreeMachine, &[0.0467, -3.1683], 1e-12).unwrap();
        for s in Scheme::ALL {
            let y = rk_step(&ThreeMachine, &s.tableau(), &p.state, h).unwrap();
            prop_assert!(dist(&y, &p.state) <= 1e-12);
        }
    }

    #[test]
    fn improved_euler_matches_two_stage_formula(a in -6.0..6.0f64, b in -6.0..6.0f64, h in -0.5..0.5f64) {
        let x = [a, b];
        let k1 = ThreeMachine.field(&x);
        let mid: Vec<f64> = x.iter().zip(&k1).map(|(v, k)| v + h * k).collect();
        let k2 = ThreeMachine.field(&mid);
        let want: Vec<f64> = (0..2).map(|i| x[i] + 0.5 * h * (k1[i] + k2[i])).collect();
        let got = rk_step(&ThreeMachine, &Scheme::Rk2.tableau(), &x, h).unwrap();
        prop_assert!(dist(&got, &want) <= 1e-12);
    }
}

#[test]
fn weights_sum_to_one() {
    for s in Scheme::ALL {
        let sum: f64 = s.tableau().weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15, "{s}");
    }
}

#[test]
fn euler_step_barely_moves_the_rounded_closest_uep() {
    let x = [0.0467, -3.1683];
    let y = rk_step(&ThreeMachine, &Scheme::Euler.tableau(), &x, 0.2).unwrap();
    assert!(dist(&x, &y) <= 1e-3, "{}", dist(&x, &y));
}

#[test]
fn reverse_step_defect_has_the_scheme_order() {
    let x = [1.0, -0.5];
    for s in Scheme::ALL {
        let t = s.tableau();
        let defect = |h: f64| {
            let y = rk_step(&ThreeMachine, &t, &x, h).unwrap();
            dist(&rk_step(&ThreeMachine, &t, &y, -h).unwrap(), &x)
        };
        let ratio = defect(0.1) / defect(0.05);
        let floor = 2f64.powf(s.order() as f64 + 0.5);
        assert!(ratio >= floor, "{s}: ratio {ratio} < {floor}");
    }
}

#[test]
fn integration_settles_on_the_newton_asep() {
    let asep = newton(&ThreeMachine, &[0.0, 0.0], NewtonOptions::default()).unwrap();
    let traj = integrate(&ThreeMachine, &[0.3, -0.2], 50.0, &Controls::default()).unwrap();
    assert!(dist(traj.final_state(), &asep) < 1e-6);
    let times = traj.times();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn reverse_integration_retraces_forward() {
    let x0 = [0.8, -0.6];
    let tight = Controls::default().with_tolerances(1e-12, 1e-14);
    let fwd = integrate(&ThreeMachine, &x0, 2.0, &tight).unwrap();
    let back = integrate(&Reversed(&ThreeMachine), fwd.final_state(), 2.0, &tight).unwrap();
    assert!(dist(back.final_state(), &x0) < 1e-6);
}

#[test]
fn integration_is_bit_reproducible() {
    let sc = FaultScenario::network_fault(&ieee39_prepared(), 9, Losses::Keep).unwrap();
    let a = integrate(sc.fault_on.as_model(), &sc.x0_pre, 0.3, &Controls::default()).unwrap();
    let b = integrate(sc.fault_on.as_model(), &sc.x0_pre, 0.3, &Controls::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn network_jacobian_matches_differences() {
    let sc = FaultScenario::network_fault(&ieee39_prepared(), 20, Losses::Keep).unwrap();
    let mut x = sc.x0_pre.clone();
    for (i, v) in x.iter_mut().enumerate() {
        *v += 0.05 * ((i * 7 % 5) as f64 - 2.0);
    }
    assert!(jacobian_defect(sc.fault_on.as_model(), &x) < 1e-5);
}

#[test]
fn empirical_orders_from_a_second_start() {
    for s in Scheme::ALL {
        let p = empirical_order(&ThreeMachine, &s.tableau(), &[1.0, 1.0], 1.0, &[0.1, 0.05, 0.025]).unwrap();
        assert!((p - s.order() as f64).abs() <= 0.15, "{s}: {p}");
    }
}
