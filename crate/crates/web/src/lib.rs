//! Browser bindings: equilibria and expanded level curves of the
//! three-machine example, and the expanded CCT sequence of a SMIB fault.
//!
//! Every export returns a JSON string; the plain `*_json` functions are the
//! same operations without the JS error type so they can be tested natively.

use serde::Serialize;
use stabex_core::cct::{cct_error, sbs_cct, sbs_trajectory, SbsOptions};
use stabex_core::direct::{critical_value, post_fault_energy, BcuOptions, Method};
use stabex_core::dynamics::Scheme;
use stabex_core::energy::{EnergyFunction, ThreeMachineEnergy};
use stabex_core::equilibria::{closest_uep, enumerate_equilibria, find_equilibrium, mark_boundary, ShootingOptions};
use stabex_core::expansion::{improve_cct, marching_squares, ExpandedFunction};
use stabex_core::grid::{Bounds, Grid};
use stabex_core::models::{FaultScenario, Smib, ThreeMachine};
use wasm_bindgen::prelude::*;

const MAX_RESOLUTION: usize = 400;
const MAX_ITERATIONS: usize = 30;

#[derive(Serialize)]
struct Equilibrium {
    x: [f64; 2],
    kind: String,
    on_boundary: bool,
    energy: f64,
}

#[derive(Serialize)]
struct Equilibria {
    asep: [f64; 2],
    closest: Equilibrium,
    points: Vec<Equilibrium>,
}

#[derive(Serialize)]
struct Curves {
    iteration: usize,
    lines: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct LevelCurves {
    level: f64,
    bounds: [f64; 4],
    curves: Vec<Curves>,
}

#[derive(Serialize)]
struct SmibCct {
    equal_area_cct: f64,
    sbs_cct: f64,
    v_cr: f64,
    method: String,
    ccts: Vec<f64>,
    errors_pct: Vec<f64>,
    failure: Option<String>,
    trajectory: Vec<[f64; 2]>,
    crossings: Vec<[f64; 2]>,
    bounds: [f64; 4],
    curves: Vec<Curves>,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(err)
}

fn check(resolution: usize, iterations: usize, h: f64) -> Result<(), String> {
    if !(8..=MAX_RESOLUTION).contains(&resolution) {
        return Err(format!("resolution must be within 8..={MAX_RESOLUTION}"));
    }
    if iterations > MAX_ITERATIONS {
        return Err(format!("at most {MAX_ITERATIONS} iterations"));
    }
    if !(h > 0.0 && h <= 1.0) {
        return Err("step must lie in (0, 1]".into());
    }
    Ok(())
}

/// Contours of `values[k] = level` for each requested iteration.
fn contours(grid: &Grid, seqs: &[Vec<f64>], level: f64, iterations: &[usize]) -> Vec<Curves> {
    iterations
        .iter()
        .map(|&k| {
            let values: Vec<f64> = seqs.iter().map(|v| v[k]).collect();
            let lines = marching_squares(grid, &values, level).into_iter().map(|p| p.points).collect();
            Curves { iteration: k, lines }
        })
        .collect()
}

fn shown(max: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut v: Vec<usize> = (0..=max).step_by(every).collect();
    if v.last() != Some(&max) {
        v.push(max);
    }
    v
}

pub fn equilibria_json() -> Result<String, String> {
    let (lo, hi) = ThreeMachine::area_of_interest();
    let bounds = Bounds::new(lo.to_vec(), hi.to_vec()).map_err(err)?;
    let mut found = enumerate_equilibria(&ThreeMachine, &bounds, 32).map_err(err)?;
    let asep = find_equilibrium(&ThreeMachine, &[0.0, 0.0], 1e-12).map_err(err)?;
    mark_boundary(&ThreeMachine, &mut found.points, &asep, &ShootingOptions::default());
    let cl = closest_uep(&ThreeMachineEnergy, &asep, &found.points).map_err(err)?;
    let view = |p: &stabex_core::equilibria::EquilibriumPoint| Equilibrium {
        x: [p.state[0], p.state[1]],
        kind: p.kind.to_string(),
        on_boundary: p.on_boundary == stabex_core::equilibria::Boundary::Yes,
        energy: ThreeMachineEnergy.value(&p.state),
    };
    to_json(&Equilibria {
        asep: [asep.state[0], asep.state[1]],
        closest: view(&cl),
        points: found.points.iter().map(view).collect(),
    })
}

pub fn level_curves_json(level: f64, iterations: usize, every: usize, scheme: &str, h: f64, resolution: usize) -> Result<String, String> {
    check(resolution, iterations, h)?;
    if !level.is_finite() {
        return Err("level must be finite".into());
    }
    let scheme: Scheme = scheme.parse().map_err(err)?;
    let (lo, hi) = ThreeMachine::area_of_interest();
    let grid = Grid::uniform(Bounds::new(lo.to_vec(), hi.to_vec()).map_err(err)?, resolution).map_err(err)?;
    let exp = ExpandedFunction::new(&ThreeMachineEnergy, &ThreeMachine, scheme, h, iterations).map_err(err)?;
    let seqs = exp.grid_sequences(&grid, iterations).map_err(err)?;
    to_json(&LevelCurves {
        level,
        bounds: [lo[0], hi[0], lo[1], hi[1]],
        curves: contours(&grid, &seqs, level, &shown(iterations, every)),
    })
}

pub fn smib_cct_json(mech_power: f64, damping: f64, method: &str, iterations: usize, scheme: &str, h: f64) -> Result<String, String> {
    check(100, iterations, h)?;
    let mut params = Smib::new(0.05, mech_power, 2.0).map_err(err)?;
    if !(damping >= 0.0 && damping.is_finite()) {
        return Err("damping must be non-negative".into());
    }
    params.damping = damping;
    let method: Method = method.parse().map_err(err)?;
    let scheme: Scheme = scheme.parse().map_err(err)?;
    let sc = FaultScenario::smib(params);
    let opts = SbsOptions::default();
    let fault_on = sbs_trajectory(&sc, &opts).map_err(err)?;
    let energy = post_fault_energy(&sc);
    let sbs = sbs_cct(&sc, &fault_on, &energy, &opts).map_err(err)?;
    let traj = &fault_on.trajectory;
    let cv = critical_value(&sc, traj, &energy, method, &BcuOptions::default()).map_err(err)?;
    let exp = ExpandedFunction::new(&energy, &sc.post_fault, scheme, h, iterations).map_err(err)?;
    let seq = improve_cct(traj, &exp, cv.v_cr);
    let ccts = seq.times();
    let errors_pct = ccts.iter().map(|&t| cct_error(t, sbs.cct)).collect::<Result<_, _>>().map_err(err)?;

    let t_show = ccts.iter().copied().fold(sbs.cct, f64::max) * 1.3;
    let trajectory = traj
        .times()
        .iter()
        .zip(traj.states())
        .take_while(|(t, _)| **t <= t_show)
        .map(|(_, s)| [s[0], s[1]])
        .collect();
    let crossings = ccts
        .iter()
        .map(|&t| {
            let s = traj.interpolate(t);
            [s[0], s[1]]
        })
        .collect();

    let (lo, hi) = ([-std::f64::consts::PI, -15.0], [2.0 * std::f64::consts::PI, 15.0]);
    let grid = Grid::uniform(Bounds::new(lo.to_vec(), hi.to_vec()).map_err(err)?, 160).map_err(err)?;
    let seqs = exp.grid_sequences(&grid, iterations).map_err(err)?;
    to_json(&SmibCct {
        equal_area_cct: params.critical_clearing_time(),
        sbs_cct: sbs.cct,
        v_cr: cv.v_cr,
        method: method.to_string(),
        ccts,
        errors_pct,
        failure: seq.failure,
        trajectory,
        crossings,
        bounds: [lo[0], hi[0], lo[1], hi[1]],
        curves: contours(&grid, &seqs, cv.v_cr, &shown(iterations, 1)),
    })
}

/// Equilibria of the three-machine example with boundary flags and energies.
#[wasm_bindgen]
pub fn equilibria() -> Result<String, JsError> {
    equilibria_json().map_err(|e| JsError::new(&e))
}

/// Level curves `V_k = level` of the expanded three-machine energy for
/// `k = 0, every, 2 every, ..., iterations`.
#[wasm_bindgen]
pub fn level_curves(level: f64, iterations: usize, every: usize, scheme: &str, h: f64, resolution: usize) -> Result<String, JsError> {
    level_curves_json(level, iterations, every, scheme, h, resolution).map_err(|e| JsError::new(&e))
}

/// SBS and expanded CCTs of a bolted SMIB fault, with the phase-plane
/// trajectory and the expanded critical level curves.
#[wasm_bindgen]
pub fn smib_cct(mech_power: f64, damping: f64, method: &str, iterations: usize, scheme: &str, h: f64) -> Result<String, JsError> {
    smib_cct_json(mech_power, damping, method, iterations, scheme, h).map_err(|e| JsError::new(&e))
}
