//! Fault-on trajectories and the classical critical-value selectors: PEBS
//! (potential-energy maximum along the fault-on trajectory) and BCU
//! (controlling UEP through the reduced gradient system).

use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_with, Controls, Flow, SystemModel, Termination, Trajectory};
use crate::energy::{EnergyFunction, SwingEnergy};
use crate::equilibria::{
    closest_uep, enumerate_equilibria, find_equilibrium, mark_boundary, newton, on_stability_boundary, shoot, Boundary, EquilibriumPoint, Fate, NewtonOptions, ShootingOptions,
};
use crate::error::{Error, Result};
use crate::grid::Bounds;
use crate::models::scenario::{FaultScenario, MachineSystem};

pub const DEFAULT_FAULT_HORIZON: f64 = 2.0;
const TIME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pebs,
    Bcu,
    ClosestUep,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Pebs => "pebs",
            Method::Bcu => "bcu",
            Method::ClosestUep => "closest-uep",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pebs" => Ok(Method::Pebs),
            "bcu" => Ok(Method::Bcu),
            "closest-uep" | "closest_uep" => Ok(Method::ClosestUep),
            other => Err(Error::Domain(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalValue {
    pub method: Method,
    pub v_cr: f64,
    /// Exit point (PEBS) or controlling UEP (BCU, closest UEP).
    pub witness: Vec<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct FaultOnTrajectory {
    pub trajectory: Trajectory,
    /// The integration diverged before the horizon.
    pub truncated: bool,
}

/// Fault-on trajectory from the pre-fault equilibrium.
pub fn fault_on_trajectory(scenario: &FaultScenario, horizon: f64, controls: &Controls) -> Result<FaultOnTrajectory> {
    if !(horizon > 0.0) {
        return Err(Error::Domain("fault-on horizon must be positive".into()));
    }
    let (trajectory, term) = integrate_with(&scenario.fault_on, &scenario.x0_pre, horizon, controls, |_, _| Flow::Continue)?;
    Ok(FaultOnTrajectory { trajectory, truncated: matches!(term, Termination::Diverged { .. }) })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExitPoint {
    pub state: Vec<f64>,
    pub time: f64,
    pub v_cr: f64,
}

/// Times of the strict local maxima of a value along `traj`, given its time
/// derivative `rate` at a state, in order. Each is refined by bisection on
/// the dense output.
pub fn local_maxima<R>(traj: &Trajectory, rate: R, limit: usize) -> Vec<f64>
where
    R: Fn(&[f64]) -> f64,
{
    let times = traj.times();
    let states = traj.states();
    let mut rising = false;
    let mut out = Vec::new();
    for k in 0..times.len() {
        if out.len() >= limit {
            break;
        }
        let r = rate(&states[k]);
        if r > 0.0 {
            rising = true;
        } else if rising && k > 0 {
            let (mut lo, mut hi) = (times[k - 1], times[k]);
            while hi - lo > TIME_TOL {
                let mid = 0.5 * (lo + hi);
                if rate(&traj.interpolate(mid)) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
            rising = false;
        }
    }
    out
}

/// Time of the first strict local maximum; see [`local_maxima`].
pub fn first_local_max<R>(traj: &Trajectory, rate: R) -> Option<f64>
where
    R: Fn(&[f64]) -> f64,
{
    local_maxima(traj, rate, 1).first().copied()
}

fn potential_rate(energy: &SwingEnergy) -> impl Fn(&[f64]) -> f64 + '_ {
    let n = energy.angles();
    move |x: &[f64]| {
        let g = energy.potential_gradient(&x[..n]);
        g.iter().zip(&x[n..]).map(|(a, b)| a * b).sum::<f64>()
    }
}

fn exit_at(traj: &Trajectory, energy: &SwingEnergy, t: f64) -> ExitPoint {
    let state = traj.interpolate(t);
    let v_cr = energy.potential(&state[..energy.angles()]);
    ExitPoint { state, time: t, v_cr }
}

/// PEBS exit point: first local maximum of the potential energy along the
/// fault-on trajectory.
pub fn pebs_exit_point(traj: &Trajectory, energy: &SwingEnergy) -> Result<ExitPoint> {
    let t = first_local_max(traj, potential_rate(energy)).ok_or(Error::PebsNotFound)?;
    Ok(exit_at(traj, energy, t))
}

/// Successive potential-energy maxima along the fault-on trajectory.
pub fn pebs_candidates(traj: &Trajectory, energy: &SwingEnergy, limit: usize) -> Vec<ExitPoint> {
    local_maxima(traj, potential_rate(energy), limit).into_iter().map(|t| exit_at(traj, energy, t)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct BcuOptions {
    /// Longest gradient-system integration when looking for the MGP.
    pub mgp_horizon: f64,
    pub trust_radius: f64,
    pub max_rounds: usize,
    /// Gradient-flow time between boundary projections while shadowing.
    pub shadow_step: f64,
    pub shooting: ShootingOptions,
    /// Potential-energy maxima tried in turn when earlier ones turn out to
    /// lie inside the gradient system's stability region.
    pub exit_candidates: usize,
}

impl Default for BcuOptions {
    fn default() -> Self {
        Self {
            mgp_horizon: 50.0,
            trust_radius: 0.5,
            max_rounds: 10,
            shadow_step: 0.1,
            shooting: ShootingOptions { horizon: 50.0, ..ShootingOptions::default() },
            exit_candidates: 5,
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Below this gradient speed the MGP search counts as converged.
pub const MGP_FLOOR: f64 = 1e-6;

/// Minimum gradient point: first local minimum of `‖f‖` along the gradient
/// trajectory from `start`. When the speed rises right away the start itself
/// is the (one-sided) minimum.
pub fn minimum_gradient_point(gradient: &dyn SystemModel, start: &[f64], horizon: f64) -> Result<Vec<f64>> {
    let speed = |x: &[f64]| norm(&gradient.field(x));
    let mut prev = speed(start);
    let mut steps = 0;
    let mut found = false;
    let controls = Controls::default().with_max_step(0.05);
    let (traj, _) = integrate_with(gradient, start, horizon, &controls, |_, x| {
        steps += 1;
        let s = speed(x);
        if s < MGP_FLOOR {
            // converging onto an equilibrium, not a minimum of the speed
            return Flow::Stop;
        }
        if s > prev {
            found = true;
            return Flow::Stop;
        }
        prev = s;
        Flow::Continue
    })?;
    if !found {
        return Err(Error::BcuInterior);
    }
    if steps == 1 {
        return Ok(start.to_vec());
    }
    // Golden-section refinement over the last two steps.
    let times = traj.times();
    let k = times.len() - 1;
    let (mut a, mut b) = (times[k.saturating_sub(2)], times[k]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let f = |t: f64| speed(&traj.interpolate(t));
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > TIME_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    Ok(traj.interpolate(0.5 * (a + b)))
}

/// Moves `p` onto the stability boundary of `sep` in the gradient system
/// along the ray from `sep` through `p`.
fn project_to_boundary(gradient: &dyn SystemModel, sep: &[f64], p: &[f64], opts: &ShootingOptions) -> Option<Vec<f64>> {
    let at = |lambda: f64| -> Vec<f64> { sep.iter().zip(p).map(|(s, x)| s + lambda * (x - s)).collect() };
    let inside = |lambda: f64| shoot(gradient, &at(lambda), sep, opts) == Fate::Converged;
    let (mut lo, mut hi);
    if inside(1.0) {
        lo = 1.0;
        hi = 1.5;
        let mut tries = 0;
        while inside(hi) {
            lo = hi;
            hi *= 1.5;
            tries += 1;
            if tries > 12 {
                return None;
            }
        }
    } else {
        hi = 1.0;
        lo = 1.0 / 1.5;
        let mut tries = 0;
        while !inside(lo) {
            hi = lo;
            lo /= 1.5;
            tries += 1;
            if tries > 12 {
                return None;
            }
        }
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(at(lo))
}

/// Boundary-following search for a better MGP starting near `p`.
fn shadow(gradient: &dyn SystemModel, sep: &[f64], p: &[f64], opts: &BcuOptions) -> Option<Vec<f64>> {
    let mut q = project_to_boundary(gradient, sep, p, &opts.shooting)?;
    let mut best = (norm(&gradient.field(&q)), q.clone());
    let controls = Controls::default().with_max_step(0.05);
    for _ in 0..50 {
        let traj = crate::dynamics::integrate(gradient, &q, opts.shadow_step, &controls).ok()?;
        q = project_to_boundary(gradient, sep, traj.final_state(), &opts.shooting)?;
        let s = norm(&gradient.field(&q));
        if s < best.0 {
            best = (s, q.clone());
        } else {
            break;
        }
    }
    Some(best.1)
}

/// Controlling UEP search shared by every model type. `full` is the
/// post-fault system, `gradient` its reduced gradient system on angle space,
/// `sep` the stable angles and `embed` maps angles to a full state.
pub fn locate_cuep(
    full: &dyn SystemModel,
    gradient: &dyn SystemModel,
    sep: &[f64],
    exit_angles: &[f64],
    embed: &dyn Fn(&[f64]) -> Vec<f64>,
    opts: &BcuOptions,
) -> Result<EquilibriumPoint> {
    let mut mgp = minimum_gradient_point(gradient, exit_angles, opts.mgp_horizon)?;
    if dist(&mgp, sep) < 1e-3 {
        return Err(Error::BcuInterior);
    }
    let n = sep.len();
    let newton_opts = NewtonOptions::default();
    for round in 0..=opts.max_rounds {
        if let Ok(x) = newton(full, &embed(&mgp), newton_opts) {
            if dist(&x[..n], &mgp) <= opts.trust_radius {
                if let Ok(p) = EquilibriumPoint::classify(full, x) {
                    if !p.is_asep() {
                        log::debug!("CUEP after {round} shadowing rounds");
                        return Ok(mark_cuep_boundary(gradient, sep, p, n, opts));
                    }
                }
            }
        }
        if round == opts.max_rounds {
            break;
        }
        mgp = shadow(gradient, sep, &mgp, opts).ok_or(Error::CuepNotLocated)?;
    }
    Err(Error::CuepNotLocated)
}

fn mark_cuep_boundary(gradient: &dyn SystemModel, sep: &[f64], mut p: EquilibriumPoint, n: usize, opts: &BcuOptions) -> EquilibriumPoint {
    let flag = match (
        EquilibriumPoint::classify(gradient, p.state[..n].to_vec()),
        EquilibriumPoint::classify(gradient, sep.to_vec()),
    ) {
        (Ok(u), Ok(s)) => on_stability_boundary(gradient, &u, &s, &opts.shooting),
        _ => Boundary::Unknown,
    };
    p.on_boundary = flag;
    p
}

/// BCU controlling UEP of a fault scenario from a PEBS exit point.
pub fn bcu_cuep(scenario: &FaultScenario, exit_point: &[f64], opts: &BcuOptions) -> Result<EquilibriumPoint> {
    let post = &scenario.post_fault;
    let n = post.angles();
    let gradient = post.gradient_field();
    let sep = post.sep_angles();
    let embed = |theta: &[f64]| post.embed_angles(theta);
    locate_cuep(post, gradient.as_ref(), &sep, &exit_point[..n], &embed, opts)
}

/// The fault-on state at the true critical clearing time.
pub fn real_exit_point(traj: &Trajectory, sbs_cct: f64) -> Result<Vec<f64>> {
    if !(sbs_cct > 0.0) || sbs_cct > traj.t_end() {
        return Err(Error::Domain("clearing time outside the fault-on trajectory".into()));
    }
    Ok(traj.interpolate(sbs_cct))
}

/// PEBS critical value with its exit point.
pub fn pebs_critical_value(traj: &Trajectory, energy: &SwingEnergy) -> Result<(CriticalValue, ExitPoint)> {
    let start = Instant::now();
    let exit = pebs_exit_point(traj, energy)?;
    let cv = CriticalValue {
        method: Method::Pebs,
        v_cr: exit.v_cr,
        witness: exit.state.clone(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((cv, exit))
}

/// BCU critical value `V(CUEP)`.
pub fn bcu_critical_value(
    scenario: &FaultScenario,
    traj: &Trajectory,
    energy: &SwingEnergy,
    opts: &BcuOptions,
) -> Result<(CriticalValue, EquilibriumPoint)> {
    let start = Instant::now();
    let candidates = pebs_candidates(traj, energy, opts.exit_candidates.max(1));
    let mut last = Error::PebsNotFound;
    let mut found = None;
    for exit in &candidates {
        match bcu_cuep(scenario, &exit.state, opts) {
            Ok(p) if p.on_boundary != Boundary::No => {
                found = Some(p);
                break;
            }
            Ok(_) => last = Error::CuepNotLocated,
            Err(e) => last = e,
        }
    }
    let cuep = found.ok_or(last)?.with_energy(energy);
    let v_cr = cuep.energy.expect("energy set");
    let cv = CriticalValue { method: Method::Bcu, v_cr, witness: cuep.state.clone(), wall_time: start.elapsed().as_secs_f64() };
    Ok((cv, cuep))
}

/// Largest angle-space dimension for which the closest-UEP method enumerates
/// equilibria.
pub const CLOSEST_UEP_MAX_ANGLES: usize = 3;

struct PotentialOnly<'a>(&'a SwingEnergy);

impl EnergyFunction for PotentialOnly<'_> {
    fn dim(&self) -> usize {
        self.0.angles()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.potential(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.0.potential_gradient(x)
    }
}

/// Closest-UEP critical value: the lowest-energy UEP on the boundary of the
/// post-fault gradient system, found by enumeration within one period of
/// the SEP. Only small angle spaces are enumerated.
pub fn closest_uep_critical_value(scenario: &FaultScenario, energy: &SwingEnergy, opts: &ShootingOptions) -> Result<CriticalValue> {
    let start = Instant::now();
    let post = &scenario.post_fault;
    let n = post.angles();
    if n > CLOSEST_UEP_MAX_ANGLES {
        return Err(Error::Domain(format!("closest-UEP enumeration needs at most {CLOSEST_UEP_MAX_ANGLES} angles, got {n}")));
    }
    let gradient = post.gradient_field();
    let sep = post.sep_angles();
    let two_pi = 2.0 * std::f64::consts::PI;
    let bounds = Bounds::new(sep.iter().map(|s| s - two_pi).collect(), sep.iter().map(|s| s + two_pi).collect())?;
    let density = [0, 64, 32, 12][n];
    let mut found = enumerate_equilibria(gradient.as_ref(), &bounds, density)?;
    let asep = find_equilibrium(gradient.as_ref(), &sep, 1e-12)?;
    mark_boundary(gradient.as_ref(), &mut found.points, &asep, opts);
    let uep = closest_uep(&PotentialOnly(energy), &asep, &found.points)?;
    let witness = post.embed_angles(&uep.state);
    Ok(CriticalValue { method: Method::ClosestUep, v_cr: energy.value(&witness), witness, wall_time: start.elapsed().as_secs_f64() })
}

/// Critical value by any of the direct methods.
pub fn critical_value(
    scenario: &FaultScenario,
    traj: &Trajectory,
    energy: &SwingEnergy,
    method: Method,
    opts: &BcuOptions,
) -> Result<CriticalValue> {
    match method {
        Method::Pebs => pebs_critical_value(traj, energy).map(|(cv, _)| cv),
        Method::Bcu => bcu_critical_value(scenario, traj, energy, opts).map(|(cv, _)| cv),
        Method::ClosestUep => closest_uep_critical_value(scenario, energy, &opts.shooting),
    }
}

/// Convenience for models that expose [`MachineSystem`].
pub fn post_fault_energy(scenario: &FaultScenario) -> SwingEnergy {
    SwingEnergy::for_system(&scenario.post_fault)
}

impl MachineSystem {
    /// Potential energy at the stored SEP is zero; this is the energy of a
    /// full state.
    pub fn energy(&self, x: &[f64]) -> f64 {
        SwingEnergy::for_system(self).value(x)
    }
}
