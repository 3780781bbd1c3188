//! Vector fields, explicit Runge-Kutta one-step maps and the reference
//! trajectory integrator.
//!
//! The one-step maps `N_h^f(x) = x + h Σ b_i k_i` are what the expansion
//! operator composes with an energy function. The reference integrator is an
//! embedded Dormand-Prince 5(4) pair with PI step control; it backs every
//! "ground truth" computation (step-by-step simulation, fault-on trajectories,
//! boundary-membership shooting) and must be much more accurate than the maps
//! it is used to judge.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An autonomous system `x' = f(x)`.
pub trait SystemModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `f(x)` into `dx`.
    fn field_into(&self, x: &[f64], dx: &mut [f64]);

    fn field(&self, x: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.dim()];
        self.field_into(x, &mut dx);
        dx
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;

    /// Orthonormal basis (columns) of a linear subspace that is invariant
    /// under the flow and on which the model is meant to be studied, e.g. the
    /// center-of-inertia constraint surface of a multi-machine model. `None`
    /// means the whole state space.
    fn invariant_basis(&self) -> Option<DMatrix<f64>> {
        None
    }

    /// Largest pairwise rotor-angle separation (rad) for power-system models.
    fn angle_separation(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// True for undamped lossless swing models, whose stable motions
    /// oscillate forever instead of settling.
    fn is_conservative(&self) -> bool {
        false
    }
}

impl<T: SystemModel + ?Sized> SystemModel for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        (**self).field_into(x, dx)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).jacobian(x)
    }
    fn invariant_basis(&self) -> Option<DMatrix<f64>> {
        (**self).invariant_basis()
    }
    fn angle_separation(&self, x: &[f64]) -> Option<f64> {
        (**self).angle_separation(x)
    }
    fn is_conservative(&self) -> bool {
        (**self).is_conservative()
    }
}

/// The time-reversed system `x' = -f(x)`.
pub struct Reversed<'a>(pub &'a dyn SystemModel);

impl SystemModel for Reversed<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        self.0.field_into(x, dx);
        dx.iter_mut().for_each(|v| *v = -*v);
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        -self.0.jacobian(x)
    }
    fn invariant_basis(&self) -> Option<DMatrix<f64>> {
        self.0.invariant_basis()
    }
    fn angle_separation(&self, x: &[f64]) -> Option<f64> {
        self.0.angle_separation(x)
    }
}

/// Built-in explicit schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Forward Euler, one stage.
    Euler,
    /// Improved Euler (Heun), two stages.
    Rk2,
    /// Kutta's third-order method, three stages.
    Rk3,
}

impl Scheme {
    pub fn tableau(self) -> RkScheme {
        match self {
            Scheme::Euler => RkScheme::euler(),
            Scheme::Rk2 => RkScheme::improved_euler(),
            Scheme::Rk3 => RkScheme::kutta3(),
        }
    }

    pub fn order(self) -> usize {
        match self {
            Scheme::Euler => 1,
            Scheme::Rk2 => 2,
            Scheme::Rk3 => 3,
        }
    }

    pub const ALL: [Scheme; 3] = [Scheme::Euler, Scheme::Rk2, Scheme::Rk3];
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Rk2 => "rk2",
            Scheme::Rk3 => "rk3",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" | "rk1" => Ok(Scheme::Euler),
            "rk2" | "heun" | "improved-euler" => Ok(Scheme::Rk2),
            "rk3" | "kutta3" => Ok(Scheme::Rk3),
            other => Err(Error::Domain(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Butcher tableau of an explicit s-stage Runge-Kutta method.
#[derive(Debug, Clone, PartialEq)]
pub struct RkScheme {
    /// Row `i` holds `a_ij` for `j < i`.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl RkScheme {
    /// Builds a tableau; `a[i]` must have exactly `i` entries and the weights
    /// must sum to one.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if b.is_empty() || a.len() != b.len() {
            return Err(Error::Domain("tableau shape mismatch".into()));
        }
        if a.iter().enumerate().any(|(i, row)| row.len() != i) {
            return Err(Error::Domain("tableau must be strictly lower triangular".into()));
        }
        let sum: f64 = b.iter().sum();
        if (sum - 1.0).abs() > 1e-14 {
            return Err(Error::Domain(format!("inconsistent weights: Σb = {sum}")));
        }
        Ok(Self { a, b })
    }

    pub fn euler() -> Self {
        Self { a: vec![vec![]], b: vec![1.0] }
    }

    /// `N(x) = x + h/2 (f(x) + f(x + h f(x)))`.
    pub fn improved_euler() -> Self {
        Self {
            a: vec![vec![], vec![1.0]],
            b: vec![0.5, 0.5],
        }
    }

    /// `k1 = f(x)`, `k2 = f(x + h/2 k1)`, `k3 = f(x - h k1 + 2h k2)`,
    /// weights `(1/6, 2/3, 1/6)`.
    pub fn kutta3() -> Self {
        Self {
            a: vec![vec![], vec![0.5], vec![-1.0, 2.0]],
            b: vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.b
    }

    pub fn coupling(&self, i: usize) -> &[f64] {
        &self.a[i]
    }
}

/// Scratch storage for repeated one-step map evaluations.
#[derive(Debug, Clone)]
pub struct RkWorkspace {
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl RkWorkspace {
    pub fn new(dim: usize, stages: usize) -> Self {
        Self {
            k: vec![vec![0.0; dim]; stages],
            tmp: vec![0.0; dim],
        }
    }

    /// In-place `x <- N_h^f(x)`.
    pub fn step_in_place(
        &mut self,
        model: &dyn SystemModel,
        scheme: &RkScheme,
        x: &mut [f64],
        h: f64,
    ) -> Result<()> {
        let s = scheme.stages();
        let n = x.len();
        if self.k.len() < s || self.tmp.len() != n {
            *self = RkWorkspace::new(n, s);
        }
        for i in 0..s {
            let a = scheme.coupling(i);
            for d in 0..n {
                let mut acc = 0.0;
                for (j, aij) in a.iter().enumerate() {
                    acc += aij * self.k[j][d];
                }
                self.tmp[d] = x[d] + h * acc;
            }
            model.field_into(&self.tmp, &mut self.k[i]);
            if self.k[i].iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowUp { stage: i + 1 });
            }
        }
        for d in 0..n {
            let mut acc = 0.0;
            for (i, bi) in scheme.weights().iter().enumerate() {
                acc += bi * self.k[i][d];
            }
            x[d] += h * acc;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowUp { stage: s });
        }
        Ok(())
    }
}

/// One application of the Runge-Kutta map `N_h^f`. Negative `h` steps
/// backwards in time.
pub fn rk_step(model: &dyn SystemModel, scheme: &RkScheme, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut ws = RkWorkspace::new(x.len(), scheme.stages());
    let mut y = x.to_vec();
    ws.step_in_place(model, scheme, &mut y, h)?;
    Ok(y)
}

/// Step-size and safety controls for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Controls {
    pub max_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub escape_radius: f64,
    pub min_step: f64,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            max_step: 0.01,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            escape_radius: 1e6,
            min_step: 1e-12,
        }
    }
}

impl Controls {
    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }
}

/// Dense-output trajectory. For reverse-time integration the parameter is
/// `τ = -t` and the stored derivatives are those of the reversed field.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

impl Trajectory {
    fn start(t0: f64, x0: Vec<f64>, d0: Vec<f64>) -> Self {
        Self {
            times: vec![t0],
            states: vec![x0],
            derivs: vec![d0],
        }
    }

    fn push(&mut self, t: f64, x: Vec<f64>, d: Vec<f64>) {
        self.times.push(t);
        self.states.push(x);
        self.derivs.push(d);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// Piecewise cubic Hermite interpolation; exact at stored nodes and
    /// clamped to the stored interval.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.t_end() {
            return self.final_state().to_vec();
        }
        let k = self.times.partition_point(|&tk| tk <= t) - 1;
        if self.times[k] == t {
            return self.states[k].clone();
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let dt = t1 - t0;
        let s = (t - t0) / dt;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (y0, y1) = (&self.states[k], &self.states[k + 1]);
        let (d0, d1) = (&self.derivs[k], &self.derivs[k + 1]);
        (0..y0.len())
            .map(|i| h00 * y0[i] + h10 * dt * d0[i] + h01 * y1[i] + h11 * dt * d1[i])
            .collect()
    }
}

/// Observer verdict after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// How an integration run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// The observer asked to stop.
    Stopped,
    /// The state left the escape radius or became non-finite at `t`.
    Diverged { t: f64, norm: f64 },
}

// Dormand-Prince 5(4) coefficients.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Integrates `x' = f(x)` from `x0` over `[0, t_end]` (reverse time when
/// `t_end < 0`), calling `observer(t, x)` after every accepted step.
///
/// Divergence is reported through [`Termination::Diverged`] together with the
/// trajectory computed so far; only step-size underflow is an error here.
pub fn integrate_with<F>(
    model: &dyn SystemModel,
    x0: &[f64],
    t_end: f64,
    controls: &Controls,
    mut observer: F,
) -> Result<(Trajectory, Termination)>
where
    F: FnMut(f64, &[f64]) -> Flow,
{
    if t_end < 0.0 {
        let rev = Reversed(model);
        return integrate_with(&rev, x0, -t_end, controls, observer);
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    model.field_into(&x, &mut k[0]);
    let mut traj = Trajectory::start(0.0, x.clone(), k[0].clone());
    if t_end == 0.0 {
        return Ok((traj, Termination::Completed));
    }

    let scale = |x: &[f64], i: usize| controls.abs_tol + controls.rel_tol * x[i].abs();
    // Initial step guess (Hairer's heuristic, simplified).
    let d0 = (0..n).map(|i| (x[i] / scale(&x, i)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
    let d1 = (0..n).map(|i| (k[0][i] / scale(&x, i)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-4 } else { 0.01 * d0 / d1 };
    h = h.min(controls.max_step).min(t_end).max(controls.min_step);

    let mut t = 0.0;
    let mut err_prev: f64 = 1e-4;
    let mut tmp = vec![0.0; n];
    let mut x_new = vec![0.0; n];

    while t < t_end {
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][i];
                }
                tmp[i] = x[i] + h * acc;
            }
            model.field_into(&tmp, &mut k[s]);
            if s == 6 {
                x_new.copy_from_slice(&tmp);
            }
        }
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * k[s][i];
            }
            e *= h;
            let sc = controls.abs_tol + controls.rel_tol * x[i].abs().max(x_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();

        if !err.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
            // Shrink hard on non-finite trial states.
            h *= 0.1;
            if h < controls.min_step {
                return Ok((traj, Termination::Diverged { t, norm: f64::INFINITY }));
            }
            continue;
        }

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut x, &mut x_new);
            // FSAL: stage 7 is f(x_new).
            let k7 = k[6].clone();
            k[0].copy_from_slice(&k7);
            traj.push(t, x.clone(), k7);
            let norm = norm2(&x);
            if norm > controls.escape_radius {
                return Ok((traj, Termination::Diverged { t, norm }));
            }
            if observer(t, &x) == Flow::Stop {
                return Ok((traj, Termination::Stopped));
            }
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 5.0);
            err_prev = err.max(1e-4);
        } else {
            let fac = 0.9 * err.powf(-1.0 / 5.0);
            h *= fac.clamp(0.1, 0.9);
        }
        h = h.min(controls.max_step);
        if h < controls.min_step && t < t_end {
            return Err(Error::StepUnderflow { t, step: h });
        }
    }
    Ok((traj, Termination::Completed))
}

/// Reference trajectory of `x' = f(x)` from `x0` to `t_end`.
pub fn integrate(model: &dyn SystemModel, x0: &[f64], t_end: f64, controls: &Controls) -> Result<Trajectory> {
    if t_end == 0.0 {
        return Err(Error::Domain("t_end must be non-zero".into()));
    }
    let (traj, term) = integrate_with(model, x0, t_end, controls, |_, _| Flow::Continue)?;
    match term {
        Termination::Diverged { t, norm } => Err(Error::Divergence { t, norm }),
        _ => Ok(traj),
    }
}

/// Least-squares slope of `log(global error)` against `log(h)` when the
/// scheme is iterated `T/h` times from `x0`, measured against a tight
/// reference integration.
pub fn empirical_order(
    model: &dyn SystemModel,
    scheme: &RkScheme,
    x0: &[f64],
    t_final: f64,
    h_list: &[f64],
) -> Result<f64> {
    if h_list.len() < 3 {
        return Err(Error::Domain("empirical_order needs at least three step sizes".into()));
    }
    let reference = integrate(
        model,
        x0,
        t_final,
        &Controls::default().with_tolerances(1e-12, 1e-14).with_max_step(1e-2),
    )?;
    let exact = reference.final_state();
    let mut pts = Vec::with_capacity(h_list.len());
    let mut ws = RkWorkspace::new(x0.len(), scheme.stages());
    for &h in h_list {
        let steps = (t_final / h).round();
        if (steps * h - t_final).abs() > 1e-9 * t_final.abs() {
            return Err(Error::Domain(format!("step {h} does not divide T = {t_final}")));
        }
        let mut x = x0.to_vec();
        for _ in 0..steps as usize {
            ws.step_in_place(model, scheme, &mut x, h)?;
        }
        let err = norm2(&x.iter().zip(exact).map(|(a, b)| a - b).collect::<Vec<_>>());
        pts.push((h.ln(), err.ln()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl SystemModel for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn field_into(&self, x: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0];
        }
        fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, -1.0)
        }
    }

    struct Oscillator;
    impl SystemModel for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn field_into(&self, x: &[f64], dx: &mut [f64]) {
            dx[0] = x[1];
            dx[1] = -x[0];
        }
        fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
        }
    }

    #[test]
    fn improved_euler_hand_value() {
        let y = rk_step(&Decay, &RkScheme::improved_euler(), &[1.0], 0.1).unwrap();
        assert!((y[0] - 0.905).abs() < 1e-15);
    }

    #[test]
    fn kutta3_matches_written_formula() {
        // x + h/6 f(x) + 2h/3 f(x + h/2 f(x)) + h/6 f(x - h f(x) + 2h f(x + h/2 f(x)))
        let f = |x: f64| -x;
        let (x, h) = (1.0, 0.3);
        let k2 = f(x + h / 2.0 * f(x));
        let expect = x + h / 6.0 * f(x) + 2.0 * h / 3.0 * k2 + h / 6.0 * f(x - h * f(x) + 2.0 * h * k2);
        let y = rk_step(&Decay, &RkScheme::kutta3(), &[x], h).unwrap();
        assert!((y[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_step_is_identity() {
        for s in Scheme::ALL {
            let y = rk_step(&Oscillator, &s.tableau(), &[0.3, -1.7], 0.0).unwrap();
            assert_eq!(y, vec![0.3, -1.7]);
        }
    }

    #[test]
    fn tableau_validation() {
        assert!(RkScheme::new(vec![vec![]], vec![0.9]).is_err());
        assert!(RkScheme::new(vec![vec![], vec![]], vec![0.5, 0.5]).is_err());
        assert!(RkScheme::new(vec![vec![], vec![1.0]], vec![0.5, 0.5]).is_ok());
        for s in Scheme::ALL {
            let sum: f64 = s.tableau().weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn blow_up_reports_stage() {
        struct Bad;
        impl SystemModel for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn field_into(&self, x: &[f64], dx: &mut [f64]) {
                dx[0] = if x[0] > 1.0 { f64::NAN } else { 10.0 };
            }
            fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
                DMatrix::zeros(1, 1)
            }
        }
        match rk_step(&Bad, &RkScheme::improved_euler(), &[0.5], 1.0) {
            Err(Error::NumericalBlowUp { stage }) => assert_eq!(stage, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn integrator_matches_exponential() {
        let traj = integrate(&Decay, &[1.0], 2.0, &Controls::default()).unwrap();
        assert!((traj.final_state()[0] - (-2.0f64).exp()).abs() < 1e-9);
        let mid = traj.interpolate(0.7345);
        assert!((mid[0] - (-0.7345f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn interpolation_exact_at_nodes() {
        let traj = integrate(&Oscillator, &[1.0, 0.0], 3.0, &Controls::default()).unwrap();
        for (t, x) in traj.times().iter().zip(traj.states()) {
            assert_eq!(&traj.interpolate(*t), x);
        }
        assert!(traj.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn reverse_time_round_trip() {
        let fwd = integrate(&Oscillator, &[0.4, 0.9], 1.5, &Controls::default()).unwrap();
        let back = integrate(&Oscillator, fwd.final_state(), -1.5, &Controls::default()).unwrap();
        let x = back.final_state();
        assert!((x[0] - 0.4).abs() < 1e-7 && (x[1] - 0.9).abs() < 1e-7);
    }

    #[test]
    fn equilibrium_trajectory_is_constant() {
        let traj = integrate(&Oscillator, &[0.0, 0.0], 10.0, &Controls::default()).unwrap();
        assert!(traj.states().iter().all(|x| x == &vec![0.0, 0.0]));
    }

    #[test]
    fn divergence_is_flagged() {
        struct Blow;
        impl SystemModel for Blow {
            fn dim(&self) -> usize {
                1
            }
            fn field_into(&self, x: &[f64], dx: &mut [f64]) {
                dx[0] = x[0] * x[0];
            }
            fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
                DMatrix::from_element(1, 1, 2.0 * x[0])
            }
        }
        let controls = Controls { escape_radius: 1e3, ..Controls::default() };
        assert!(matches!(
            integrate(&Blow, &[1.0], 2.0, &controls),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn order_on_linear_oscillator() {
        for (s, lo, hi) in [(Scheme::Euler, 0.9, 1.2), (Scheme::Rk2, 1.8, 2.3), (Scheme::Rk3, 2.7, 3.4)] {
            let p = empirical_order(&Oscillator, &s.tableau(), &[1.0, 0.0], 1.0, &[0.1, 0.05, 0.025]).unwrap();
            assert!(p > lo && p < hi, "{s}: {p}");
        }
    }
}
