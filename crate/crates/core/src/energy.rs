//! Energy and Lyapunov functions paired with the models, plus sublevel-set
//! membership.

use crate::dynamics::{integrate_with, Controls, Flow, SystemModel};
use crate::error::Result;
use crate::grid::Grid;
use crate::models::machine::ReducedMachineModel;
use crate::models::scenario::MachineSystem;
use crate::models::smib::Smib;

/// Below this `|θ_ij - θ_ij^s|` the lossy path term uses its analytic limit.
pub const RATIO_GUARD: f64 = 1e-8;

/// Scalar energy `V(x)` with its gradient.
pub trait EnergyFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// `(kinetic, potential)` for second-order models.
    fn split(&self, _x: &[f64]) -> Option<(f64, f64)> {
        None
    }
}

impl<T: EnergyFunction + ?Sized> EnergyFunction for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn split(&self, x: &[f64]) -> Option<(f64, f64)> {
        (**self).split(x)
    }
}

/// `4.0035 - 2cos x1 - cos x2 - cos(x1 - x2) - 0.02 x1 - 0.1 x2`.
pub fn energy_3machine(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    4.0035 - 2.0 * x1.cos() - x2.cos() - (x1 - x2).cos() - 0.02 * x1 - 0.1 * x2
}

/// Energy of the three-machine system. Its field is `-½∇V`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThreeMachineEnergy;

impl EnergyFunction for ThreeMachineEnergy {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        energy_3machine(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (x1, x2) = (x[0], x[1]);
        let s12 = (x1 - x2).sin();
        vec![2.0 * x1.sin() + s12 - 0.02, x2.sin() - s12 - 0.1]
    }
}

/// `‖x - x_s‖²`.
pub fn lyapunov_3d(x: &[f64], center: &[f64]) -> f64 {
    x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Debug, Clone)]
pub struct QuadraticLyapunov {
    pub center: Vec<f64>,
}

impl QuadraticLyapunov {
    pub fn new(center: Vec<f64>) -> Self {
        Self { center }
    }
}

impl EnergyFunction for QuadraticLyapunov {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        lyapunov_3d(x, &self.center)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, b)| 2.0 * (a - b)).collect()
    }
}

/// `½Mω² - P_m(δ - δ0) - P_max(cos δ - cos δ0)`.
#[derive(Debug, Clone, Copy)]
pub struct SmibEnergy {
    pub params: Smib,
}

impl SmibEnergy {
    pub fn new(params: Smib) -> Self {
        Self { params }
    }

    pub fn potential(&self, delta: f64) -> f64 {
        let p = &self.params;
        let d0 = p.stable_angle();
        -p.mech_power * (delta - d0) - p.max_power * (delta.cos() - d0.cos())
    }
}

impl EnergyFunction for SmibEnergy {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.params.inertia * x[1] * x[1] + self.potential(x[0])
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.params;
        vec![-p.mech_power + p.max_power * x[0].sin(), p.inertia * x[1]]
    }
    fn split(&self, x: &[f64]) -> Option<(f64, f64)> {
        Some((0.5 * self.params.inertia * x[1] * x[1], self.potential(x[0])))
    }
}

/// Multi-machine energy in COI coordinates:
///
/// ```text
/// V = ½ Σ M_i ω̃_i² - Σ P_i (θ_i - θ_i^s)
///     - Σ_{i<j} [ C_ij (cos θ_ij - cos θ_ij^s)
///                 - D_ij (θ_i + θ_j - θ_i^s - θ_j^s)/(θ_ij - θ_ij^s) (sin θ_ij - sin θ_ij^s) ]
/// ```
///
/// with `C_ij = E_i E_j B_ij`, `D_ij = E_i E_j G_ij`. The `D_ij` term uses
/// the straight-line path approximation.
#[derive(Debug, Clone)]
pub struct MultiMachineEnergy {
    model: ReducedMachineModel,
    include_transfer_conductance: bool,
}

impl MultiMachineEnergy {
    /// Uses every term of the model, including transfer conductances.
    pub fn new(model: &ReducedMachineModel) -> Self {
        Self { model: model.clone(), include_transfer_conductance: !model.is_lossless() }
    }

    /// Drops the `D_ij` terms regardless of the model.
    pub fn lossless(model: &ReducedMachineModel) -> Self {
        Self { model: model.clone(), include_transfer_conductance: false }
    }

    pub fn model(&self) -> &ReducedMachineModel {
        &self.model
    }

    pub fn machines(&self) -> usize {
        self.model.machines()
    }

    pub fn kinetic(&self, omega: &[f64]) -> f64 {
        0.5 * omega.iter().zip(self.model.inertia()).map(|(w, m)| m * w * w).sum::<f64>()
    }

    pub fn potential(&self, theta: &[f64]) -> f64 {
        let m = &self.model;
        let n = m.machines();
        let ts = m.theta_s();
        let c = m.coupling_b();
        let d = m.coupling_g();
        let mut v = -(0..n).map(|i| m.power()[i] * (theta[i] - ts[i])).sum::<f64>();
        for i in 0..n {
            for j in i + 1..n {
                let a = theta[i] - theta[j];
                let a_s = ts[i] - ts[j];
                v -= c[(i, j)] * (a.cos() - a_s.cos());
                if self.include_transfer_conductance && d[(i, j)] != 0.0 {
                    let sum = theta[i] + theta[j] - ts[i] - ts[j];
                    v += d[(i, j)] * sum * path_ratio(a, a_s).0;
                }
            }
        }
        v
    }

    /// `∂V/∂θ`.
    pub fn potential_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let m = &self.model;
        let n = m.machines();
        let ts = m.theta_s();
        let c = m.coupling_b();
        let d = m.coupling_g();
        let mut g: Vec<f64> = m.power().iter().map(|p| -p).collect();
        for i in 0..n {
            for j in i + 1..n {
                let a = theta[i] - theta[j];
                let s = c[(i, j)] * a.sin();
                g[i] += s;
                g[j] -= s;
                if self.include_transfer_conductance && d[(i, j)] != 0.0 {
                    let a_s = ts[i] - ts[j];
                    let sum = theta[i] + theta[j] - ts[i] - ts[j];
                    let (q, dq) = path_ratio(a, a_s);
                    g[i] += d[(i, j)] * (q + sum * dq);
                    g[j] += d[(i, j)] * (q - sum * dq);
                }
            }
        }
        g
    }
}

/// `q(a) = (sin a - sin a_s)/(a - a_s)` and `dq/da`. Below [`RATIO_GUARD`]
/// the value switches to its analytic limit; elsewhere cancellation-free
/// forms are used.
fn path_ratio(a: f64, a_s: f64) -> (f64, f64) {
    let u = a - a_s;
    let (s, c) = a_s.sin_cos();
    let q = if u.abs() < RATIO_GUARD {
        c - 0.5 * u * s
    } else {
        let h = 0.5 * u;
        c * u.sin() / u - s * 2.0 * h.sin() * h.sin() / u
    };
    let dq = if u.abs() < 1e-3 {
        let u2 = u * u;
        c * (-u / 3.0 + u * u2 / 30.0) - s * (0.5 - u2 / 8.0)
    } else {
        (a.cos() * u - (a.sin() - s)) / (u * u)
    };
    (q, dq)
}

impl EnergyFunction for MultiMachineEnergy {
    fn dim(&self) -> usize {
        2 * self.machines()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let n = self.machines();
        self.kinetic(&x[n..]) + self.potential(&x[..n])
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.machines();
        let mut g = self.potential_gradient(&x[..n]);
        g.extend(x[n..].iter().zip(self.model.inertia()).map(|(w, m)| m * w));
        g
    }
    fn split(&self, x: &[f64]) -> Option<(f64, f64)> {
        let n = self.machines();
        Some((self.kinetic(&x[n..]), self.potential(&x[..n])))
    }
}

pub fn energy_multimachine(state: &[f64], model: &ReducedMachineModel) -> f64 {
    MultiMachineEnergy::new(model).value(state)
}

pub fn potential_energy(theta: &[f64], model: &ReducedMachineModel) -> f64 {
    MultiMachineEnergy::new(model).potential(theta)
}

/// Energy of a [`MachineSystem`], exposing the kinetic/potential split used
/// by the direct methods.
#[derive(Debug, Clone)]
pub enum SwingEnergy {
    Smib(SmibEnergy),
    Multi(MultiMachineEnergy),
}

impl SwingEnergy {
    /// Energy paired with a post-fault system. Lossy models get the
    /// path-dependent conductance terms.
    pub fn for_system(sys: &MachineSystem) -> Self {
        match sys {
            MachineSystem::Smib(p) => SwingEnergy::Smib(SmibEnergy::new(*p)),
            MachineSystem::Multi(m) => SwingEnergy::Multi(MultiMachineEnergy::new(m)),
        }
    }

    pub fn angles(&self) -> usize {
        match self {
            SwingEnergy::Smib(_) => 1,
            SwingEnergy::Multi(e) => e.machines(),
        }
    }

    pub fn potential(&self, theta: &[f64]) -> f64 {
        match self {
            SwingEnergy::Smib(e) => e.potential(theta[0]),
            SwingEnergy::Multi(e) => e.potential(theta),
        }
    }

    pub fn potential_gradient(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            SwingEnergy::Smib(e) => vec![e.gradient(&[theta[0], 0.0])[0]],
            SwingEnergy::Multi(e) => e.potential_gradient(theta),
        }
    }
}

impl EnergyFunction for SwingEnergy {
    fn dim(&self) -> usize {
        2 * self.angles()
    }
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            SwingEnergy::Smib(e) => e.value(x),
            SwingEnergy::Multi(e) => e.value(x),
        }
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SwingEnergy::Smib(e) => e.gradient(x),
            SwingEnergy::Multi(e) => e.gradient(x),
        }
    }
    fn split(&self, x: &[f64]) -> Option<(f64, f64)> {
        match self {
            SwingEnergy::Smib(e) => e.split(x),
            SwingEnergy::Multi(e) => e.split(x),
        }
    }
}

/// The connected component of `{V < l}` containing `seed`.
pub struct LevelSet<'a> {
    pub energy: &'a dyn EnergyFunction,
    pub level: f64,
    pub seed: Vec<f64>,
}

impl<'a> LevelSet<'a> {
    pub fn new(energy: &'a dyn EnergyFunction, level: f64, seed: Vec<f64>) -> Self {
        Self { energy, level, seed }
    }

    /// Grid mask of the seed component, by flood fill over nodes with
    /// `V < l`.
    pub fn grid_component(&self, grid: &Grid) -> Vec<bool> {
        let inside = grid.evaluate(|x| self.energy.value(x) < self.level);
        grid.component(&inside, grid.nearest(&self.seed))
    }

    /// Membership by steepest descent of `V` from `x`: inside if the flow
    /// reaches `radius` of the seed (it never climbs above `V(x)`).
    pub fn contains_by_descent(&self, x: &[f64], radius: f64) -> Result<bool> {
        if self.energy.value(x) >= self.level {
            return Ok(false);
        }
        let descent = Descent(self.energy);
        let mut reached = false;
        let seed = &self.seed;
        let controls = Controls::default().with_max_step(0.5);
        integrate_with(&descent, x, 200.0, &controls, |_, y| {
            let d = y.iter().zip(seed).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d < radius {
                reached = true;
                Flow::Stop
            } else {
                Flow::Continue
            }
        })?;
        Ok(reached)
    }
}

struct Descent<'a>(&'a dyn EnergyFunction);

impl SystemModel for Descent<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        for (d, g) in dx.iter_mut().zip(self.0.gradient(x)) {
            *d = -g;
        }
    }
    fn jacobian(&self, x: &[f64]) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut j = nalgebra::DMatrix::zeros(n, n);
        let h = 1e-6;
        let mut xp = x.to_vec();
        for k in 0..n {
            xp[k] = x[k] + h;
            let gp = self.0.gradient(&xp);
            xp[k] = x[k] - h;
            let gm = self.0.gradient(&xp);
            xp[k] = x[k];
            for i in 0..n {
                j[(i, k)] = -(gp[i] - gm[i]) / (2.0 * h);
            }
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Bounds;
    use crate::models::three_machine::three_machine_field;

    #[test]
    fn three_machine_origin_value() {
        assert!((energy_3machine(&[0.0, 0.0]) - 0.0035).abs() < 1e-15);
    }

    #[test]
    fn three_machine_field_is_half_negative_gradient() {
        for x in [[0.3, -1.2], [2.0, 2.5], [-4.0, 0.7]] {
            let g = ThreeMachineEnergy.gradient(&x);
            let f = three_machine_field(&x);
            assert!((f[0] + 0.5 * g[0]).abs() < 1e-15);
            assert!((f[1] + 0.5 * g[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn smib_energy_zero_at_sep_and_split_sums() {
        let e = SmibEnergy::new(Smib::default());
        let d0 = Smib::default().stable_angle();
        assert!(e.value(&[d0, 0.0]).abs() < 1e-15);
        let x = [1.1, 2.3];
        let (k, p) = e.split(&x).unwrap();
        assert!((k + p - e.value(&x)).abs() < 1e-15);
    }

    #[test]
    fn path_ratio_limit_is_continuous() {
        let a_s = 0.7;
        let (q0, dq0) = path_ratio(a_s + 0.5 * RATIO_GUARD, a_s);
        let (q1, dq1) = path_ratio(a_s + 1e-5, a_s);
        assert!((q0 - q1).abs() < 1e-5);
        assert!((dq0 - dq1).abs() < 1e-5);
        assert!((q0 - a_s.cos()).abs() < 1e-8);
    }

    #[test]
    fn quadratic_level_component() {
        let v = QuadraticLyapunov::new(vec![0.0, 0.0]);
        let set = LevelSet::new(&v, 1.0, vec![0.0, 0.0]);
        let grid = Grid::uniform(Bounds::square(2.0, 2), 41).unwrap();
        let mask = set.grid_component(&grid);
        let count = mask.iter().filter(|&&b| b).count() as f64;
        let area = count * grid.spacing(0) * grid.spacing(1);
        assert!((area - std::f64::consts::PI).abs() < 0.3, "area {area}");
        assert!(set.contains_by_descent(&[0.5, 0.5], 1e-3).unwrap());
        assert!(!set.contains_by_descent(&[1.0, 1.0], 1e-3).unwrap());
    }
}
