//! Equilibrium location, classification, enumeration and boundary tests.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_with, Controls, Flow, SystemModel, Termination};
use crate::energy::EnergyFunction;
use crate::error::{Error, Result};
use crate::grid::{par_map, Bounds, Grid};

pub const HYPERBOLICITY_MARGIN: f64 = 1e-8;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEDUP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Asep,
    /// Type-k UEP: `k` eigenvalues with positive real part.
    Uep(usize),
}

impl EquilibriumKind {
    pub fn unstable_dim(self) -> usize {
        match self {
            EquilibriumKind::Asep => 0,
            EquilibriumKind::Uep(k) => k,
        }
    }
}

impl std::fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EquilibriumKind::Asep => write!(f, "ASEP"),
            EquilibriumKind::Uep(k) => write!(f, "type-{k} UEP"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub state: Vec<f64>,
    /// Euclidean norm of `f(state)`.
    pub residual: f64,
    /// Spectrum of the Jacobian, restricted to the model's invariant
    /// subspace when it has one.
    #[serde(with = "complex_list")]
    pub eigenvalues: Vec<Complex64>,
    pub kind: EquilibriumKind,
    pub on_boundary: Boundary,
    pub energy: Option<f64>,
}

impl EquilibriumPoint {
    /// Builds and classifies an equilibrium at `state`.
    pub fn classify(model: &dyn SystemModel, state: Vec<f64>) -> Result<Self> {
        let residual = norm(&model.field(&state));
        let eigenvalues = restricted_spectrum(model, &state);
        let margin = eigenvalues.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
        if margin < HYPERBOLICITY_MARGIN {
            return Err(Error::NonHyperbolic { margin });
        }
        let k = eigenvalues.iter().filter(|l| l.re > 0.0).count();
        let kind = if k == 0 { EquilibriumKind::Asep } else { EquilibriumKind::Uep(k) };
        Ok(Self { state, residual, eigenvalues, kind, on_boundary: Boundary::Unknown, energy: None })
    }

    pub fn with_energy(mut self, energy: &dyn EnergyFunction) -> Self {
        self.energy = Some(energy.value(&self.state));
        self
    }

    pub fn is_asep(&self) -> bool {
        self.kind == EquilibriumKind::Asep
    }

    pub fn hyperbolicity_margin(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min)
    }

    /// Real unit directions spanning the unstable eigenspace, in full state
    /// coordinates.
    pub fn unstable_directions(&self, model: &dyn SystemModel) -> Vec<Vec<f64>> {
        let (j, q) = restricted_jacobian(model, &self.state);
        let r = j.nrows();
        let jc = j.map(|v| Complex64::new(v, 0.0));
        let mut out = Vec::new();
        for lambda in self.eigenvalues.iter().filter(|l| l.re > 0.0 && l.im >= 0.0) {
            let shifted = &jc - DMatrix::<Complex64>::identity(r, r) * *lambda;
            let svd = shifted.svd(false, true);
            let v_t = svd.v_t.expect("requested V^T");
            let (kmin, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (k, s)| if *s < acc.1 { (k, *s) } else { acc });
            let v: Vec<Complex64> = v_t.row(kmin).iter().map(|c| c.conj()).collect();
            let mut parts = vec![v.iter().map(|c| c.re).collect::<Vec<f64>>()];
            if lambda.im.abs() > 1e-12 {
                parts.push(v.iter().map(|c| c.im).collect());
            }
            for p in parts {
                let full: Vec<f64> = match &q {
                    Some(q) => (q * DVector::from_vec(p)).iter().copied().collect(),
                    None => p,
                };
                let n = norm(&full);
                if n > 1e-12 {
                    out.push(full.iter().map(|v| v / n).collect());
                }
            }
        }
        out
    }
}

mod complex_list {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn restricted_jacobian(model: &dyn SystemModel, x: &[f64]) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let j = model.jacobian(x);
    match model.invariant_basis() {
        Some(q) => (q.transpose() * &j * &q, Some(q)),
        None => (j, None),
    }
}

fn restricted_spectrum(model: &dyn SystemModel, x: &[f64]) -> Vec<Complex64> {
    let (j, _) = restricted_jacobian(model, x);
    let mut ev: Vec<Complex64> = j.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_NEWTON_TOL, max_iter: 100 }
    }
}

/// Damped Newton iteration on `f(x) = 0` with an Armijo backtracking line
/// search on `½‖f‖²`. Works inside the model's invariant subspace when it has
/// one, so the guess is projected onto it first.
pub fn newton(model: &dyn SystemModel, guess: &[f64], opts: NewtonOptions) -> Result<Vec<f64>> {
    let q = model.invariant_basis();
    let lift = |y: &DVector<f64>| -> Vec<f64> {
        match &q {
            Some(q) => (q * y).iter().copied().collect(),
            None => y.iter().copied().collect(),
        }
    };
    let restrict = |v: Vec<f64>| -> DVector<f64> {
        let v = DVector::from_vec(v);
        match &q {
            Some(q) => q.transpose() * v,
            None => v,
        }
    };
    let mut y = restrict(guess.to_vec());
    let mut x = lift(&y);
    let mut fx = model.field(&x);
    let mut res = norm(&fx);
    let mut best = (res, x.clone());
    for iter in 0..opts.max_iter {
        if res < opts.tol {
            return Ok(x);
        }
        let (j, _) = restricted_jacobian(model, &x);
        let g = restrict(fx.clone());
        let step = match j.clone().lu().solve(&(-&g)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => j.clone().svd(true, true).solve(&(-&g), 1e-14).map_err(|_| Error::NewtonDivergence {
                iterations: iter,
                residual: best.0,
                best: best.1.clone(),
            })?,
        };
        let phi = 0.5 * res * res;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let y_try = &y + &step * alpha;
            let x_try = lift(&y_try);
            let f_try = model.field(&x_try);
            let r_try = norm(&f_try);
            if r_try.is_finite() && 0.5 * r_try * r_try <= phi * (1.0 - 2e-4 * alpha) {
                y = y_try;
                x = x_try;
                fx = f_try;
                res = r_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        if res < best.0 {
            best = (res, x.clone());
        }
    }
    if res < opts.tol {
        return Ok(x);
    }
    Err(Error::NewtonDivergence { iterations: opts.max_iter, residual: best.0, best: best.1 })
}

/// Newton from `guess`, then classification.
pub fn find_equilibrium(model: &dyn SystemModel, guess: &[f64], tol: f64) -> Result<EquilibriumPoint> {
    if guess.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("guess must be finite".into()));
    }
    let x = newton(model, guess, NewtonOptions { tol, ..NewtonOptions::default() })?;
    EquilibriumPoint::classify(model, x)
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub points: Vec<EquilibriumPoint>,
    /// Starts that failed to converge or hit a non-hyperbolic point.
    pub failed_starts: usize,
}

/// Multistart Newton from a `grid_density^d` grid over `bounds`. When
/// `bounds` covers fewer coordinates than the model (angle-only grids for
/// swing models), the remaining coordinates start at zero. Results outside
/// `bounds` are dropped and duplicates within [`DEDUP_TOL`] (max norm) are
/// merged, keeping the first in grid order.
pub fn enumerate_equilibria(model: &dyn SystemModel, bounds: &Bounds, grid_density: usize) -> Result<Enumeration> {
    let grid = Grid::uniform(bounds.clone(), grid_density.max(2))?;
    let dim = model.dim();
    if bounds.dim() > dim {
        return Err(Error::Domain("bounds have more coordinates than the model".into()));
    }
    let slack = 1e-9;
    let results = par_map(grid.len(), |k| {
        let mut guess = grid.point(k);
        guess.resize(dim, 0.0);
        find_equilibrium(model, &guess, DEFAULT_NEWTON_TOL).ok()
    });
    let mut points: Vec<EquilibriumPoint> = Vec::new();
    let mut failed = 0;
    for r in results {
        let Some(p) = r else {
            failed += 1;
            continue;
        };
        let head = &p.state[..bounds.dim()];
        let inside = head
            .iter()
            .zip(bounds.lower.iter().zip(&bounds.upper))
            .all(|(v, (l, u))| *v >= l - slack && *v <= u + slack);
        if !inside {
            continue;
        }
        let dup = points
            .iter()
            .any(|q| q.state.iter().zip(&p.state).all(|(a, b)| (a - b).abs() <= DEDUP_TOL));
        if !dup {
            points.push(p);
        }
    }
    Ok(Enumeration { points, failed_starts: failed })
}

#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub epsilon: f64,
    pub horizon: f64,
    /// Distance to the ASEP that counts as convergence.
    pub capture_radius: f64,
    /// Angle separation beyond which a swing trajectory counts as escaped.
    pub separation_limit: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self { epsilon: 1e-5, horizon: 100.0, capture_radius: 1e-3, separation_limit: 3.0 * std::f64::consts::PI }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Converged,
    Elsewhere,
    Failed,
}

/// Forward fate of `x0`: reaches `target`, ends elsewhere (escape, another
/// equilibrium, horizon) or the integration failed.
pub fn shoot(model: &dyn SystemModel, x0: &[f64], target: &[f64], opts: &ShootingOptions) -> Fate {
    let controls = Controls::default().with_max_step(0.25);
    let mut fate = Fate::Elsewhere;
    let mut dx = vec![0.0; model.dim()];
    let run = integrate_with(model, x0, opts.horizon, &controls, |_, x| {
        let d = x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if d < opts.capture_radius {
            fate = Fate::Converged;
            return Flow::Stop;
        }
        if model.angle_separation(x).is_some_and(|s| s > opts.separation_limit) {
            return Flow::Stop;
        }
        model.field_into(x, &mut dx);
        if norm(&dx) < 1e-9 {
            // Settled at some other equilibrium.
            return Flow::Stop;
        }
        Flow::Continue
    });
    match run {
        Ok((_, Termination::Diverged { .. })) => Fate::Elsewhere,
        Ok(_) => fate,
        Err(_) => Fate::Failed,
    }
}

/// Tests whether a UEP lies on the stability boundary of `asep` by shooting
/// along its unstable manifold: `yes` if some perturbation `±ε v` of an
/// unstable eigenvector converges to `asep`.
pub fn on_stability_boundary(
    model: &dyn SystemModel,
    uep: &EquilibriumPoint,
    asep: &EquilibriumPoint,
    opts: &ShootingOptions,
) -> Boundary {
    if uep.is_asep() {
        return Boundary::No;
    }
    let mut any_failed = false;
    for v in uep.unstable_directions(model) {
        for sign in [1.0, -1.0] {
            let x0: Vec<f64> = uep.state.iter().zip(&v).map(|(a, b)| a + sign * opts.epsilon * b).collect();
            match shoot(model, &x0, &asep.state, opts) {
                Fate::Converged => return Boundary::Yes,
                Fate::Failed => any_failed = true,
                Fate::Elsewhere => {}
            }
        }
    }
    if any_failed {
        Boundary::Unknown
    } else {
        Boundary::No
    }
}

/// Fills `on_boundary` for every UEP in `points` (ASEPs get `no`).
pub fn mark_boundary(model: &dyn SystemModel, points: &mut [EquilibriumPoint], asep: &EquilibriumPoint, opts: &ShootingOptions) {
    let flags = par_map(points.len(), |k| on_stability_boundary(model, &points[k], asep, opts));
    for (p, f) in points.iter_mut().zip(flags) {
        p.on_boundary = f;
    }
}

/// The boundary UEP of lowest energy; ties go to the one nearest `asep`.
pub fn closest_uep(energy: &dyn EnergyFunction, asep: &EquilibriumPoint, candidates: &[EquilibriumPoint]) -> Result<EquilibriumPoint> {
    let dist = |p: &EquilibriumPoint| norm(&p.state.iter().zip(&asep.state).map(|(a, b)| a - b).collect::<Vec<_>>());
    candidates
        .iter()
        .filter(|p| !p.is_asep() && p.on_boundary == Boundary::Yes)
        .map(|p| (energy.value(&p.state), dist(p), p))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.state.partial_cmp(&b.2.state).unwrap_or(std::cmp::Ordering::Equal)))
        .map(|(v, _, p)| EquilibriumPoint { energy: Some(v), ..p.clone() })
        .ok_or(Error::NoBoundaryUep)
}
