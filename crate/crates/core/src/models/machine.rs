use nalgebra::DMatrix;

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};

/// Classical reduced multi-machine swing model in center-of-inertia (COI)
/// coordinates.
///
/// State layout is `(θ̃_1..θ̃_n, ω̃_1..ω̃_n)` and the dynamics are
///
/// ```text
/// θ̃_i' = ω̃_i
/// M_i ω̃_i' = P_i - P_ei(θ̃) - (M_i / M_T) P_COI - D_i ω̃_i
/// P_ei = Σ_{j≠i} E_i E_j (B_ij sin θ_ij + G_ij cos θ_ij)
/// P_COI = Σ_i (P_i - P_ei)
/// ```
///
/// With uniform damping ratio `D_i / M_i` the surface `Σ M θ̃ = Σ M ω̃ = 0`
/// is invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMachineModel {
    inertia: Vec<f64>,
    damping: Vec<f64>,
    power: Vec<f64>,
    emf: Vec<f64>,
    b: DMatrix<f64>,
    g: DMatrix<f64>,
    /// `E_i E_j B_ij` and `E_i E_j G_ij`, zero on the diagonal.
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    theta_s: Vec<f64>,
    total_inertia: f64,
    lossless: bool,
}

/// Builder inputs for [`ReducedMachineModel`].
#[derive(Debug, Clone)]
pub struct MachineParams {
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    /// Net injected power `P_i = P_mi - E_i² G_ii`.
    pub power: Vec<f64>,
    pub emf: Vec<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// SEP angles in COI coordinates.
    pub theta_s: Vec<f64>,
}

impl ReducedMachineModel {
    pub fn new(p: MachineParams) -> Result<Self> {
        let n = p.inertia.len();
        if n < 2
            || p.damping.len() != n
            || p.power.len() != n
            || p.emf.len() != n
            || p.theta_s.len() != n
            || p.b.shape() != (n, n)
            || p.g.shape() != (n, n)
        {
            return Err(Error::Domain("inconsistent machine model dimensions".into()));
        }
        if p.inertia.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Domain("all inertias must be positive".into()));
        }
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
        if !sym(&p.b) || !sym(&p.g) {
            return Err(Error::Domain("B and G must be symmetric".into()));
        }
        let mut c = DMatrix::zeros(n, n);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    c[(i, j)] = p.emf[i] * p.emf[j] * p.b[(i, j)];
                    d[(i, j)] = p.emf[i] * p.emf[j] * p.g[(i, j)];
                }
            }
        }
        let lossless = (0..n).all(|i| (0..n).all(|j| i == j || p.g[(i, j)] == 0.0));
        let total_inertia = p.inertia.iter().sum();
        Ok(Self {
            inertia: p.inertia,
            damping: p.damping,
            power: p.power,
            emf: p.emf,
            b: p.b,
            g: p.g,
            c,
            d,
            theta_s: p.theta_s,
            total_inertia,
            lossless,
        })
    }

    pub fn machines(&self) -> usize {
        self.inertia.len()
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn emf(&self) -> &[f64] {
        &self.emf
    }

    pub fn susceptance(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn conductance(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// `E_i E_j B_ij` (zero diagonal).
    pub fn coupling_b(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// `E_i E_j G_ij` (zero diagonal).
    pub fn coupling_g(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn theta_s(&self) -> &[f64] {
        &self.theta_s
    }

    pub fn total_inertia(&self) -> f64 {
        self.total_inertia
    }

    pub fn is_lossless(&self) -> bool {
        self.lossless
    }

    /// Copy with every transfer conductance removed.
    pub fn without_transfer_conductance(&self) -> Self {
        let n = self.machines();
        let mut g = self.g.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g[(i, j)] = 0.0;
                }
            }
        }
        Self::new(MachineParams {
            inertia: self.inertia.clone(),
            damping: self.damping.clone(),
            power: self.power.clone(),
            emf: self.emf.clone(),
            b: self.b.clone(),
            g,
            theta_s: self.theta_s.clone(),
        })
        .expect("valid model stays valid")
    }

    /// Copy with damping `D_i = ratio · M_i`.
    pub fn with_damping_ratio(&self, ratio: f64) -> Self {
        let mut m = self.clone();
        m.damping = self.inertia.iter().map(|mi| ratio * mi).collect();
        m
    }

    /// Copy with a different stored SEP.
    pub fn with_theta_s(&self, theta_s: Vec<f64>) -> Self {
        let mut m = self.clone();
        m.theta_s = theta_s;
        m
    }

    /// Electrical powers `P_ei(θ)`.
    pub fn electrical_power(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.machines();
        let mut pe = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                if i != j {
                    let (s, c) = (theta[i] - theta[j]).sin_cos();
                    acc += self.c[(i, j)] * s + self.d[(i, j)] * c;
                }
            }
            pe[i] = acc;
        }
        pe
    }

    /// Per-machine accelerating power in the COI frame:
    /// `P_i - P_ei - (M_i/M_T) P_COI`.
    pub fn accelerating_power(&self, theta: &[f64]) -> Vec<f64> {
        let pe = self.electrical_power(theta);
        let mismatch: Vec<f64> = self.power.iter().zip(&pe).map(|(p, e)| p - e).collect();
        let p_coi: f64 = mismatch.iter().sum();
        mismatch
            .iter()
            .zip(&self.inertia)
            .map(|(m, mi)| m - mi / self.total_inertia * p_coi)
            .collect()
    }

    /// `∂(P_i - P_ei - (M_i/M_T) P_COI)/∂θ_k`.
    fn accelerating_power_jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let n = self.machines();
        // dpe[(i,k)] = ∂P_ei/∂θ_k
        let mut dpe = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let (s, c) = (theta[i] - theta[j]).sin_cos();
                    let v = self.c[(i, j)] * c - self.d[(i, j)] * s;
                    dpe[(i, i)] += v;
                    dpe[(i, j)] -= v;
                }
            }
        }
        let mut out = -dpe.clone();
        for k in 0..n {
            let dcoi: f64 = -(0..n).map(|i| dpe[(i, k)]).sum::<f64>();
            for i in 0..n {
                out[(i, k)] -= self.inertia[i] / self.total_inertia * dcoi;
            }
        }
        out
    }

    /// Orthonormal basis of `{v ∈ R^n : Σ M_i v_i = 0}`.
    pub fn coi_basis(&self) -> DMatrix<f64> {
        let n = self.machines();
        let m = nalgebra::DVector::from_column_slice(&self.inertia);
        let proj = DMatrix::identity(n, n) - &m * m.transpose() / m.norm_squared();
        let svd = proj.svd(true, false);
        let u = svd.u.expect("requested U");
        let cols: Vec<_> = (0..n)
            .filter(|&k| svd.singular_values[k] > 0.5)
            .map(|k| u.column(k).into_owned())
            .collect();
        DMatrix::from_columns(&cols)
    }

    /// Projects absolute angles onto the COI frame.
    pub fn to_coi(&self, delta: &[f64]) -> Vec<f64> {
        let c: f64 = delta.iter().zip(&self.inertia).map(|(d, m)| d * m).sum::<f64>() / self.total_inertia;
        delta.iter().map(|d| d - c).collect()
    }

    /// The stored SEP as a full state with zero speeds.
    pub fn sep_state(&self) -> Vec<f64> {
        let mut x = self.theta_s.clone();
        x.extend(std::iter::repeat_n(0.0, self.machines()));
        x
    }

    /// The reduced gradient system on angle space used by BCU.
    pub fn gradient_system(&self) -> GradientSystem<'_> {
        GradientSystem { model: self }
    }
}

impl SystemModel for ReducedMachineModel {
    fn dim(&self) -> usize {
        2 * self.machines()
    }

    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        let n = self.machines();
        let (theta, omega) = x.split_at(n);
        let acc = self.accelerating_power(theta);
        for i in 0..n {
            dx[i] = omega[i];
            dx[n + i] = (acc[i] - self.damping[i] * omega[i]) / self.inertia[i];
        }
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.machines();
        let dacc = self.accelerating_power_jacobian(&x[..n]);
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            j[(i, n + i)] = 1.0;
            for k in 0..n {
                j[(n + i, k)] = dacc[(i, k)] / self.inertia[i];
            }
            j[(n + i, n + i)] = -self.damping[i] / self.inertia[i];
        }
        j
    }

    fn invariant_basis(&self) -> Option<DMatrix<f64>> {
        let q = self.coi_basis();
        let n = self.machines();
        let r = q.ncols();
        let mut full = DMatrix::zeros(2 * n, 2 * r);
        full.view_mut((0, 0), (n, r)).copy_from(&q);
        full.view_mut((n, r), (n, r)).copy_from(&q);
        Some(full)
    }

    fn angle_separation(&self, x: &[f64]) -> Option<f64> {
        let theta = &x[..self.machines()];
        let max = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = theta.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(max - min)
    }

    fn is_conservative(&self) -> bool {
        self.lossless && self.damping.iter().all(|&d| d == 0.0)
    }
}

/// `θ_i' = (P_i - P_ei(θ)) / M_i - P_COI / M_T`.
///
/// Equilibria coincide with the swing model's (at zero speed) and the COI
/// angle constraint is preserved. In the lossless case this is the gradient
/// flow of the potential energy in the metric `diag(M)`.
pub struct GradientSystem<'a> {
    model: &'a ReducedMachineModel,
}

impl SystemModel for GradientSystem<'_> {
    fn dim(&self) -> usize {
        self.model.machines()
    }

    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        let acc = self.model.accelerating_power(x);
        for i in 0..dx.len() {
            dx[i] = acc[i] / self.model.inertia[i];
        }
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut j = self.model.accelerating_power_jacobian(x);
        for i in 0..self.model.machines() {
            for k in 0..self.model.machines() {
                j[(i, k)] /= self.model.inertia[i];
            }
        }
        j
    }

    fn invariant_basis(&self) -> Option<DMatrix<f64>> {
        Some(self.model.coi_basis())
    }

    fn angle_separation(&self, x: &[f64]) -> Option<f64> {
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(max - min)
    }
}
