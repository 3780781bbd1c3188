//! Network ingestion, AC power flow and Kron reduction to generator
//! internal nodes.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::machine::{MachineParams, ReducedMachineModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    #[serde(rename = "slack")]
    Slack,
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "PQ")]
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    #[serde(rename = "type")]
    pub kind: BusType,
    /// Voltage magnitude (setpoint for slack/PV, initial guess for PQ), p.u.
    pub vm: f64,
    /// Initial voltage angle, in `angle_unit`.
    #[serde(default)]
    pub va: f64,
    #[serde(default)]
    pub pd: f64,
    #[serde(default)]
    pub qd: f64,
    #[serde(default)]
    pub gs: f64,
    #[serde(default)]
    pub bs: f64,
}

fn in_service_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance, p.u.
    #[serde(default)]
    pub b: f64,
    /// Off-nominal turns ratio on the `from` side; 0 means 1.
    #[serde(default)]
    pub tap: f64,
    #[serde(default = "in_service_default")]
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    /// `M_i = 2H / ω_s`, s²/rad on the system base.
    pub inertia: f64,
    #[serde(default)]
    pub damping: f64,
    pub xd_prime: f64,
    /// Scheduled active power, p.u. (ignored at the slack bus).
    pub pm: f64,
}

/// Bus-branch network with classical generator data. All quantities are per
/// unit on `base_mva`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkData {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    #[serde(default)]
    pub angle_unit: AngleUnit,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl NetworkData {
    /// Parses and validates a network document. Errors name the offending
    /// field path, e.g. `branches[3].x`.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut net: NetworkData = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::InvalidNetwork(format!("{}: {}", e.path(), e.inner())))?;
        if net.angle_unit == AngleUnit::Degrees {
            for b in &mut net.buses {
                b.va = b.va.to_radians();
            }
            net.angle_unit = AngleUnit::Radians;
        }
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: String, msg: &str| Err(Error::InvalidNetwork(format!("{path}: {msg}")));
        if !(self.base_mva > 0.0) {
            return bad("base_mva".into(), "must be positive");
        }
        let mut ids = HashMap::new();
        for (k, b) in self.buses.iter().enumerate() {
            if ids.insert(b.id, k).is_some() {
                return bad(format!("buses[{k}].id"), "duplicate bus id");
            }
            if !(b.vm > 0.0) {
                return bad(format!("buses[{k}].vm"), "voltage magnitude must be positive");
            }
        }
        let slack = self.buses.iter().filter(|b| b.kind == BusType::Slack).count();
        if slack != 1 {
            return bad("buses".into(), &format!("exactly one slack bus required, found {slack}"));
        }
        for (k, br) in self.branches.iter().enumerate() {
            if !ids.contains_key(&br.from) {
                return bad(format!("branches[{k}].from"), "unknown bus");
            }
            if !ids.contains_key(&br.to) {
                return bad(format!("branches[{k}].to"), "unknown bus");
            }
            if !(br.x > 0.0) {
                return bad(format!("branches[{k}].x"), "reactance must be positive");
            }
            if br.r < 0.0 || br.tap < 0.0 {
                return bad(format!("branches[{k}]"), "negative resistance or tap");
            }
        }
        let mut gen_buses = HashMap::new();
        for (k, g) in self.generators.iter().enumerate() {
            let Some(&bi) = ids.get(&g.bus) else {
                return bad(format!("generators[{k}].bus"), "unknown bus");
            };
            if self.buses[bi].kind == BusType::Pq {
                return bad(format!("generators[{k}].bus"), "generator on a PQ bus");
            }
            if gen_buses.insert(g.bus, k).is_some() {
                return bad(format!("generators[{k}].bus"), "more than one generator on bus");
            }
            if !(g.inertia > 0.0) {
                return bad(format!("generators[{k}].inertia"), "inertia must be positive");
            }
            if !(g.xd_prime > 0.0) {
                return bad(format!("generators[{k}].xd_prime"), "reactance must be positive");
            }
            if g.damping < 0.0 {
                return bad(format!("generators[{k}].damping"), "damping must be non-negative");
            }
        }
        for (k, b) in self.buses.iter().enumerate() {
            if b.kind != BusType::Pq && !gen_buses.contains_key(&b.id) {
                return bad(format!("buses[{k}].type"), "slack/PV bus without generator");
            }
        }
        if self.generators.len() < 2 {
            return bad("generators".into(), "at least two generators required");
        }
        // Connectivity over in-service branches.
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (a, b) = (ids[&br.from], ids[&br.to]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return bad(format!("buses[{k}]"), "bus is not connected to the network");
        }
        Ok(())
    }

    fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect()
    }

    /// Bus admittance matrix (branches and bus shunts; loads excluded).
    pub fn ybus(&self) -> DMatrix<Complex64> {
        let idx = self.bus_index();
        let n = self.buses.len();
        let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (f, t) = (idx[&br.from], idx[&br.to]);
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let bc = Complex64::new(0.0, br.b / 2.0);
            let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
            y[(f, f)] += (ys + bc) / (tap * tap);
            y[(t, t)] += ys + bc;
            y[(f, t)] -= ys / tap;
            y[(t, f)] -= ys / tap;
        }
        for (k, b) in self.buses.iter().enumerate() {
            y[(k, k)] += Complex64::new(b.gs, b.bs);
        }
        y
    }
}

/// Solved pre-fault operating point.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    /// Complex bus voltages, in bus order.
    pub voltage: Vec<Complex64>,
    /// Complex generator output, in generator order.
    pub gen_power: Vec<Complex64>,
    /// Internal EMF phasors behind `x'_d`, in generator order.
    pub emf: Vec<Complex64>,
    pub iterations: usize,
    pub mismatch: f64,
}

/// Newton-Raphson AC power flow in polar coordinates.
pub fn solve_power_flow(net: &NetworkData) -> Result<OperatingPoint> {
    let n = net.buses.len();
    let y = net.ybus();
    let g = y.map(|c| c.re);
    let b = y.map(|c| c.im);
    let idx = net.bus_index();

    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for (k, bus) in net.buses.iter().enumerate() {
        p_spec[k] -= bus.pd;
        q_spec[k] -= bus.qd;
    }
    for gen in &net.generators {
        p_spec[idx[&gen.bus]] += gen.pm;
    }
    let mut vm: Vec<f64> = net.buses.iter().map(|b| b.vm).collect();
    let mut va: Vec<f64> = net.buses.iter().map(|b| b.va).collect();

    let ang: Vec<usize> = (0..n).filter(|&k| net.buses[k].kind != BusType::Slack).collect();
    let mag: Vec<usize> = (0..n).filter(|&k| net.buses[k].kind == BusType::Pq).collect();
    let (na, nm) = (ang.len(), mag.len());

    let injections = |vm: &[f64], va: &[f64]| {
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for k in 0..n {
                if y[(i, k)].norm() == 0.0 {
                    continue;
                }
                let (s, c) = (va[i] - va[k]).sin_cos();
                p[i] += vm[i] * vm[k] * (g[(i, k)] * c + b[(i, k)] * s);
                q[i] += vm[i] * vm[k] * (g[(i, k)] * s - b[(i, k)] * c);
            }
        }
        (p, q)
    };

    let mut mismatch = f64::INFINITY;
    for iter in 0..30 {
        let (p, q) = injections(&vm, &va);
        let mut rhs = nalgebra::DVector::zeros(na + nm);
        for (r, &i) in ang.iter().enumerate() {
            rhs[r] = p_spec[i] - p[i];
        }
        for (r, &i) in mag.iter().enumerate() {
            rhs[na + r] = q_spec[i] - q[i];
        }
        mismatch = rhs.amax();
        if mismatch < 1e-12 {
            return Ok(finish(net, &y, &vm, &va, iter, mismatch));
        }
        let mut jac = DMatrix::zeros(na + nm, na + nm);
        // Columns: angles of `ang`, magnitudes of `mag`.
        for (r, &i) in ang.iter().enumerate() {
            for (c, &k) in ang.iter().enumerate() {
                jac[(r, c)] = if i == k {
                    -q[i] - b[(i, i)] * vm[i] * vm[i]
                } else {
                    let (s, co) = (va[i] - va[k]).sin_cos();
                    vm[i] * vm[k] * (g[(i, k)] * s - b[(i, k)] * co)
                };
            }
            for (c, &k) in mag.iter().enumerate() {
                jac[(r, na + c)] = if i == k {
                    p[i] / vm[i] + g[(i, i)] * vm[i]
                } else {
                    let (s, co) = (va[i] - va[k]).sin_cos();
                    vm[i] * (g[(i, k)] * co + b[(i, k)] * s)
                };
            }
        }
        for (r, &i) in mag.iter().enumerate() {
            for (c, &k) in ang.iter().enumerate() {
                jac[(na + r, c)] = if i == k {
                    p[i] - g[(i, i)] * vm[i] * vm[i]
                } else {
                    let (s, co) = (va[i] - va[k]).sin_cos();
                    -vm[i] * vm[k] * (g[(i, k)] * co + b[(i, k)] * s)
                };
            }
            for (c, &k) in mag.iter().enumerate() {
                jac[(na + r, na + c)] = if i == k {
                    q[i] / vm[i] - b[(i, i)] * vm[i]
                } else {
                    let (s, co) = (va[i] - va[k]).sin_cos();
                    vm[i] * (g[(i, k)] * s - b[(i, k)] * co)
                };
            }
        }
        let dx = jac.lu().solve(&rhs).ok_or(Error::PowerFlow(mismatch))?;
        for (r, &i) in ang.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in mag.iter().enumerate() {
            vm[i] += dx[na + r];
        }
    }
    Err(Error::PowerFlow(mismatch))
}

fn finish(net: &NetworkData, y: &DMatrix<Complex64>, vm: &[f64], va: &[f64], iterations: usize, mismatch: f64) -> OperatingPoint {
    let idx = net.bus_index();
    let voltage: Vec<Complex64> = vm.iter().zip(va).map(|(m, a)| Complex64::from_polar(*m, *a)).collect();
    let current = y * nalgebra::DVector::from_column_slice(&voltage);
    let mut gen_power = Vec::new();
    let mut emf = Vec::new();
    for gen in &net.generators {
        let k = idx[&gen.bus];
        let bus = &net.buses[k];
        let s_inj = voltage[k] * current[k].conj();
        let s_gen = s_inj + Complex64::new(bus.pd, bus.qd);
        let i_gen = (s_gen / voltage[k]).conj();
        emf.push(voltage[k] + Complex64::new(0.0, gen.xd_prime) * i_gen);
        gen_power.push(s_gen);
    }
    OperatingPoint { voltage, gen_power, emf, iterations, mismatch }
}

/// How transfer conductances of the reduced network are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Losses {
    /// Keep `G_ij` from the reduction.
    Keep,
    /// Zero every `G_ij`, `i ≠ j`; mechanical powers are re-balanced so the
    /// operating point stays an equilibrium.
    DropTransfer,
}

/// A network with its operating point solved once, ready for repeated
/// reductions (pre-fault and one per fault location).
#[derive(Debug, Clone)]
pub struct PreparedNetwork {
    net: NetworkData,
    ybus: DMatrix<Complex64>,
    op: OperatingPoint,
}

impl PreparedNetwork {
    pub fn new(net: NetworkData) -> Result<Self> {
        net.validate()?;
        let op = solve_power_flow(&net)?;
        let ybus = net.ybus();
        Ok(Self { net, ybus, op })
    }

    pub fn network(&self) -> &NetworkData {
        &self.net
    }

    pub fn operating_point(&self) -> &OperatingPoint {
        &self.op
    }

    /// Kron-reduced admittance seen from the generator internal nodes, with
    /// loads as constant admittances at the operating point and `faulted`
    /// (if any) grounded.
    pub fn reduced_admittance(&self, faulted: Option<usize>) -> Result<DMatrix<Complex64>> {
        let idx = self.net.bus_index();
        if let Some(fb) = faulted {
            match idx.get(&fb) {
                Some(&k) if self.net.buses[k].kind != BusType::Slack => {}
                _ => return Err(Error::InvalidFault(fb)),
            }
        }
        let keep: Vec<usize> = (0..self.net.buses.len())
            .filter(|&k| Some(self.net.buses[k].id) != faulted)
            .collect();
        let pos: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(p, &k)| (k, p)).collect();
        let nb = keep.len();
        let ng = self.net.generators.len();

        let mut ybb = DMatrix::from_element(nb, nb, Complex64::new(0.0, 0.0));
        for (p, &k) in keep.iter().enumerate() {
            for (q, &l) in keep.iter().enumerate() {
                ybb[(p, q)] = self.ybus[(k, l)];
            }
            let bus = &self.net.buses[k];
            let v2 = self.op.voltage[k].norm_sqr();
            ybb[(p, p)] += Complex64::new(bus.pd, -bus.qd) / v2;
        }
        let mut yee = DMatrix::from_element(ng, ng, Complex64::new(0.0, 0.0));
        let mut yeb = DMatrix::from_element(ng, nb, Complex64::new(0.0, 0.0));
        for (i, gen) in self.net.generators.iter().enumerate() {
            let yd = Complex64::new(1.0, 0.0) / Complex64::new(0.0, gen.xd_prime);
            yee[(i, i)] = yd;
            // A generator on the grounded bus sees a short behind x'_d.
            if let Some(&p) = pos.get(&idx[&gen.bus]) {
                yeb[(i, p)] = -yd;
                ybb[(p, p)] += yd;
            }
        }
        let lu = ybb.lu();
        let x = lu.solve(&yeb.transpose()).ok_or(Error::DegenerateNetwork)?;
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::DegenerateNetwork);
        }
        Ok(yee - &yeb * x)
    }

    /// Reduced classical machine model. The stored SEP is the pre-fault
    /// operating point in COI coordinates.
    pub fn reduce(&self, faulted: Option<usize>, losses: Losses) -> Result<ReducedMachineModel> {
        let yred = self.reduced_admittance(faulted)?;
        let ng = self.net.generators.len();
        let emf: Vec<f64> = self.op.emf.iter().map(|e| e.norm()).collect();
        let delta: Vec<f64> = self.op.emf.iter().map(|e| e.arg()).collect();
        let b = yred.map(|c| c.im);
        let mut g = yred.map(|c| c.re);
        // Symmetrize round-off.
        let b = (&b + b.transpose()) * 0.5;
        g = (&g + g.transpose()) * 0.5;

        let mech: Vec<f64> = match losses {
            Losses::Keep => self.op.gen_power.iter().map(|s| s.re).collect(),
            Losses::DropTransfer => {
                let pre = self.reduced_admittance(None)?;
                (0..ng)
                    .map(|i| {
                        let mut p = emf[i] * emf[i] * pre[(i, i)].re;
                        for j in 0..ng {
                            if j != i {
                                p += emf[i] * emf[j] * pre[(i, j)].im * (delta[i] - delta[j]).sin();
                            }
                        }
                        p
                    })
                    .collect()
            }
        };
        if losses == Losses::DropTransfer {
            for i in 0..ng {
                for j in 0..ng {
                    if i != j {
                        g[(i, j)] = 0.0;
                    }
                }
            }
        }
        let power: Vec<f64> = (0..ng).map(|i| mech[i] - emf[i] * emf[i] * g[(i, i)]).collect();
        let inertia: Vec<f64> = self.net.generators.iter().map(|g| g.inertia).collect();
        let damping: Vec<f64> = self.net.generators.iter().map(|g| g.damping).collect();
        let m_t: f64 = inertia.iter().sum();
        let c: f64 = delta.iter().zip(&inertia).map(|(d, m)| d * m).sum::<f64>() / m_t;
        let theta_s = delta.iter().map(|d| d - c).collect();
        ReducedMachineModel::new(MachineParams { inertia, damping, power, emf, b, g, theta_s })
    }

    /// Largest mismatch between the generator currents of the full-network
    /// solution and `Y_red E` from the reduced network.
    pub fn reduction_residual(&self) -> Result<f64> {
        let yred = self.reduced_admittance(None)?;
        let idx = self.net.bus_index();
        let e = nalgebra::DVector::from_column_slice(&self.op.emf);
        let i = &yred * &e;
        Ok(self
            .net
            .generators
            .iter()
            .enumerate()
            .map(|(k, gen)| {
                let v = self.op.voltage[idx[&gen.bus]];
                (i[k] - (self.op.gen_power[k] / v).conj()).norm()
            })
            .fold(0.0, f64::max))
    }

    pub fn generator_buses(&self) -> Vec<usize> {
        self.net.generators.iter().map(|g| g.bus).collect()
    }
}

/// Pre-fault reduction of `net` keeping transfer conductances.
pub fn kron_reduce(net: &NetworkData) -> Result<ReducedMachineModel> {
    PreparedNetwork::new(net.clone())?.reduce(None, Losses::Keep)
}

/// Fault-on reduction with `bus` grounded.
pub fn apply_fault(net: &NetworkData, bus: usize) -> Result<ReducedMachineModel> {
    PreparedNetwork::new(net.clone())?.reduce(Some(bus), Losses::Keep)
}
