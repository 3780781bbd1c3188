use nalgebra::DMatrix;

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::models::machine::ReducedMachineModel;
use crate::models::network::{Losses, NetworkData, PreparedNetwork};
use crate::models::smib::Smib;

/// Bundled copy of the 39-bus New England test system with classical
/// machine data.
pub const IEEE39_JSON: &str = include_str!("../../data/ieee39.json");

/// Fault buses used for the 39-bus CCT study.
pub const IEEE39_FAULT_BUSES: [usize; 6] = [3, 9, 14, 20, 31, 39];

/// Second-order power-system models that the direct methods operate on.
#[derive(Debug, Clone, PartialEq)]
pub enum MachineSystem {
    Smib(Smib),
    Multi(ReducedMachineModel),
}

impl MachineSystem {
    /// Number of rotor angles (half the state dimension).
    pub fn angles(&self) -> usize {
        match self {
            MachineSystem::Smib(_) => 1,
            MachineSystem::Multi(m) => m.machines(),
        }
    }

    /// Zero-speed state from an angle vector.
    pub fn embed_angles(&self, theta: &[f64]) -> Vec<f64> {
        let mut x = theta.to_vec();
        x.extend(std::iter::repeat_n(0.0, self.angles()));
        x
    }

    /// The reduced gradient system on angle space.
    pub fn gradient_field(&self) -> Box<dyn SystemModel + '_> {
        match self {
            MachineSystem::Smib(s) => Box::new(SmibGradient(*s)),
            MachineSystem::Multi(m) => Box::new(m.gradient_system()),
        }
    }

    pub fn as_model(&self) -> &dyn SystemModel {
        self
    }

    /// Stored stable equilibrium angles.
    pub fn sep_angles(&self) -> Vec<f64> {
        match self {
            MachineSystem::Smib(s) => vec![s.stable_angle()],
            MachineSystem::Multi(m) => m.theta_s().to_vec(),
        }
    }

    pub fn sep_state(&self) -> Vec<f64> {
        self.embed_angles(&self.sep_angles())
    }
}

impl SystemModel for MachineSystem {
    fn dim(&self) -> usize {
        match self {
            MachineSystem::Smib(s) => s.dim(),
            MachineSystem::Multi(m) => m.dim(),
        }
    }
    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        match self {
            MachineSystem::Smib(s) => s.field_into(x, dx),
            MachineSystem::Multi(m) => m.field_into(x, dx),
        }
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            MachineSystem::Smib(s) => s.jacobian(x),
            MachineSystem::Multi(m) => m.jacobian(x),
        }
    }
    fn invariant_basis(&self) -> Option<DMatrix<f64>> {
        match self {
            MachineSystem::Smib(s) => s.invariant_basis(),
            MachineSystem::Multi(m) => m.invariant_basis(),
        }
    }
    fn angle_separation(&self, x: &[f64]) -> Option<f64> {
        match self {
            MachineSystem::Smib(s) => s.angle_separation(x),
            MachineSystem::Multi(m) => m.angle_separation(x),
        }
    }
    fn is_conservative(&self) -> bool {
        match self {
            MachineSystem::Smib(s) => s.is_conservative(),
            MachineSystem::Multi(m) => m.is_conservative(),
        }
    }
}

/// `δ' = (P_m - P_max sin δ) / M`.
struct SmibGradient(Smib);

impl SystemModel for SmibGradient {
    fn dim(&self) -> usize {
        1
    }
    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        dx[0] = (self.0.mech_power - self.0.max_power * x[0].sin()) / self.0.inertia;
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -self.0.max_power * x[0].cos() / self.0.inertia)
    }
    fn angle_separation(&self, x: &[f64]) -> Option<f64> {
        Some(x[0].abs())
    }
}

/// Pre-fault, fault-on and post-fault models of one disturbance. Faults are
/// self-clearing, so the post-fault model equals the pre-fault model.
#[derive(Debug, Clone)]
pub struct FaultScenario {
    pub name: String,
    pub pre_fault: MachineSystem,
    pub fault_on: MachineSystem,
    pub post_fault: MachineSystem,
    pub faulted_bus: Option<usize>,
    /// Pre-fault equilibrium, the start of the fault-on trajectory.
    pub x0_pre: Vec<f64>,
}

impl FaultScenario {
    /// Bolted fault on the SMIB terminal, cleared with the network intact.
    pub fn smib(params: Smib) -> Self {
        let x0 = vec![params.stable_angle(), 0.0];
        Self {
            name: "smib".into(),
            pre_fault: MachineSystem::Smib(params),
            fault_on: MachineSystem::Smib(params.faulted()),
            post_fault: MachineSystem::Smib(params),
            faulted_bus: None,
            x0_pre: x0,
        }
    }

    /// Three-phase fault at `bus` of a prepared network.
    pub fn network_fault(net: &PreparedNetwork, bus: usize, losses: Losses) -> Result<Self> {
        let pre = net.reduce(None, losses)?;
        let fault = net.reduce(Some(bus), losses)?;
        let x0 = pre.sep_state();
        let residual = pre.field(&x0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual > 1e-10 {
            return Err(Error::Domain(format!("pre-fault state is not an equilibrium (residual {residual:e})")));
        }
        Ok(Self {
            name: format!("{}-bus{bus}", if net.network().name.is_empty() { "net" } else { &net.network().name }),
            pre_fault: MachineSystem::Multi(pre.clone()),
            fault_on: MachineSystem::Multi(fault),
            post_fault: MachineSystem::Multi(pre),
            faulted_bus: Some(bus),
            x0_pre: x0,
        })
    }
}

/// Bundled 39-bus data.
pub fn ieee39_network() -> NetworkData {
    NetworkData::from_json(IEEE39_JSON).expect("bundled 39-bus data is valid")
}

pub fn ieee39_prepared() -> PreparedNetwork {
    PreparedNetwork::new(ieee39_network()).expect("bundled 39-bus power flow converges")
}
