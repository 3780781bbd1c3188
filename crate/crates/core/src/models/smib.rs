use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};

/// Single machine against an infinite bus, state `(δ, ω)`:
/// `δ' = ω`, `M ω' = P_m - P_max sin δ - D ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smib {
    pub inertia: f64,
    pub mech_power: f64,
    pub max_power: f64,
    #[serde(default)]
    pub damping: f64,
}

impl Default for Smib {
    fn default() -> Self {
        Self {
            inertia: 0.05,
            mech_power: 0.8,
            max_power: 2.0,
            damping: 0.0,
        }
    }
}

impl Smib {
    pub fn new(inertia: f64, mech_power: f64, max_power: f64) -> Result<Self> {
        if !(inertia > 0.0) || !(mech_power > 0.0) || !(mech_power < max_power) {
            return Err(Error::Domain("SMIB requires M > 0 and 0 < P_m < P_max".into()));
        }
        Ok(Self { inertia, mech_power, max_power, damping: 0.0 })
    }

    /// The bolted-fault variant: no electrical power transfer.
    pub fn faulted(&self) -> Self {
        Self { max_power: 0.0, ..*self }
    }

    /// Stable equilibrium angle `δ0 = asin(P_m / P_max)`.
    pub fn stable_angle(&self) -> f64 {
        (self.mech_power / self.max_power).asin()
    }

    /// The type-1 UEP angle `π - δ0`.
    pub fn unstable_angle(&self) -> f64 {
        std::f64::consts::PI - self.stable_angle()
    }

    /// Equal-area critical clearing angle for a bolted fault cleared back to
    /// the pre-fault network: `arccos((π - 2δ0) sin δ0 - cos δ0)`.
    pub fn critical_clearing_angle(&self) -> f64 {
        let d0 = self.stable_angle();
        ((std::f64::consts::PI - 2.0 * d0) * d0.sin() - d0.cos()).acos()
    }

    /// Closed-form critical clearing time `sqrt(2M(δ_cr - δ0) / P_m)` under
    /// constant acceleration during the fault.
    pub fn critical_clearing_time(&self) -> f64 {
        (2.0 * self.inertia * (self.critical_clearing_angle() - self.stable_angle()) / self.mech_power).sqrt()
    }
}

pub fn smib_field(state: &[f64], params: &Smib) -> [f64; 2] {
    let (d, w) = (state[0], state[1]);
    [
        w,
        (params.mech_power - params.max_power * d.sin() - params.damping * w) / params.inertia,
    ]
}

impl SystemModel for Smib {
    fn dim(&self) -> usize {
        2
    }

    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        dx.copy_from_slice(&smib_field(x, self));
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[
                0.0,
                1.0,
                -self.max_power * x[0].cos() / self.inertia,
                -self.damping / self.inertia,
            ],
        )
    }

    fn angle_separation(&self, x: &[f64]) -> Option<f64> {
        Some(x[0].abs())
    }

    fn is_conservative(&self) -> bool {
        self.damping == 0.0
    }
}
