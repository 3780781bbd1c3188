use nalgebra::DMatrix;

use crate::dynamics::SystemModel;

/// Reduced three-machine system in relative rotor angles:
///
/// ```text
/// x1' = -sin x1 - 0.5 sin(x1 - x2) + 0.01
/// x2' = -0.5 sin x2 - 0.5 sin(x2 - x1) + 0.05
/// ```
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThreeMachine;

impl ThreeMachine {
    /// The area of interest `[-2π, 2π]²`; the field is 2π-periodic in both
    /// coordinates so this covers four copies of every equilibrium.
    pub fn area_of_interest() -> ([f64; 2], [f64; 2]) {
        let w = 2.0 * std::f64::consts::PI;
        ([-w, -w], [w, w])
    }
}

pub fn three_machine_field(x: &[f64]) -> [f64; 2] {
    let (x1, x2) = (x[0], x[1]);
    [
        -x1.sin() - 0.5 * (x1 - x2).sin() + 0.01,
        -0.5 * x2.sin() - 0.5 * (x2 - x1).sin() + 0.05,
    ]
}

impl SystemModel for ThreeMachine {
    fn dim(&self) -> usize {
        2
    }

    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        let f = three_machine_field(x);
        dx[0] = f[0];
        dx[1] = f[1];
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (x1, x2) = (x[0], x[1]);
        let c12 = (x1 - x2).cos();
        DMatrix::from_row_slice(
            2,
            2,
            &[
                -x1.cos() - 0.5 * c12,
                0.5 * c12,
                0.5 * c12,
                -0.5 * x2.cos() - 0.5 * c12,
            ],
        )
    }
}
