use nalgebra::DMatrix;

use crate::dynamics::SystemModel;

/// Three-dimensional polynomial benchmark:
///
/// ```text
/// x' = x - x³ + 0.5 z + y²
/// y' = -y - y³ + 0.5 z² - x²
/// z' = x + 2y - z³ + x² - y²
/// ```
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Benchmark3d;

impl Benchmark3d {
    /// Rounded location of the asymptotically stable equilibrium.
    pub const ROUNDED_ASEP: [f64; 3] = [1.367, -0.849, 0.936];
    /// Level of the quadratic Lyapunov estimate used as the initial guess.
    pub const INITIAL_LEVEL: f64 = 0.291;
}

pub fn benchmark3d_field(s: &[f64]) -> [f64; 3] {
    let (x, y, z) = (s[0], s[1], s[2]);
    [
        x - x.powi(3) + 0.5 * z + y * y,
        -y - y.powi(3) + 0.5 * z * z - x * x,
        x + 2.0 * y - z.powi(3) + x * x - y * y,
    ]
}

impl SystemModel for Benchmark3d {
    fn dim(&self) -> usize {
        3
    }

    fn field_into(&self, x: &[f64], dx: &mut [f64]) {
        dx.copy_from_slice(&benchmark3d_field(x));
    }

    fn jacobian(&self, s: &[f64]) -> DMatrix<f64> {
        let (x, y, z) = (s[0], s[1], s[2]);
        DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0 - 3.0 * x * x,
                2.0 * y,
                0.5,
                -2.0 * x,
                -1.0 - 3.0 * y * y,
                z,
                1.0 + 2.0 * x,
                2.0 - 2.0 * y,
                -3.0 * z * z,
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_equilibrium() {
        assert_eq!(benchmark3d_field(&[0.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
    }

    // The rounded coordinates are about 0.02 away from the true equilibrium
    // (1.36211, -0.82910, 0.95531), so the residual there is about 0.03.
    #[test]
    fn rounded_asep_is_near_an_equilibrium() {
        let f = benchmark3d_field(&Benchmark3d::ROUNDED_ASEP);
        let r = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(r < 0.035, "residual {r}");
        let f = benchmark3d_field(&[1.3621077, -0.82909873, 0.95531387]);
        assert!(f.iter().all(|v| v.abs() < 1e-6));
    }
}
