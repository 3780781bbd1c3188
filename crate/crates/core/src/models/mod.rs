//! Dynamical models: analytic test systems, the single-machine system and
//! network-reduced multi-machine systems.

pub mod benchmark3d;
pub mod machine;
pub mod network;
pub mod scenario;
pub mod smib;
pub mod three_machine;

pub use benchmark3d::Benchmark3d;
pub use machine::{GradientSystem, MachineParams, ReducedMachineModel};
pub use network::{Losses, NetworkData, OperatingPoint, PreparedNetwork};
pub use scenario::{FaultScenario, MachineSystem};
pub use smib::Smib;
pub use three_machine::ThreeMachine;
