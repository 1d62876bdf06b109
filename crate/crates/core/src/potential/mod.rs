//! Green functions, equilibrium measures, capacities, hitting and exit laws.

pub mod cube;
pub mod equilibrium;
pub mod green;
pub mod jump;
pub mod killed;
pub mod mc;

pub use equilibrium::{capacity, equilibrium_measure, EquilibriumProfile, SolveMethod, SolverConfig};
pub use green::{green_free, GreenTable};
pub use jump::Jumper;
pub use killed::{exit_distribution, hit_before_boundary, killed_green, KilledGreenField};
pub use mc::{capacity_mc, McCapacity, McConfig};
