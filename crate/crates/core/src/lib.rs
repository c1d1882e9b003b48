pub mod attractors;
pub mod basins;
pub mod elliptic;
pub mod integrator;
pub mod model;
pub mod precapture;
pub mod quasiperiodic;
pub mod quadrature;

pub use model::{PhysicalParams, SpinModel, SpinState};
