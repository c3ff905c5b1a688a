//! Collapse-model gravity on discrete sites: Diosi-Penrose and CSL
//! monitoring, stochastic feedback through the Newton potential, and the
//! entanglement those processes do or do not create.

pub mod dump;
pub mod entanglement;
pub mod error;
pub mod evolution;
pub mod generators;
pub mod linalg;
pub mod model;
pub mod overlaps;
pub mod plot;
pub mod scenario;
pub mod table;
pub mod trajectories;

pub use error::{Error, Result};
pub use linalg::{CMatrix, RMatrix};
pub use model::{DensityMatrix, Kernel, ParticleSystem, PhysicalConstants};
