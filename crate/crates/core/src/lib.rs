//! Classical emulation of a hybrid qubit–boson quantum computer running
//! Trotterized quench dynamics of the (1+1)-dimensional lattice Yukawa model.

pub mod error;
pub mod evolution;
pub mod experiments;
pub mod gates;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod operator;
pub mod readout;
pub mod sparse;
pub mod state;
pub mod trotter;

pub use error::{Error, Result};
pub use gates::{Circuit, GateOp};
pub use model::{mode_energy, sector_basis, staggered_charge, BasisState, ModeSpec, ModelParams};
pub use operator::{OperatorSum, OperatorTerm, SectorMap};
pub use state::{HybridState, Layout};
