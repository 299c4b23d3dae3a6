//! Symmetry-conserving QAOA circuits trained with the quantum natural gradient.

pub mod circuit;
pub mod eigensolver;
pub mod error;
pub mod harness;
pub mod model;
pub mod operators;
pub mod qng;
pub mod scalar;
pub mod statevector;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type State64 = statevector::State<f64>;
pub type State32 = statevector::State<f32>;
pub type PauliString64 = operators::PauliString<f64>;
pub type HamiltonianSpec64 = model::HamiltonianSpec<f64>;
pub type Ansatz64 = circuit::Ansatz<f64>;
