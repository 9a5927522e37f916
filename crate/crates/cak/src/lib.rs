//! Deterministic causal models, interventions and causal abstraction.

pub mod error;
pub mod expr;
pub mod model;
pub mod value;
pub mod dsl;
pub mod intervene;
pub mod algebra;
pub mod abstraction;
pub mod ops;
pub mod interchange;
pub mod approx;
pub mod scrub;
pub mod nn;
pub mod fixtures;

pub use error::{Error, Result};
pub use expr::Expr;
pub use model::{CausalModel, Mechanism};
pub use value::{Setting, Sig, Signature, Value, ValueRange, VarId, World};
