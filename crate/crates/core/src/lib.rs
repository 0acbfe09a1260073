pub mod error;
pub mod expr;
pub mod inertia;

pub use error::{Error, Result};
pub mod diffeo;
pub mod lagrangian;
pub mod canonical;
pub mod phase;
pub mod maslov;
pub mod symbols;
pub mod oscillatory;
pub mod verify;
