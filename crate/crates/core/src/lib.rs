//! Discrete second-order vakonomic integrators: the discrete flow of a
//! constrained second-order Lagrangian, its reduction from an underactuated
//! optimal-control problem, a direct-transcription reference solver and the
//! cart-pole benchmark.

pub mod cartpole;
pub mod error;
pub mod experiments;
pub mod first_order;
pub mod linalg;
pub mod models;
pub mod numdiff;
pub mod oracle;
pub mod reduce;
pub mod second_order;
pub mod types;
