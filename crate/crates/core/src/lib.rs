//! Neural repeated antiderivatives: coordinate networks trained so that their
//! k-fold mixed partial reproduces a signal, together with the Monte Carlo
//! estimators, derivative engine and reference oracles they rely on.

pub mod error;
pub mod field;
pub mod function;
pub mod mc;
pub mod model;
pub mod reduction;
pub mod signals;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
pub use field::{field_init, DerivOrder, FieldConfig, NeuralField};
pub use function::Function;
pub use model::{AntiderivativeModel, OracleModel};
pub use signals::{Signal, SignalKind};
pub use training::{train_run, Method, TrainConfig, TrainOutcome, TrainedModel};
