//! Anything that represents a repeated antiderivative and can be differentiated.

use crate::error::{invalid, Error, Result};
use crate::field::{DerivOrder, NeuralField};
use crate::signals::{oracle_antiderivative_orders, Signal};

pub trait AntiderivativeModel: Sync {
    fn in_dims(&self) -> usize;
    fn out_dims(&self) -> usize;

    /// `d^ord` of the represented function at `x`.
    fn mixed_partial(&self, x: &[f64], ord: &DerivOrder) -> Result<Vec<f64>>;

    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.mixed_partial(x, &DerivOrder::zeros(self.in_dims()))
    }

    fn mixed_partial_batch(&self, xs: &[&[f64]], ord: &DerivOrder) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.mixed_partial(x, ord)).collect()
    }
}

fn check(model: &dyn AntiderivativeModel, x: &[f64], ord: &DerivOrder) -> Result<()> {
    if x.len() != model.in_dims() {
        return Err(Error::DimensionMismatch { expected: model.in_dims(), actual: x.len() });
    }
    ord.validate(model.in_dims())
}

impl AntiderivativeModel for NeuralField {
    fn in_dims(&self) -> usize {
        self.config().in_dims
    }

    fn out_dims(&self) -> usize {
        self.config().out_dims
    }

    fn mixed_partial(&self, x: &[f64], ord: &DerivOrder) -> Result<Vec<f64>> {
        check(self, x, ord)?;
        Ok(NeuralField::mixed_partial(self, x, ord))
    }

    fn mixed_partial_batch(&self, xs: &[&[f64]], ord: &DerivOrder) -> Result<Vec<Vec<f64>>> {
        for x in xs {
            check(self, x, ord)?;
        }
        Ok(self.partial_batch(xs, ord))
    }
}

/// The exact `A^(k)` of a signal, differentiated by lowering the integration
/// order: `d^ord A^(k) = A^(k - ord)`.
#[derive(Debug, Clone)]
pub struct OracleModel {
    pub signal: Signal,
    pub k: u32,
}

impl OracleModel {
    pub fn new(signal: Signal, k: u32) -> Self {
        Self { signal, k }
    }
}

impl AntiderivativeModel for OracleModel {
    fn in_dims(&self) -> usize {
        crate::function::Function::in_dims(&self.signal)
    }

    fn out_dims(&self) -> usize {
        crate::function::Function::out_dims(&self.signal)
    }

    fn mixed_partial(&self, x: &[f64], ord: &DerivOrder) -> Result<Vec<f64>> {
        if ord.dims() != self.in_dims() {
            return Err(Error::DimensionMismatch { expected: self.in_dims(), actual: ord.dims() });
        }
        if ord.orders().iter().any(|&o| o > self.k) {
            return Err(invalid(format!("oracle of order {} cannot be differentiated {:?} times", self.k, ord)));
        }
        let lowered: Vec<u32> = ord.orders().iter().map(|&o| self.k - o).collect();
        oracle_antiderivative_orders(&self.signal, &lowered, x)
    }
}
