//! Integral reduction into stationary first-order antiderivatives.
//!
//! Expanding the Cauchy kernel `(x - t)^(k-1) / (k-1)!` binomially gives, per
//! axis,
//!
//! ```text
//! A^(k)(x) = sum_{l=1..k} c_l x^(l-1) * int_0^x t^(k-l) f(t) dt,
//! c_l = (-1)^(k-l) / ((l-1)! (k-l)!)
//! ```
//!
//! so `A^(k)` is a fixed combination of `k` first-order antiderivatives of
//! the weighted signals `t^(k-l) f`. In `d` dimensions the expansion is a
//! tensor product over axes with `k^d` terms.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::field::{DerivOrder, Jet, JetLayout, NeuralField};
use crate::model::AntiderivativeModel;

/// Largest order with tabulated coefficients.
pub const MAX_REDUCTION_ORDER: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct HaddadCoeffs {
    pub k: u32,
    /// `c[l - 1]` for `l = 1..=k`.
    pub c: Vec<f64>,
}

impl HaddadCoeffs {
    /// Power of `x` multiplying term `l` (1-based).
    pub fn power(&self, l: u32) -> u32 {
        l - 1
    }

    /// Exponent of `t` inside the integrand of term `l` (1-based).
    pub fn integrand_exponent(&self, l: u32) -> u32 {
        self.k - l
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub fn haddad_coeffs(k: u32) -> Result<HaddadCoeffs> {
    if !(1..=MAX_REDUCTION_ORDER).contains(&k) {
        return Err(invalid(format!("reduction order must be in 1..={MAX_REDUCTION_ORDER}, got {k}")));
    }
    let c = (1..=k)
        .map(|l| {
            let sign = if (k - l) % 2 == 0 { 1.0 } else { -1.0 };
            sign / (factorial(l - 1) * factorial(k - l))
        })
        .collect();
    Ok(HaddadCoeffs { k, c })
}

/// Supervision target of block `exps`: `prod_j x_j^exps_j * fx`.
pub fn reduc_target(exps: &[u32], x: &[f64], fx: &[f64]) -> Vec<f64> {
    let w: f64 = exps.iter().zip(x).map(|(&e, &v)| v.powi(e as i32)).product();
    fx.iter().map(|v| w * v).collect()
}

/// One field whose `k^d` output blocks of width `m` are the first-order
/// antiderivatives of the weighted signals. Block `b` corresponds to the
/// multi-index whose mixed-radix digits (last axis fastest) are `l_j - 1`.
#[derive(Debug, Clone)]
pub struct ReducedFieldBank {
    pub field: NeuralField,
    pub k: u32,
    pub m: usize,
}

impl ReducedFieldBank {
    pub fn new(field: NeuralField, k: u32, m: usize) -> Result<Self> {
        haddad_coeffs(k)?;
        let d = field.in_dims();
        let blocks = (k as usize).pow(d as u32);
        if field.out_dims() != m * blocks {
            return Err(Error::ModelMismatch {
                method: "ad_reduc".into(),
                reason: format!("field has {} outputs, bank needs {m} x {blocks}", field.out_dims()),
            });
        }
        Ok(Self { field, k, m })
    }

    pub fn dims(&self) -> usize {
        self.field.in_dims()
    }

    pub fn block_count(&self) -> usize {
        (self.k as usize).pow(self.dims() as u32)
    }

    /// Multi-index `l` (1-based per axis) of block `b`.
    pub fn block_index(&self, b: usize) -> Vec<u32> {
        block_index(self.k, self.dims(), b)
    }

    pub fn block_of(&self, l: &[u32]) -> usize {
        l.iter().fold(0, |acc, &lj| acc * self.k as usize + (lj - 1) as usize)
    }

    /// Integrand exponents of block `b`, the `reduc_target` weights.
    pub fn block_exponents(&self, b: usize) -> Vec<u32> {
        block_exponents(self.k, self.dims(), b)
    }
}

pub(crate) fn block_index(k: u32, d: usize, b: usize) -> Vec<u32> {
    let k = k as usize;
    let mut l = vec![0u32; d];
    let mut rest = b;
    for j in (0..d).rev() {
        l[j] = (rest % k) as u32 + 1;
        rest /= k;
    }
    l
}

pub(crate) fn block_exponents(k: u32, d: usize, b: usize) -> Vec<u32> {
    block_index(k, d, b).into_iter().map(|l| k - l).collect()
}

/// Recombined `A^(k)(x)` from raw bank outputs `blocks` (length `m k^d`).
pub fn haddad_combine(bank: &ReducedFieldBank, x: &[f64], blocks: &[f64]) -> Result<Vec<f64>> {
    let coeffs = haddad_coeffs(bank.k)?;
    let mut out = vec![0.0; bank.m];
    for b in 0..bank.block_count() {
        let w: f64 = bank
            .block_index(b)
            .iter()
            .zip(x)
            .map(|(&l, &v)| coeffs.c[l as usize - 1] * v.powi(coeffs.power(l) as i32))
            .product();
        for (o, v) in out.iter_mut().zip(&blocks[b * bank.m..(b + 1) * bank.m]) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// The recombined expression as a differentiable model. Partials come from
/// jets of the bank outputs multiplied by monomial jets of the weights.
#[derive(Debug, Clone)]
pub struct CombinedBank {
    pub bank: ReducedFieldBank,
    coeffs: HaddadCoeffs,
}

impl CombinedBank {
    pub fn new(bank: ReducedFieldBank) -> Result<Self> {
        let coeffs = haddad_coeffs(bank.k)?;
        Ok(Self { bank, coeffs })
    }

    fn combine_jets(&self, x: &[f64], jets: &[Jet], layout: &Arc<JetLayout>) -> Vec<f64> {
        let m = self.bank.m;
        let mut acc: Vec<Jet> = (0..m).map(|_| Jet::zero(layout.clone())).collect();
        for b in 0..self.bank.block_count() {
            let l = self.bank.block_index(b);
            let mut weight = Jet::constant(layout.clone(), 1.0);
            let mut scale = 1.0;
            for (j, &lj) in l.iter().enumerate() {
                scale *= self.coeffs.c[lj as usize - 1];
                weight = weight.mul(&Jet::monomial(layout.clone(), j, x[j], self.coeffs.power(lj)));
            }
            let weight = weight.scale(scale);
            for (c, a) in acc.iter_mut().enumerate() {
                a.add_assign(&jets[b * m + c].mul(&weight));
            }
        }
        acc.iter().map(Jet::top_partial).collect()
    }
}

impl AntiderivativeModel for CombinedBank {
    fn in_dims(&self) -> usize {
        self.bank.dims()
    }

    fn out_dims(&self) -> usize {
        self.bank.m
    }

    fn mixed_partial(&self, x: &[f64], ord: &DerivOrder) -> Result<Vec<f64>> {
        Ok(self.mixed_partial_batch(&[x], ord)?.pop().expect("one point in, one point out"))
    }

    fn mixed_partial_batch(&self, xs: &[&[f64]], ord: &DerivOrder) -> Result<Vec<Vec<f64>>> {
        let d = self.in_dims();
        ord.validate(d)?;
        if let Some(x) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
        }
        let layout = JetLayout::shared(ord);
        let jets = self.bank.field.jets_batch(xs, ord);
        Ok(xs.iter().zip(&jets).map(|(x, j)| self.combine_jets(x, j, &layout)).collect())
    }
}
