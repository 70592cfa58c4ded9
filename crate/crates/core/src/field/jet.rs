//! Multivariate truncated Taylor series ("jets").
//!
//! A jet for the order box `ord = (k_1, ..., k_d)` stores the Taylor
//! coefficients `c_alpha = (d^alpha f)(x) / alpha!` for every multi-index
//! `alpha <= ord` componentwise. The box is downward closed, so products
//! truncated to it are exact.

use std::sync::Arc;

use super::DerivOrder;

#[derive(Debug, Clone, PartialEq)]
pub struct JetLayout {
    orders: Vec<u32>,
    strides: Vec<usize>,
    size: usize,
    total_order: u32,
    /// `(a, b, c)` with `alpha_a = alpha_b + alpha_c`, all within the box.
    pairs: Vec<(usize, usize, usize)>,
    multi: Vec<Vec<u32>>,
}

impl JetLayout {
    pub fn new(ord: &DerivOrder) -> Self {
        let orders = ord.orders().to_vec();
        let d = orders.len();
        let mut strides = vec![1usize; d];
        for j in (0..d.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * (orders[j + 1] as usize + 1);
        }
        let size: usize = orders.iter().map(|&k| k as usize + 1).product();
        let multi: Vec<Vec<u32>> = (0..size)
            .map(|flat| (0..d).map(|j| ((flat / strides[j]) % (orders[j] as usize + 1)) as u32).collect())
            .collect();
        let mut pairs = Vec::new();
        for a in 0..size {
            for b in 0..size {
                if multi[b].iter().zip(&multi[a]).all(|(x, y)| x <= y) {
                    let c: usize = (0..d).map(|j| (multi[a][j] - multi[b][j]) as usize * strides[j]).sum();
                    pairs.push((a, b, c));
                }
            }
        }
        let total_order = orders.iter().sum();
        Self { orders, strides, size, total_order, pairs, multi }
    }

    pub fn shared(ord: &DerivOrder) -> Arc<Self> {
        Arc::new(Self::new(ord))
    }

    pub fn dims(&self) -> usize {
        self.orders.len()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn total_order(&self) -> u32 {
        self.total_order
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    /// Flat index of the full-order coefficient.
    pub fn top(&self) -> usize {
        self.size - 1
    }

    pub fn index_of(&self, alpha: &[u32]) -> usize {
        alpha.iter().zip(&self.strides).map(|(&a, &s)| a as usize * s).sum()
    }

    pub fn multi_index(&self, flat: usize) -> &[u32] {
        &self.multi[flat]
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub(crate) fn pairs(&self) -> &[(usize, usize, usize)] {
        &self.pairs
    }

    /// `alpha!` for the coefficient at `flat`.
    pub fn factorial(&self, flat: usize) -> f64 {
        self.multi[flat].iter().map(|&a| (1..=a).map(f64::from).product::<f64>()).product()
    }
}

/// Scalar jet.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    layout: Arc<JetLayout>,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn zero(layout: Arc<JetLayout>) -> Self {
        let coeffs = vec![0.0; layout.size()];
        Self { layout, coeffs }
    }

    pub fn constant(layout: Arc<JetLayout>, c: f64) -> Self {
        let mut j = Self::zero(layout);
        j.coeffs[0] = c;
        j
    }

    pub fn from_coeffs(layout: Arc<JetLayout>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), layout.size());
        Self { layout, coeffs }
    }

    /// Jet of the coordinate function `x_axis` expanded at `x0`.
    pub fn variable(layout: Arc<JetLayout>, axis: usize, x0: f64) -> Self {
        let mut j = Self::constant(layout, x0);
        if j.layout.orders()[axis] >= 1 {
            let idx = j.layout.stride(axis);
            j.coeffs[idx] = 1.0;
        }
        j
    }

    /// Jet of `x_axis^power` expanded at `x0`: binomial coefficients along one axis.
    pub fn monomial(layout: Arc<JetLayout>, axis: usize, x0: f64, power: u32) -> Self {
        let mut j = Self::zero(layout);
        let max_n = j.layout.orders()[axis].min(power);
        let mut binom = 1.0;
        for n in 0..=max_n {
            if n > 0 {
                binom *= (power - n + 1) as f64 / n as f64;
            }
            let idx = n as usize * j.layout.stride(axis);
            j.coeffs[idx] = binom * x0.powi((power - n) as i32);
        }
        j
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// The mixed partial `d^alpha f` (coefficient times `alpha!`).
    pub fn partial(&self, alpha: &[u32]) -> f64 {
        let idx = self.layout.index_of(alpha);
        self.coeffs[idx] * self.layout.factorial(idx)
    }

    /// The mixed partial of the full box order.
    pub fn top_partial(&self) -> f64 {
        let t = self.layout.top();
        self.coeffs[t] * self.layout.factorial(t)
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        debug_assert_eq!(self.layout.size(), other.layout.size());
        let mut out = vec![0.0; self.coeffs.len()];
        for &(a, b, c) in self.layout.pairs() {
            out[a] += self.coeffs[b] * other.coeffs[c];
        }
        Jet { layout: self.layout.clone(), coeffs: out }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { layout: self.layout.clone(), coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add_assign(&mut self, other: &Jet) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }
}

/// Taylor coefficients `s^(n)(z) / n!` of Swish `s(z) = z sigmoid(z)`,
/// for `n = 0..out.len()`.
pub(crate) fn swish_taylor(z: f64, out: &mut [f64]) {
    let n_terms = out.len();
    // sigmoid satisfies y' = y - y^2; recurse on its Taylor coefficients.
    let mut a = [0.0f64; 16];
    debug_assert!(n_terms < a.len());
    a[0] = 1.0 / (1.0 + (-z).exp());
    for n in 0..n_terms.saturating_sub(1) {
        let conv: f64 = (0..=n).map(|i| a[i] * a[n - i]).sum();
        a[n + 1] = (a[n] - conv) / (n + 1) as f64;
    }
    out[0] = z * a[0];
    for n in 1..n_terms {
        out[n] = z * a[n] + a[n - 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn layout_sizes() {
        let l = JetLayout::new(&DerivOrder::new(vec![2, 1]));
        assert_eq!(l.size(), 6);
        assert_eq!(l.total_order(), 3);
        assert_eq!(l.index_of(&[2, 1]), l.top());
        assert_eq!(l.multi_index(l.index_of(&[1, 1])), &[1, 1]);
        assert_eq!(l.factorial(l.top()), 2.0);
        // Box convolution count: prod (k+1)(k+2)/2.
        assert_eq!(l.pairs().len(), 6 * 3);
    }

    #[test]
    fn product_matches_polynomial_algebra() {
        let l = JetLayout::shared(&DerivOrder::new(vec![3]));
        // (x)(x^2) = x^3 at x0 = 2: derivatives 8, 12, 12, 6.
        let x = Jet::variable(l.clone(), 0, 2.0);
        let x2 = Jet::monomial(l.clone(), 0, 2.0, 2);
        let p = x.mul(&x2);
        for (n, want) in [8.0, 12.0, 12.0, 6.0].into_iter().enumerate() {
            assert_relative_eq!(p.partial(&[n as u32]), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn mixed_product_in_two_dims() {
        let l = JetLayout::shared(&DerivOrder::new(vec![1, 2]));
        let x = Jet::variable(l.clone(), 0, 0.5);
        let y2 = Jet::monomial(l.clone(), 1, 3.0, 2);
        // d/dx d^2/dy^2 (x y^2) = 2.
        assert_relative_eq!(x.mul(&y2).top_partial(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn swish_taylor_matches_finite_differences() {
        let s = |z: f64| z / (1.0 + (-z).exp());
        for &z in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
            let mut t = [0.0; 4];
            swish_taylor(z, &mut t);
            let h = 1e-3;
            assert_relative_eq!(t[0], s(z), max_relative = 1e-14);
            let d1 = (s(z + h) - s(z - h)) / (2.0 * h);
            let d2 = (s(z + h) - 2.0 * s(z) + s(z - h)) / (h * h);
            let d3 = (s(z + 2.0 * h) - 2.0 * s(z + h) + 2.0 * s(z - h) - s(z - 2.0 * h)) / (2.0 * h * h * h);
            assert_relative_eq!(t[1], d1, epsilon = 1e-6);
            assert_relative_eq!(t[2] * 2.0, d2, epsilon = 1e-5);
            assert_relative_eq!(t[3] * 6.0, d3, epsilon = 1e-4);
        }
    }
}
