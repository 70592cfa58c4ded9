//! Anything that can be sampled at a point of the unit hypercube.

/// A deterministic vector-valued function of `in_dims` real inputs.
pub trait Function: Sync {
    fn in_dims(&self) -> usize;
    fn out_dims(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dims()];
        self.eval_into(x, &mut out);
        out
    }
}

/// Adapts a closure into a [`Function`].
pub struct FnFunction<F> {
    in_dims: usize,
    out_dims: usize,
    f: F,
}

impl<F> FnFunction<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(in_dims: usize, out_dims: usize, f: F) -> Self {
        Self { in_dims, out_dims, f }
    }
}

impl<F> Function for FnFunction<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn in_dims(&self) -> usize {
        self.in_dims
    }
    fn out_dims(&self) -> usize {
        self.out_dims
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Scalar closure convenience: `scalar_fn(1, |x| x[0] * x[0])`.
pub fn scalar_fn<F>(in_dims: usize, f: F) -> FnFunction<impl Fn(&[f64], &mut [f64]) + Sync>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    FnFunction::new(in_dims, 1, move |x: &[f64], out: &mut [f64]| out[0] = f(x))
}
