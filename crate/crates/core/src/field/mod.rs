//! Coordinate MLP: axis-aligned positional encoding, Swish hidden layers and
//! an affine output layer.
//!
//! Input derivatives are computed by pushing truncated Taylor coefficients
//! (see [`jet`]) through the network, which gives exact mixed partials of any
//! order that fits the [`DerivOrder`] ceiling. Parameter gradients of losses
//! built from those partials come from [`loss_param_gradient`].

mod engine;
pub mod jet;

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::function::Function;
use crate::mc::RngStream;

pub use engine::{loss_param_gradient, Probe};
pub use jet::{Jet, JetLayout};

/// Largest supported total derivative order.
pub const MAX_TOTAL_ORDER: u32 = 6;

/// Per-axis differentiation orders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DerivOrder(Vec<u32>);

impl DerivOrder {
    pub fn new(orders: Vec<u32>) -> Self {
        Self(orders)
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0; d])
    }

    pub fn uniform(d: usize, k: u32) -> Self {
        Self(vec![k; d])
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn orders(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: self.0.len() });
        }
        if self.total() > MAX_TOTAL_ORDER {
            return Err(invalid(format!(
                "total derivative order {} exceeds {MAX_TOTAL_ORDER}",
                self.total()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    pub in_dims: usize,
    pub out_dims: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub pe_bands: usize,
    pub pe_normalized: bool,
    /// Exponent `q` of the band normalization `(2^j pi)^-q`; only used when
    /// `pe_normalized` is set.
    pub pe_norm_order: u32,
}

impl FieldConfig {
    pub fn new(in_dims: usize, out_dims: usize) -> Self {
        Self {
            in_dims,
            out_dims,
            hidden_layers: 4,
            hidden_width: 256,
            pe_bands: 6,
            pe_normalized: false,
            pe_norm_order: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.in_dims) {
            return Err(Error::UnsupportedDims(self.in_dims));
        }
        if self.out_dims == 0 || self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(invalid("field widths and depth must be positive"));
        }
        if self.pe_bands > 24 {
            return Err(invalid("at most 24 positional-encoding bands"));
        }
        Ok(())
    }

    pub fn encoded_dims(&self) -> usize {
        self.in_dims * (1 + 2 * self.pe_bands)
    }

    /// `(fan_in, fan_out)` for every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.encoded_dims();
        for _ in 0..self.hidden_layers {
            shapes.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        shapes.push((fan_in, self.out_dims));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    fn band_scale(&self, band: usize) -> f64 {
        if self.pe_normalized {
            (2f64.powi(band as i32) * PI).powi(-(self.pe_norm_order as i32))
        } else {
            1.0
        }
    }
}

/// Offsets of one affine layer inside the flat parameter vector. Weights are
/// row-major `(fan_out, fan_in)`, followed by the biases.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w: usize,
    pub b: usize,
}

pub(crate) fn layer_slots(cfg: &FieldConfig) -> Vec<LayerSlot> {
    let mut off = 0;
    cfg.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let slot = LayerSlot { fan_in, fan_out, w: off, b: off + fan_in * fan_out };
            off += fan_in * fan_out + fan_out;
            slot
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralField {
    config: FieldConfig,
    theta: Vec<f64>,
}

impl NeuralField {
    pub fn from_parts(config: FieldConfig, theta: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if theta.len() != config.param_count() {
            return Err(invalid(format!(
                "theta has {} entries, architecture needs {}",
                theta.len(),
                config.param_count()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("field parameters".into()));
        }
        Ok(Self { config, theta })
    }

    pub fn zeros(config: FieldConfig) -> Result<Self> {
        let n = config.param_count();
        Self::from_parts(config, vec![0.0; n])
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Exclusive access for the optimizer.
    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn in_dims(&self) -> usize {
        self.config.in_dims
    }

    pub fn out_dims(&self) -> usize {
        self.config.out_dims
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        field_forward(self, x)
    }

    pub fn forward_batch(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        let ord = DerivOrder::zeros(self.in_dims());
        self.partial_batch(xs, &ord)
    }

    /// Output jets (one per output channel) at `x` for the order box `ord`.
    pub fn jets(&self, x: &[f64], ord: &DerivOrder) -> Vec<Jet> {
        self.jets_batch(&[x], ord).pop().expect("one point in, one point out")
    }

    pub fn jets_batch(&self, xs: &[&[f64]], ord: &DerivOrder) -> Vec<Vec<Jet>> {
        let layout = JetLayout::shared(ord);
        let p = layout.size();
        let mut res = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(engine::CHUNK_ROWS.max(p) / p) {
            let pass = engine::forward(self, chunk, &layout, false);
            for i in 0..chunk.len() {
                res.push(
                    (0..self.out_dims())
                        .map(|o| {
                            let coeffs = (0..p).map(|r| pass.out[[i * p + r, o]]).collect();
                            Jet::from_coeffs(layout.clone(), coeffs)
                        })
                        .collect(),
                );
            }
        }
        res
    }

    pub fn mixed_partial(&self, x: &[f64], ord: &DerivOrder) -> Vec<f64> {
        field_mixed_partial(self, x, ord)
    }

    /// Mixed partials at many points sharing one order.
    pub fn partial_batch(&self, xs: &[&[f64]], ord: &DerivOrder) -> Vec<Vec<f64>> {
        let layout = JetLayout::shared(ord);
        let scale = layout.factorial(layout.top());
        let top = layout.top();
        let p = layout.size();
        let mut res = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(engine::CHUNK_ROWS.max(p) / p) {
            let pass = engine::forward(self, chunk, &layout, false);
            for i in 0..chunk.len() {
                res.push((0..self.out_dims()).map(|o| pass.out[[i * p + top, o]] * scale).collect());
            }
        }
        res
    }
}

/// Kaiming-uniform weights drawn as f32 values, zero biases.
pub fn field_init(config: FieldConfig, seed: u64) -> Result<NeuralField> {
    config.validate()?;
    let mut theta = vec![0.0; config.param_count()];
    let mut rng = RngStream::new(seed).fork(0xf1e1d);
    for slot in layer_slots(&config) {
        let bound = (6.0 / slot.fan_in as f64).sqrt() as f32;
        for w in &mut theta[slot.w..slot.b] {
            *w = (rng.uniform_f32_symmetric() * bound) as f64;
        }
    }
    NeuralField::from_parts(config, theta)
}

/// Per axis `[x, n_0 sin(pi x), n_0 cos(pi x), ..., n_{L-1} cos(2^{L-1} pi x)]`.
pub fn positional_encode(x: &[f64], config: &FieldConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(config.encoded_dims());
    for &v in x {
        out.push(v);
        for band in 0..config.pe_bands {
            let w = 2f64.powi(band as i32) * PI;
            let n = config.band_scale(band);
            out.push(n * (w * v).sin());
            out.push(n * (w * v).cos());
        }
    }
    out
}

pub fn field_forward(field: &NeuralField, x: &[f64]) -> Vec<f64> {
    field_mixed_partial(field, x, &DerivOrder::zeros(field.in_dims()))
}

pub fn field_mixed_partial(field: &NeuralField, x: &[f64], ord: &DerivOrder) -> Vec<f64> {
    field.partial_batch(&[x], ord).pop().expect("one point in, one point out")
}

impl Function for NeuralField {
    fn in_dims(&self) -> usize {
        self.config.in_dims
    }
    fn out_dims(&self) -> usize {
        self.config.out_dims
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.forward(x));
    }
}
