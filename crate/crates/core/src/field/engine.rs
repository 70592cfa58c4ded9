//! Batched jet propagation with a reverse sweep for parameter gradients.
//!
//! Activations of a batch are stored as `(n * P, width)` matrices, where `P`
//! is the jet size: row `i * P + p` holds Taylor coefficient `p` of point `i`.
//! Affine layers act on every coefficient row alike (the bias only on
//! `p = 0`), so they are plain GEMMs. Swish acts per neuron on the whole jet.
//!
//! For the reverse sweep through Swish: perturbing coefficient `p` of the
//! pre-activation jet `u` changes the output by `s'(u) * e_p` to first
//! order, so the adjoint is `dZ_p = sum_{q >= p} dY_q G_{q-p}` with
//! `G = s'(u)`, the jet of the Swish derivative. `G` is recorded on the
//! forward pass.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

use super::jet::{swish_taylor, JetLayout};
use super::{layer_slots, DerivOrder, LayerSlot, NeuralField};

/// Target number of coefficient rows per forward chunk.
pub(crate) const CHUNK_ROWS: usize = 512;

pub(crate) struct Pass {
    layout: Arc<JetLayout>,
    n: usize,
    /// `acts[0]` is the encoded input, `acts[l]` the output of hidden layer `l`.
    acts: Vec<Array2<f64>>,
    gates: Vec<Array2<f64>>,
    pub out: Array2<f64>,
}

fn weights<'a>(theta: &'a [f64], s: &LayerSlot) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((s.fan_out, s.fan_in), &theta[s.w..s.b]).expect("layer slot shape")
}

fn encode(field: &NeuralField, xs: &[&[f64]], layout: &JetLayout) -> Array2<f64> {
    let cfg = field.config();
    let p = layout.size();
    let per_axis = 1 + 2 * cfg.pe_bands;
    let mut enc = Array2::<f64>::zeros((xs.len() * p, cfg.encoded_dims()));
    for (i, x) in xs.iter().enumerate() {
        for (j, &v) in x.iter().enumerate() {
            let kmax = layout.orders()[j] as usize;
            let stride = layout.stride(j);
            let col0 = j * per_axis;
            enc[[i * p, col0]] = v;
            if kmax >= 1 {
                enc[[i * p + stride, col0]] = 1.0;
            }
            for band in 0..cfg.pe_bands {
                let w = 2f64.powi(band as i32) * std::f64::consts::PI;
                let scale = cfg.band_scale(band);
                // sin^(n)(t) = sin(t + n pi/2); Taylor coefficient carries w^n / n!.
                let mut coef = scale;
                for n in 0..=kmax {
                    if n > 0 {
                        coef *= w / n as f64;
                    }
                    let phase = w * v + n as f64 * std::f64::consts::FRAC_PI_2;
                    let row = i * p + n * stride;
                    enc[[row, col0 + 1 + 2 * band]] = coef * phase.sin();
                    enc[[row, col0 + 2 + 2 * band]] = coef * phase.cos();
                }
            }
        }
    }
    enc
}

fn affine(theta: &[f64], slot: &LayerSlot, input: &Array2<f64>, p: usize) -> Array2<f64> {
    let w = weights(theta, slot);
    let mut z = Array2::<f64>::zeros((input.nrows(), slot.fan_out));
    general_mat_mul(1.0, input, &w.t(), 0.0, &mut z);
    let bias = &theta[slot.b..slot.b + slot.fan_out];
    for mut row in z.axis_iter_mut(Axis(0)).step_by(p) {
        row.iter_mut().zip(bias).for_each(|(z, b)| *z += b);
    }
    z
}

/// Swish on jets; returns the activated jets and the derivative jets `s'(u)`.
fn swish_jets(z: &Array2<f64>, layout: &JetLayout) -> (Array2<f64>, Array2<f64>) {
    let p = layout.size();
    let k = layout.total_order() as usize;
    let width = z.ncols();
    let mut y = Array2::<f64>::zeros(z.raw_dim());
    let mut g = Array2::<f64>::zeros(z.raw_dim());
    let zs = z.as_slice().expect("standard layout");
    let ys = y.as_slice_mut().expect("standard layout");
    let gs = g.as_slice_mut().expect("standard layout");
    let mut taylor = [0.0f64; 15];
    if p == 1 {
        for ((zv, yv), gv) in zs.iter().zip(ys.iter_mut()).zip(gs.iter_mut()) {
            swish_taylor(*zv, &mut taylor[..2]);
            *yv = taylor[0];
            *gv = taylor[1];
        }
        return (y, g);
    }
    let pairs: Vec<(usize, usize, usize)> =
        layout.pairs().iter().copied().filter(|&(_, _, c)| c != 0).collect();
    let (mut u, mut acc, mut dacc, mut tmp) = (vec![0.0; p], vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    for block in 0..zs.len() / (p * width) {
        let base = block * p * width;
        for col in 0..width {
            for q in 0..p {
                u[q] = zs[base + q * width + col];
            }
            swish_taylor(u[0], &mut taylor[..k + 2]);
            // Horner in delta = u - u0 for s(u) and s'(u).
            acc[..p].fill(0.0);
            dacc[..p].fill(0.0);
            acc[0] = taylor[k];
            dacc[0] = (k + 1) as f64 * taylor[k + 1];
            for n in (0..k).rev() {
                tmp[..p].fill(0.0);
                for &(a, b, c) in &pairs {
                    tmp[a] += acc[b] * u[c];
                }
                acc[..p].copy_from_slice(&tmp[..p]);
                acc[0] += taylor[n];
                tmp[..p].fill(0.0);
                for &(a, b, c) in &pairs {
                    tmp[a] += dacc[b] * u[c];
                }
                dacc[..p].copy_from_slice(&tmp[..p]);
                dacc[0] += (n + 1) as f64 * taylor[n + 1];
            }
            for q in 0..p {
                ys[base + q * width + col] = acc[q];
                gs[base + q * width + col] = dacc[q];
            }
        }
    }
    (y, g)
}

fn swish_backward(dy: &Array2<f64>, g: &Array2<f64>, layout: &JetLayout) -> Array2<f64> {
    let p = layout.size();
    let width = dy.ncols();
    let mut dz = Array2::<f64>::zeros(dy.raw_dim());
    let dys = dy.as_slice().expect("standard layout");
    let gs = g.as_slice().expect("standard layout");
    let dzs = dz.as_slice_mut().expect("standard layout");
    if p == 1 {
        for ((d, a), gv) in dzs.iter_mut().zip(dys).zip(gs) {
            *d = a * gv;
        }
        return dz;
    }
    for block in 0..dys.len() / (p * width) {
        let base = block * p * width;
        for &(a, b, c) in layout.pairs() {
            let (ra, rb, rc) = (base + a * width, base + b * width, base + c * width);
            for col in 0..width {
                dzs[rb + col] += dys[ra + col] * gs[rc + col];
            }
        }
    }
    dz
}

pub(crate) fn forward(field: &NeuralField, xs: &[&[f64]], layout: &Arc<JetLayout>, keep: bool) -> Pass {
    let theta = field.theta();
    let slots = layer_slots(field.config());
    let p = layout.size();
    let mut h = encode(field, xs, layout);
    let mut acts = Vec::new();
    let mut gates = Vec::new();
    let (hidden, last) = slots.split_at(slots.len() - 1);
    for slot in hidden {
        let z = affine(theta, slot, &h, p);
        let (y, g) = swish_jets(&z, layout);
        if keep {
            acts.push(std::mem::replace(&mut h, y));
            gates.push(g);
        } else {
            h = y;
        }
    }
    let out = affine(theta, &last[0], &h, p);
    if keep {
        acts.push(h);
    }
    Pass { layout: layout.clone(), n: xs.len(), acts, gates, out }
}

/// Accumulates `d(loss)/d(theta)` into `grad` given the adjoint of the
/// output jets `d_out` (same shape as `pass.out`).
pub(crate) fn backward(field: &NeuralField, pass: &Pass, d_out: &Array2<f64>, grad: &mut [f64]) {
    let theta = field.theta();
    let slots = layer_slots(field.config());
    let p = pass.layout.size();
    let mut delta = d_out.clone();
    for l in (0..slots.len()).rev() {
        let slot = slots[l];
        let input = &pass.acts[l];
        {
            let mut gw = ArrayViewMut2::from_shape((slot.fan_out, slot.fan_in), &mut grad[slot.w..slot.b])
                .expect("layer slot shape");
            general_mat_mul(1.0, &delta.t(), input, 1.0, &mut gw);
        }
        let gb = &mut grad[slot.b..slot.b + slot.fan_out];
        for row in delta.axis_iter(Axis(0)).step_by(p) {
            gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        if l == 0 {
            break;
        }
        let w = weights(theta, &slot);
        let mut dh = Array2::<f64>::zeros((delta.nrows(), slot.fan_in));
        general_mat_mul(1.0, &delta, &w, 0.0, &mut dh);
        delta = swish_backward(&dh, &pass.gates[l - 1], &pass.layout);
    }
    debug_assert_eq!(pass.n * p, d_out.nrows());
}

/// One field evaluation inside a loss: the mixed partial `ord` at `x`
/// (`ord` all zeros for a plain forward evaluation).
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub x: Vec<f64>,
    pub ord: DerivOrder,
}

impl Probe {
    pub fn value(x: Vec<f64>) -> Self {
        let d = x.len();
        Self { x, ord: DerivOrder::zeros(d) }
    }

    pub fn partial(x: Vec<f64>, ord: DerivOrder) -> Self {
        Self { x, ord }
    }
}

/// Loss and parameter gradient for a loss that is a sum of per-item terms.
///
/// Each item owns a list of probes. `item_loss(i, values)` receives the
/// probe values of item `i` (one output vector per probe) and returns the
/// item's loss together with the adjoint of every probe value. The result
/// is the summed loss and `sum_i (d loss_i / d values) . (d values / d theta)`,
/// which is the exact gradient whenever the adjoints are exact derivatives.
pub fn loss_param_gradient<L>(field: &NeuralField, items: &[Vec<Probe>], mut item_loss: L) -> (f64, Vec<f64>)
where
    L: FnMut(usize, &[Vec<f64>]) -> (f64, Vec<Vec<f64>>),
{
    let o = field.out_dims();
    let mut grad = vec![0.0; field.theta().len()];
    let mut total = 0.0;
    let mut start = 0;
    while start < items.len() {
        let mut end = start;
        let mut rows = 0;
        while end < items.len() && (rows < CHUNK_ROWS || end == start) {
            rows += items[end]
                .iter()
                .map(|pr| pr.ord.orders().iter().map(|&k| k as usize + 1).product::<usize>())
                .sum::<usize>();
            end += 1;
        }
        // Group the chunk's probes by derivative order; BTreeMap keeps the
        // accumulation order fixed.
        let mut groups: BTreeMap<&DerivOrder, Vec<(usize, usize)>> = BTreeMap::new();
        for (i, item) in items[start..end].iter().enumerate() {
            for (j, pr) in item.iter().enumerate() {
                groups.entry(&pr.ord).or_default().push((start + i, j));
            }
        }
        let mut values: Vec<Vec<Vec<f64>>> =
            items[start..end].iter().map(|it| vec![Vec::new(); it.len()]).collect();
        let mut passes = Vec::with_capacity(groups.len());
        for (ord, members) in &groups {
            let layout = JetLayout::shared(ord);
            let xs: Vec<&[f64]> = members.iter().map(|&(i, j)| items[i][j].x.as_slice()).collect();
            let pass = forward(field, &xs, &layout, true);
            let (top, p, scale) = (layout.top(), layout.size(), layout.factorial(layout.top()));
            for (r, &(i, j)) in members.iter().enumerate() {
                values[i - start][j] = (0..o).map(|c| pass.out[[r * p + top, c]] * scale).collect();
            }
            passes.push((pass, members, top, p, scale));
        }
        let mut adjoints = Vec::with_capacity(end - start);
        for i in start..end {
            let (l, adj) = item_loss(i, &values[i - start]);
            total += l;
            adjoints.push(adj);
        }
        for (pass, members, top, p, scale) in &passes {
            let mut d_out = Array2::<f64>::zeros(pass.out.raw_dim());
            let mut any = false;
            for (r, &(i, j)) in members.iter().enumerate() {
                if let Some(adj) = adjoints[i - start].get(j) {
                    for (c, a) in adj.iter().enumerate() {
                        if *a != 0.0 {
                            any = true;
                        }
                        d_out[[r * p + top, c]] = a * scale;
                    }
                }
            }
            if any {
                backward(field, pass, &d_out, &mut grad);
            }
        }
        start = end;
    }
    (total, grad)
}

#[cfg(test)]
mod tests {
    use super::super::{field_init, layer_slots, FieldConfig};
    use super::*;
    use crate::mc::RngStream;
    use approx::assert_relative_eq;

    fn small(d: usize, o: usize) -> FieldConfig {
        FieldConfig { hidden_layers: 2, hidden_width: 8, pe_bands: 2, ..FieldConfig::new(d, o) }
    }

    #[test]
    fn zero_loss_has_zero_gradient() {
        let f = field_init(small(1, 1), 1).unwrap();
        let items = vec![vec![Probe::value(vec![0.3])]];
        let (l, g) = loss_param_gradient(&f, &items, |_, v| (0.0, vec![vec![0.0; v[0].len()]]));
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn squared_output_gradient_on_final_bias() {
        let cfg = small(1, 1);
        let mut f = NeuralField::zeros(cfg.clone()).unwrap();
        let last = *layer_slots(&cfg).last().unwrap();
        let b = 0.75;
        f.theta_mut()[last.b] = b;
        let items = vec![vec![Probe::value(vec![0.4])]];
        let (l, g) = loss_param_gradient(&f, &items, |_, v| (v[0][0] * v[0][0], vec![vec![2.0 * v[0][0]]]));
        assert_relative_eq!(l, b * b);
        assert_relative_eq!(g[last.b], 2.0 * b);
    }

    fn fd_check(f: &NeuralField, items: &[Vec<Probe>], seed: u64) {
        let loss = |field: &NeuralField| {
            loss_param_gradient(field, items, |_, v| {
                let l: f64 = v.iter().flatten().map(|x| x.sin() + 0.5 * x * x).sum();
                (l, v.iter().map(|p| p.iter().map(|x| x.cos() + x).collect()).collect())
            })
        };
        let (_, g) = loss(f);
        let mut rng = RngStream::new(seed);
        let h = 1e-4;
        for _ in 0..10 {
            let idx = (rng.next_u64() % g.len() as u64) as usize;
            let mut up = f.clone();
            up.theta_mut()[idx] += h;
            let mut dn = f.clone();
            dn.theta_mut()[idx] -= h;
            let fd = (loss(&up).0 - loss(&dn).0) / (2.0 * h);
            assert!((g[idx] - fd).abs() <= 1e-3 * fd.abs().max(1e-2), "param {idx}: {} vs {fd}", g[idx]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_for_mixed_partials() {
        let f = field_init(small(2, 2), 3).unwrap();
        let items = vec![
            vec![Probe::value(vec![0.2, 0.7]), Probe::partial(vec![0.5, 0.1], DerivOrder::new(vec![1, 1]))],
            vec![Probe::partial(vec![0.9, 0.4], DerivOrder::new(vec![2, 2]))],
            vec![Probe::partial(vec![0.3, 0.3], DerivOrder::new(vec![0, 3]))],
        ];
        fd_check(&f, &items, 4);
    }

    #[test]
    fn chunking_does_not_change_the_gradient() {
        let f = field_init(small(1, 1), 9).unwrap();
        let many: Vec<Vec<Probe>> = (0..700)
            .map(|i| vec![Probe::partial(vec![i as f64 / 700.0], DerivOrder::new(vec![1]))])
            .collect();
        let l2 = |_: usize, v: &[Vec<f64>]| (v[0][0] * v[0][0], vec![vec![2.0 * v[0][0]]]);
        let (la, ga) = loss_param_gradient(&f, &many, l2);
        let mut gb = vec![0.0; ga.len()];
        let mut lb = 0.0;
        for it in &many {
            let (l, g) = loss_param_gradient(&f, std::slice::from_ref(it), l2);
            lb += l;
            gb.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        assert_relative_eq!(la, lb, max_relative = 1e-12);
        for (a, b) in ga.iter().zip(&gb) {
            assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
        }
    }
}
