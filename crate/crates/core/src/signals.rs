//! Test signals on the unit hypercube and their antiderivative oracles.
//!
//! Synthetic signals come in three flavours: smooth (Gaussian mixtures),
//! discontinuous (hyper-rectangle mixtures) and oscillatory (Ackley). User data
//! enters as a [`GridData`] payload interpolated multilinearly.
//!
//! Antiderivatives always use lower integration limit 0 on every axis.
//! Rectangle mixtures have an exact truncated-power closed form; every other
//! signal goes through a repeated cumulative trapezoid rule that doubles its
//! resolution until two successive results agree.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};
use crate::function::Function;
use crate::mc::RngStream;

/// A point of the domain; see [`check_coords`].
pub type Coords = [f64];

pub fn check_coords(x: &Coords, d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("coordinates {x:?}")));
    }
    Ok(())
}

fn check_dims(d: usize) -> Result<()> {
    if (1..=3).contains(&d) {
        Ok(())
    } else {
        Err(Error::UnsupportedDims(d))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub weight: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

/// Axis-aligned half-open box `[lo, hi)` with amplitude `amp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub amp: f64,
}

impl Rect {
    fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&a, &b))| v >= a && v < b)
    }
}

/// Row-major grid samples, channel-interleaved, with `pad` extra cells on
/// each side of every axis. Only the interior cells map onto `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    pub shape: Vec<usize>,
    pub channels: usize,
    pub values: Vec<f64>,
    pub pad: usize,
}

impl GridData {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.shape.len())?;
        if self.channels == 0 || self.shape.iter().any(|&s| s == 0) {
            return Err(invalid("empty grid"));
        }
        let expected = self.shape.iter().product::<usize>() * self.channels;
        if self.values.len() != expected {
            return Err(invalid(format!(
                "grid payload has {} values, expected {expected}",
                self.values.len()
            )));
        }
        if self.shape.iter().any(|&s| s <= 2 * self.pad) {
            return Err(invalid("padding leaves no interior cells"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid payload".into()));
        }
        Ok(())
    }

    fn interpolate(&self, x: &[f64], out: &mut [f64]) {
        let d = self.shape.len();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        let mut upper = [0usize; 3];
        for j in 0..d {
            let s = self.shape[j];
            let interior = (s - 2 * self.pad) as f64;
            let u = (x[j] * interior - 0.5 + self.pad as f64).clamp(0.0, (s - 1) as f64);
            let b = (u.floor() as usize).min(s - 1);
            base[j] = b;
            upper[j] = (b + 1).min(s - 1);
            frac[j] = u - b as f64;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for j in 0..d {
                let hi = (corner >> j) & 1 == 1;
                w *= if hi { frac[j] } else { 1.0 - frac[j] };
                flat = flat * self.shape[j] + if hi { upper[j] } else { base[j] };
            }
            if w == 0.0 {
                continue;
            }
            let row = &self.values[flat * self.channels..(flat + 1) * self.channels];
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    GaussianMixture(Vec<Gaussian>),
    RectangleMixture(Vec<Rect>),
    Ackley,
    Grid(GridData),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    in_dims: usize,
    out_dims: usize,
    kind: SignalKind,
}

impl Signal {
    pub fn kind(&self) -> &SignalKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SignalKind::GaussianMixture(_) => "gaussian_mixture",
            SignalKind::RectangleMixture(_) => "rectangle_mixture",
            SignalKind::Ackley => "ackley",
            SignalKind::Grid(_) => "grid",
        }
    }

    pub fn from_gaussians(d: usize, components: Vec<Gaussian>) -> Result<Self> {
        check_dims(d)?;
        if components.is_empty() {
            return Err(invalid("need at least one component"));
        }
        if components.iter().any(|g| g.center.len() != d || g.width <= 0.0) {
            return Err(invalid("gaussian components must have d centers and positive width"));
        }
        Ok(Self { in_dims: d, out_dims: 1, kind: SignalKind::GaussianMixture(components) })
    }

    pub fn from_rects(d: usize, rects: Vec<Rect>) -> Result<Self> {
        check_dims(d)?;
        if rects.is_empty() {
            return Err(invalid("need at least one rectangle"));
        }
        if rects.iter().any(|r| r.lo.len() != d || r.hi.len() != d) {
            return Err(invalid("rectangle corners must have d entries"));
        }
        Ok(Self { in_dims: d, out_dims: 1, kind: SignalKind::RectangleMixture(rects) })
    }

    /// Coordinates along `axis` where the signal or one of its derivatives
    /// jumps: rectangle edges, grid nodes, the Ackley kink. Quadrature panels
    /// are aligned to them.
    pub fn breakpoints(&self, axis: usize) -> Vec<f64> {
        let mut b: Vec<f64> = match &self.kind {
            SignalKind::GaussianMixture(_) => Vec::new(),
            SignalKind::RectangleMixture(rs) => rs.iter().flat_map(|r| [r.lo[axis], r.hi[axis]]).collect(),
            SignalKind::Ackley => vec![0.5],
            SignalKind::Grid(g) => {
                let s = g.shape[axis];
                let interior = (s - 2 * g.pad) as f64;
                (0..s).map(|i| (i as f64 + 0.5 - g.pad as f64) / interior).collect()
            }
        };
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Closed-form per-axis-order antiderivative, where one exists.
    pub fn closed_form(&self, orders: &[u32], x: &[f64]) -> Option<Vec<f64>> {
        let SignalKind::RectangleMixture(rects) = &self.kind else {
            return None;
        };
        let total = rects
            .iter()
            .map(|r| {
                let per_axis: f64 = (0..self.in_dims)
                    .map(|j| box_antiderivative(x[j], r.lo[j], r.hi[j], orders[j]))
                    .product();
                r.amp * per_axis
            })
            .sum();
        Some(vec![total])
    }
}

/// `orders`-fold antiderivative of the indicator of `[a, b)` along one axis,
/// lower limit 0 (with `0 <= a`).
pub fn box_antiderivative(x: f64, a: f64, b: f64, order: u32) -> f64 {
    if order == 0 {
        return if x >= a && x < b { 1.0 } else { 0.0 };
    }
    let k = order as i32;
    let fact: f64 = (1..=order).map(f64::from).product();
    let tp = |c: f64| if x > c { (x - c).powi(k) } else { 0.0 };
    (tp(a) - tp(b)) / fact
}

impl Function for Signal {
    fn in_dims(&self) -> usize {
        self.in_dims
    }

    fn out_dims(&self) -> usize {
        self.out_dims
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dims);
        match &self.kind {
            SignalKind::GaussianMixture(gs) => {
                out[0] = gs
                    .iter()
                    .map(|g| {
                        let r2: f64 = x.iter().zip(&g.center).map(|(a, c)| (a - c) * (a - c)).sum();
                        g.weight * (-r2 / (2.0 * g.width * g.width)).exp()
                    })
                    .sum();
            }
            SignalKind::RectangleMixture(rs) => {
                out[0] = rs.iter().filter(|r| r.contains(x)).map(|r| r.amp).sum();
            }
            SignalKind::Ackley => out[0] = ackley(x),
            SignalKind::Grid(g) => g.interpolate(x, out),
        }
    }
}

fn ackley(x: &[f64]) -> f64 {
    const A: f64 = 20.0;
    const B: f64 = 0.2;
    let c = 2.0 * std::f64::consts::PI;
    let n = x.len() as f64;
    let z: Vec<f64> = x.iter().map(|v| 8.0 * v - 4.0).collect();
    let sq = z.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = z.iter().map(|v| (c * v).cos()).sum::<f64>() / n;
    -A * (-B * sq.sqrt()).exp() - cs.exp() + A + std::f64::consts::E
}

pub fn make_gaussian_mixture(d: usize, n_components: usize, seed: u64) -> Result<Signal> {
    check_dims(d)?;
    if n_components < 1 {
        return Err(invalid("n_components must be at least 1"));
    }
    let mut rng = RngStream::new(seed).fork(0x6a05);
    let comps = (0..n_components)
        .map(|_| Gaussian {
            weight: rng.uniform_in(0.5, 1.5),
            center: (0..d).map(|_| rng.uniform_in(0.25, 0.75)).collect(),
            width: rng.uniform_in(0.02, 0.15),
        })
        .collect();
    Signal::from_gaussians(d, comps)
}

pub fn make_rectangle_mixture(d: usize, n_rects: usize, seed: u64) -> Result<Signal> {
    check_dims(d)?;
    if n_rects < 1 {
        return Err(invalid("n_rects must be at least 1"));
    }
    let mut rng = RngStream::new(seed).fork(0x4ec7);
    let rects = (0..n_rects)
        .map(|_| {
            let (mut lo, mut hi) = (Vec::with_capacity(d), Vec::with_capacity(d));
            for _ in 0..d {
                let a = rng.uniform_in(0.1, 0.9);
                let b = rng.uniform_in(0.1, 0.9);
                lo.push(a.min(b));
                hi.push(a.max(b));
            }
            Rect { lo, hi, amp: rng.uniform_in(-1.0, 1.0) }
        })
        .collect();
    Signal::from_rects(d, rects)
}

pub fn make_ackley(d: usize) -> Result<Signal> {
    check_dims(d)?;
    Ok(Signal { in_dims: d, out_dims: 1, kind: SignalKind::Ackley })
}

pub fn load_grid_signal(data: GridData) -> Result<Signal> {
    data.validate()?;
    Ok(Signal { in_dims: data.shape.len(), out_dims: data.channels, kind: SignalKind::Grid(data) })
}

/// Refinement schedule for the quadrature oracle.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Panels per active axis on the first level.
    pub start_panels: usize,
    /// Upper bound on function evaluations for a single refinement level.
    pub max_evaluations: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { start_panels: 8, max_evaluations: 1 << 22, rel_tol: 1e-9 }
    }
}

/// `A^(k)(x)`: k-fold integration along every axis, lower limits 0.
pub fn oracle_antiderivative(sig: &Signal, k: u32, x: &Coords) -> Result<Vec<f64>> {
    if k < 1 {
        return Err(invalid("antiderivative order must be at least 1"));
    }
    oracle_antiderivative_orders(sig, &vec![k; sig.in_dims], x)
}

/// Antiderivative with a separate (possibly zero) order per axis. Closed form
/// where available, quadrature otherwise.
pub fn oracle_antiderivative_orders(sig: &Signal, orders: &[u32], x: &Coords) -> Result<Vec<f64>> {
    check_coords(x, sig.in_dims)?;
    if orders.len() != sig.in_dims {
        return Err(Error::DimensionMismatch { expected: sig.in_dims, actual: orders.len() });
    }
    if let Some(v) = sig.closed_form(orders, x) {
        return Ok(v);
    }
    signal_quadrature(sig, orders, x, &QuadratureConfig::default())
}

const GL_POINTS: usize = 8;

/// Gauss-Legendre nodes and weights on [0, 1] by Newton iteration on P_n.
fn gauss_legendre_unit() -> [(f64, f64); GL_POINTS] {
    let n = GL_POINTS;
    let mut out = [(0.0, 0.0); GL_POINTS];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * z * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        out[i] = (0.5 * (1.0 - z), 1.0 / ((1.0 - z * z) * dp * dp));
    }
    out
}

/// Nodes and weights for `k`-fold integration on `[0, x]` written as one
/// integral with kernel `(x - t)^(k-1) / (k-1)!`: composite Gauss-Legendre
/// with roughly `panels` equal panels, split so that no panel straddles a
/// point of `breaks`.
fn cauchy_nodes(x: f64, panels: usize, order: u32, breaks: &[f64]) -> Vec<(f64, f64)> {
    let gl = gauss_legendre_unit();
    let fact: f64 = (1..order).map(f64::from).product();
    let mut edges = vec![0.0];
    edges.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < x));
    edges.push(x);
    let mut nodes = Vec::with_capacity((panels + edges.len()) * GL_POINTS);
    for seg in edges.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let n = ((panels as f64 * (b - a) / x).ceil() as usize).max(1);
        let h = (b - a) / n as f64;
        for p in 0..n {
            for &(u, w) in &gl {
                let t = a + (p as f64 + u) * h;
                nodes.push((t, h * w * (x - t).powi(order as i32 - 1) / fact));
            }
        }
    }
    nodes
}

fn quadrature_at(f: &dyn Function, orders: &[u32], x: &[f64], panels: usize, breaks: &[Vec<f64>]) -> Vec<f64> {
    let d = x.len();
    let nodes: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|j| {
            if orders[j] == 0 {
                vec![(x[j], 1.0)]
            } else {
                cauchy_nodes(x[j], panels, orders[j], breaks.get(j).map_or(&[][..], Vec::as_slice))
            }
        })
        .collect();
    let m = f.out_dims();
    let mut acc = vec![0.0; m];
    let mut buf = vec![0.0; m];
    let mut idx = vec![0usize; d];
    let mut t = vec![0.0; d];
    'outer: loop {
        let mut w = 1.0;
        for j in 0..d {
            let (tj, wj) = nodes[j][idx[j]];
            t[j] = tj;
            w *= wj;
        }
        f.eval_into(&t, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += w * b;
        }
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < nodes[j].len() {
                continue 'outer;
            }
            idx[j] = 0;
        }
        break;
    }
    acc
}

/// Tensor composite Gauss-Legendre quadrature of the repeated integral,
/// doubling the panel count until successive levels agree to `rel_tol`.
pub fn quadrature_antiderivative(
    f: &dyn Function,
    orders: &[u32],
    x: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>> {
    quadrature_with_breaks(f, orders, x, cfg, &[])
}

/// [`quadrature_antiderivative`] with panels aligned to the signal's breakpoints.
pub fn signal_quadrature(sig: &Signal, orders: &[u32], x: &[f64], cfg: &QuadratureConfig) -> Result<Vec<f64>> {
    let breaks: Vec<Vec<f64>> = (0..sig.in_dims).map(|j| sig.breakpoints(j)).collect();
    quadrature_with_breaks(sig, orders, x, cfg, &breaks)
}

fn quadrature_with_breaks(
    f: &dyn Function,
    orders: &[u32],
    x: &[f64],
    cfg: &QuadratureConfig,
    breaks: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let active = orders.iter().filter(|&&o| o > 0).count() as u32;
    if active == 0 {
        return Ok(f.eval(x));
    }
    if x.iter().zip(orders).any(|(&v, &o)| o > 0 && v == 0.0) {
        return Ok(vec![0.0; f.out_dims()]);
    }
    let nodes_per_axis = |panels: usize| {
        (0..x.len())
            .filter(|&j| orders[j] > 0)
            .map(|j| (panels + breaks.get(j).map_or(0, Vec::len)) * GL_POINTS)
            .product::<usize>()
    };
    let mut panels = cfg.start_panels.max(1);
    let mut prev = quadrature_at(f, orders, x, panels, breaks);
    let mut last_change = f64::INFINITY;
    while nodes_per_axis(2 * panels) <= cfg.max_evaluations {
        panels *= 2;
        let cur = quadrature_at(f, orders, x, panels, breaks);
        let scale = cur.iter().fold(1e-6f64, |m, c| m.max(c.abs()));
        last_change = cur.iter().zip(&prev).map(|(c, p)| (c - p).abs()).fold(0.0, f64::max);
        if last_change <= cfg.rel_tol * scale {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::OracleNotConverged { resolution: panels * GL_POINTS, last_change })
}

const GRID_MAGIC: &str = "NGRD1";

/// Reads an `NGRD1` file: magic line, `d m s1 [s2 [s3]] pad` line, then
/// little-endian f32 samples.
pub fn read_grid(mut r: impl BufRead) -> Result<GridData> {
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::GridFormat(e.to_string()))?;
    if line.trim_end_matches(['\n', '\r']) != GRID_MAGIC {
        return Err(Error::GridFormat("missing NGRD1 magic".into()));
    }
    line.clear();
    r.read_line(&mut line).map_err(|e| Error::GridFormat(e.to_string()))?;
    let nums: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::GridFormat(format!("bad header token {t:?}"))))
        .collect::<Result<_>>()?;
    let (&d, rest) = nums.split_first().ok_or_else(|| Error::GridFormat("empty header".into()))?;
    check_dims(d)?;
    if rest.len() != d + 2 {
        return Err(Error::GridFormat(format!("header needs {} fields after d", d + 2)));
    }
    let channels = rest[0];
    let shape = rest[1..=d].to_vec();
    let pad = rest[d + 1];
    let count = shape.iter().product::<usize>() * channels;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::GridFormat(e.to_string()))?;
    if bytes.len() != count * 4 {
        return Err(Error::GridFormat(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            count * 4
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let data = GridData { shape, channels, values, pad };
    data.validate()?;
    Ok(data)
}

pub fn write_grid(mut w: impl Write, data: &GridData) -> Result<()> {
    data.validate()?;
    let io = |e: std::io::Error| Error::GridFormat(e.to_string());
    let dims: Vec<String> = data.shape.iter().map(|s| s.to_string()).collect();
    write!(w, "{GRID_MAGIC}\n{} {} {} {}\n", data.shape.len(), data.channels, dims.join(" "), data.pad)
        .map_err(io)?;
    for v in &data.values {
        w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_gaussian() -> Signal {
        Signal::from_gaussians(1, vec![Gaussian { weight: 1.0, center: vec![0.5], width: 0.1 }])
            .unwrap()
    }

    fn unit_box(d: usize) -> Signal {
        Signal::from_rects(d, vec![Rect { lo: vec![0.0; d], hi: vec![1.0; d], amp: 1.0 }]).unwrap()
    }

    #[test]
    fn gaussian_peak_and_three_sigma() {
        let g = single_gaussian();
        assert_eq!(g.eval(&[0.5]), vec![1.0]);
        assert_relative_eq!(g.eval(&[0.8])[0], (-4.5f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(g.eval(&[0.8])[0], 0.01111, epsilon = 1e-5);
    }

    #[test]
    fn gaussian_mixture_is_seeded() {
        let a = make_gaussian_mixture(2, 5, 9).unwrap();
        let b = make_gaussian_mixture(2, 5, 9).unwrap();
        let c = make_gaussian_mixture(2, 5, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for i in 0..20 {
            let x = [i as f64 / 19.0, 1.0 - i as f64 / 19.0];
            assert_eq!(a.eval(&x)[0].to_bits(), b.eval(&x)[0].to_bits());
        }
        let SignalKind::GaussianMixture(gs) = a.kind() else { unreachable!() };
        for g in gs {
            assert!((0.5..=1.5).contains(&g.weight));
            assert!((0.02..=0.15).contains(&g.width));
            assert!(g.center.iter().all(|c| (0.25..=0.75).contains(c)));
        }
    }

    #[test]
    fn rejects_bad_dims_and_counts() {
        assert!(matches!(make_gaussian_mixture(4, 1, 0), Err(Error::UnsupportedDims(4))));
        assert!(make_gaussian_mixture(1, 0, 0).is_err());
        assert!(make_rectangle_mixture(0, 1, 0).is_err());
        assert!(make_rectangle_mixture(2, 0, 0).is_err());
        assert!(make_ackley(5).is_err());
    }

    #[test]
    fn rectangle_membership_is_half_open() {
        let s = Signal::from_rects(1, vec![Rect { lo: vec![0.2], hi: vec![0.6], amp: 1.0 }]).unwrap();
        assert_eq!(s.eval(&[0.4])[0], 1.0);
        assert_eq!(s.eval(&[0.7])[0], 0.0);
        assert_eq!(s.eval(&[0.2])[0], 1.0);
        assert_eq!(s.eval(&[0.6])[0], 0.0);
    }

    #[test]
    fn overlapping_rectangles_add() {
        let s = Signal::from_rects(
            1,
            vec![
                Rect { lo: vec![0.1], hi: vec![0.5], amp: 0.5 },
                Rect { lo: vec![0.3], hi: vec![0.8], amp: 0.25 },
            ],
        )
        .unwrap();
        assert_eq!(s.eval(&[0.4])[0], 0.75);
    }

    #[test]
    fn random_rectangles_stay_inside_margin() {
        let s = make_rectangle_mixture(3, 8, 1).unwrap();
        let SignalKind::RectangleMixture(rs) = s.kind() else { unreachable!() };
        for r in rs {
            assert!(r.lo.iter().chain(&r.hi).all(|v| (0.1..=0.9).contains(v)));
            assert!(r.lo.iter().zip(&r.hi).all(|(a, b)| a <= b));
            assert!((-1.0..=1.0).contains(&r.amp));
        }
    }

    #[test]
    fn ackley_values() {
        let a1 = make_ackley(1).unwrap();
        assert!(a1.eval(&[0.5])[0].abs() < 1e-12);
        // x = 1 maps to z = 4.
        let expected = 20.0 - 20.0 * (-0.8f64).exp();
        assert_relative_eq!(a1.eval(&[1.0])[0], expected, max_relative = 1e-12);
        assert_relative_eq!(a1.eval(&[1.0])[0], 11.013, epsilon = 1e-3);
        let a3 = make_ackley(3).unwrap();
        assert!(a3.eval(&[0.5, 0.5, 0.5])[0].abs() < 1e-12);
        let v = [0.61, 0.27, 0.9];
        let mirrored: Vec<f64> = v.iter().map(|t| 1.0 - t).collect();
        assert_relative_eq!(a3.eval(&v)[0], a3.eval(&mirrored)[0], max_relative = 1e-12);
    }

    #[test]
    fn grid_interpolation() {
        let g = load_grid_signal(GridData {
            shape: vec![2],
            channels: 1,
            values: vec![0.0, 1.0],
            pad: 0,
        })
        .unwrap();
        assert_eq!(g.eval(&[0.25])[0], 0.0);
        assert_eq!(g.eval(&[0.75])[0], 1.0);
        assert_relative_eq!(g.eval(&[0.5])[0], 0.5);
        // Outside the centers the grid clamps.
        assert_eq!(g.eval(&[0.0])[0], 0.0);
        assert_eq!(g.eval(&[1.5])[0], 1.0);
    }

    #[test]
    fn grid_cell_centers_and_constants() {
        let values: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let g = load_grid_signal(GridData { shape: vec![3, 4], channels: 1, values, pad: 0 }).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let x = [(i as f64 + 0.5) / 3.0, (j as f64 + 0.5) / 4.0];
                assert_relative_eq!(g.eval(&x)[0], (i * 4 + j) as f64, epsilon = 1e-12);
            }
        }
        let c = load_grid_signal(GridData {
            shape: vec![3, 3, 3],
            channels: 2,
            values: vec![2.5; 54],
            pad: 1,
        })
        .unwrap();
        for x in [[0.0, 0.3, 1.0], [0.5, 0.5, 0.5], [-0.2, 1.2, 0.7]] {
            let v = c.eval(&x);
            assert_relative_eq!(v[0], 2.5, epsilon = 1e-12);
            assert_relative_eq!(v[1], 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn padded_grid_maps_interior_onto_domain() {
        // 1 interior cell flanked by one pad cell on each side.
        let g = load_grid_signal(GridData { shape: vec![3], channels: 1, values: vec![-1.0, 4.0, 9.0], pad: 1 })
            .unwrap();
        assert_eq!(g.eval(&[0.5])[0], 4.0);
        assert_relative_eq!(g.eval(&[1.0])[0], 6.5);
        assert_eq!(g.eval(&[1.5])[0], 9.0);
        assert_eq!(g.eval(&[5.0])[0], 9.0);
    }

    #[test]
    fn grid_rejects_empty_and_inconsistent() {
        let empty = GridData { shape: vec![0], channels: 1, values: vec![], pad: 0 };
        assert!(load_grid_signal(empty).is_err());
        let short = GridData { shape: vec![4], channels: 1, values: vec![1.0; 3], pad: 0 };
        assert!(load_grid_signal(short).is_err());
        let overpadded = GridData { shape: vec![4], channels: 1, values: vec![1.0; 4], pad: 2 };
        assert!(load_grid_signal(overpadded).is_err());
    }

    #[test]
    fn ngrd_round_trip_and_errors() {
        let data = GridData {
            shape: vec![2, 3],
            channels: 2,
            values: (0..12).map(|v| v as f64 * 0.5).collect(),
            pad: 0,
        };
        let mut buf = Vec::new();
        write_grid(&mut buf, &data).unwrap();
        assert!(buf.starts_with(b"NGRD1\n2 2 2 3 0\n"));
        assert_eq!(read_grid(&buf[..]).unwrap(), data);
        assert!(read_grid(&b"NGRD2\n1 1 1 0\n"[..]).is_err());
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_grid(truncated), Err(Error::GridFormat(_))));
    }

    #[test]
    fn box_antiderivatives() {
        let one = unit_box(1);
        assert_eq!(oracle_antiderivative(&one, 1, &[0.5]).unwrap(), vec![0.5]);
        assert_relative_eq!(oracle_antiderivative(&one, 2, &[1.0]).unwrap()[0], 0.5);
        let b = Signal::from_rects(1, vec![Rect { lo: vec![0.2], hi: vec![0.6], amp: 1.0 }]).unwrap();
        assert_relative_eq!(oracle_antiderivative(&b, 1, &[0.7]).unwrap()[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(box_antiderivative(0.4, 0.2, 0.6, 1), 0.2, epsilon = 1e-15);
        assert_eq!(box_antiderivative(0.1, 0.2, 0.6, 3), 0.0);
        assert!(oracle_antiderivative(&b, 0, &[0.7]).is_err());
    }

    #[test]
    fn cauchy_nodes_integrate_polynomials() {
        // k-fold integral of t^2 on [0, x] is 2 x^(k+2) / (k+2)!.
        for k in 1..=4u32 {
            for breaks in [vec![], vec![0.1, 0.55, 2.0]] {
                let nodes = cauchy_nodes(0.8, 3, k, &breaks);
                let got: f64 = nodes.iter().map(|(t, w)| w * t * t).sum();
                let fact: f64 = (1..=k + 2).map(f64::from).product();
                assert_relative_eq!(got, 2.0 * 0.8f64.powi(k as i32 + 2) / fact, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_form_on_rectangles() {
        let mut rng = RngStream::new(17);
        for d in [1usize, 2] {
            let s = make_rectangle_mixture(d, 4, 3).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
                for k in [1u32, 2] {
                    let orders = vec![k; d];
                    let exact = s.closed_form(&orders, &x).unwrap()[0];
                    let quad = signal_quadrature(&s, &orders, &x, &QuadratureConfig::default()).unwrap()[0];
                    assert!((exact - quad).abs() < 1e-5, "x={x:?} k={k} {exact} vs {quad}");
                }
            }
        }
    }

    #[test]
    fn breakpoints_follow_the_signal() {
        let r = Signal::from_rects(1, vec![Rect { lo: vec![0.6], hi: vec![0.8], amp: 1.0 }, Rect {
            lo: vec![0.2],
            hi: vec![0.6],
            amp: 1.0,
        }])
        .unwrap();
        assert_eq!(r.breakpoints(0), vec![0.2, 0.6, 0.8]);
        assert_eq!(make_ackley(2).unwrap().breakpoints(1), vec![0.5]);
        let g = load_grid_signal(GridData { shape: vec![4], channels: 1, values: vec![0.0; 4], pad: 1 }).unwrap();
        assert_eq!(g.breakpoints(0), vec![-0.25, 0.25, 0.75, 1.25]);
    }

    #[test]
    fn grid_oracle_is_exact_for_piecewise_linear_data() {
        // Two interior cells with values 0 and 1: f rises linearly from 0 at
        // x = 0.25 to 1 at x = 0.75 and is flat outside.
        let g = load_grid_signal(GridData { shape: vec![2], channels: 1, values: vec![0.0, 1.0], pad: 0 }).unwrap();
        let got = oracle_antiderivative(&g, 1, &[1.0]).unwrap()[0];
        assert_relative_eq!(got, 0.25 + 0.25, max_relative = 1e-13);
    }

    #[test]
    fn quadrature_matches_closed_form_on_smooth_box_products() {
        // A product of sines integrates in closed form along each axis.
        let f = crate::function::scalar_fn(2, |x| (3.0 * x[0]).sin() * (2.0 * x[1]).cos());
        let x = [0.9, 0.4];
        let got = quadrature_antiderivative(&f, &[2, 1], &x, &QuadratureConfig::default()).unwrap()[0];
        let ax = x[0] / 3.0 - (3.0 * x[0]).sin() / 9.0;
        let ay = (2.0 * x[1]).sin() / 2.0;
        assert_relative_eq!(got, ax * ay, max_relative = 1e-10);
    }

    #[test]
    fn quadrature_is_exact_for_separable_gaussians_in_2d() {
        // A^(1) of exp(-(x-c)^2/2s^2) factorizes into erf terms.
        let s = 0.1f64;
        let sig = Signal::from_gaussians(
            2,
            vec![Gaussian { weight: 1.0, center: vec![0.4, 0.6], width: s }],
        )
        .unwrap();
        let erf_int = |x: f64, c: f64| {
            let k = s * (std::f64::consts::PI / 2.0).sqrt();
            k * (statrs::function::erf::erf((x - c) / (s * 2f64.sqrt()))
                - statrs::function::erf::erf(-c / (s * 2f64.sqrt())))
        };
        let x = [0.7, 0.55];
        let got = oracle_antiderivative(&sig, 1, &x).unwrap()[0];
        let exact = erf_int(x[0], 0.4) * erf_int(x[1], 0.6);
        assert_relative_eq!(got, exact, max_relative = 1e-8);
    }

    #[test]
    fn oracle_derivative_recovers_signal() {
        let sigs = [make_gaussian_mixture(1, 4, 2).unwrap(), make_ackley(1).unwrap()];
        let h = 1e-4;
        for sig in &sigs {
            for i in 1..10 {
                let x = i as f64 / 10.0 + 0.013;
                let up = oracle_antiderivative(sig, 1, &[x + h]).unwrap()[0];
                let dn = oracle_antiderivative(sig, 1, &[x - h]).unwrap()[0];
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - sig.eval(&[x])[0]).abs() < 1e-2, "{} at {x}", sig.kind_name());
            }
        }
    }

    #[test]
    fn zero_order_axes_evaluate_in_place() {
        let sig = make_gaussian_mixture(2, 2, 4).unwrap();
        let x = [0.3, 0.45];
        let direct = sig.eval(&x)[0];
        let via = oracle_antiderivative_orders(&sig, &[0, 0], &x).unwrap()[0];
        assert_eq!(direct, via);
    }
}
