//! Sobol low-discrepancy sequence, Gray-code ordered, with an optional
//! random digital shift.

use super::rng::RngStream;
use crate::error::{invalid, Result};

pub const MAX_SOBOL_DIMS: usize = 8;
const BITS: usize = 32;

// Joe & Kuo, new-joe-kuo-6.21201: (s, a, m_1..m_s) for dimensions 2..=8.
// Dimension 1 is the van der Corput sequence.
const PRIMITIVES: [(u32, &[u32]); MAX_SOBOL_DIMS - 1] = [
    (0, &[1]),
    (1, &[1, 3]),
    (1, &[1, 3, 1]),
    (2, &[1, 1, 1]),
    (1, &[1, 1, 3, 3]),
    (4, &[1, 3, 5, 13]),
    (2, &[1, 1, 5, 5, 17]),
];

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (i, v) in v.iter_mut().enumerate() {
            *v = 1 << (31 - i);
        }
        return v;
    }
    let (a, m) = PRIMITIVES[dim - 1];
    let s = m.len();
    for i in 0..s.min(BITS) {
        v[i] = m[i] << (31 - i);
    }
    for i in s..BITS {
        v[i] = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                v[i] ^= v[i - k];
            }
        }
    }
    v
}

#[derive(Debug, Clone)]
pub struct SobolSampler {
    dims: usize,
    next_index: u64,
    directions: Vec<[u32; BITS]>,
    shift: Vec<u32>,
}

impl SobolSampler {
    /// Unscrambled sequence; the first emitted point is index 1.
    pub fn new(dims: usize) -> Result<Self> {
        if dims == 0 || dims > MAX_SOBOL_DIMS {
            return Err(invalid(format!(
                "Sobol sampler supports 1..={MAX_SOBOL_DIMS} dims, got {dims}"
            )));
        }
        Ok(Self {
            dims,
            next_index: 1,
            directions: (0..dims).map(direction_numbers).collect(),
            shift: vec![0; dims],
        })
    }

    /// Sequence with a random digital (XOR) shift drawn from `rng`. Every
    /// point is then marginally uniform, so estimators built on it are unbiased.
    pub fn scrambled(dims: usize, rng: &mut RngStream) -> Result<Self> {
        let mut s = Self::new(dims)?;
        for sh in &mut s.shift {
            *sh = (rng.next_u64() >> 32) as u32;
        }
        Ok(s)
    }

    /// Draws a fresh shift and restarts at index 1, reusing the direction
    /// numbers. Equivalent to `scrambled(self.dims(), rng)`.
    pub fn rescramble(&mut self, rng: &mut RngStream) {
        for sh in &mut self.shift {
            *sh = (rng.next_u64() >> 32) as u32;
        }
        self.next_index = 1;
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    fn integer_point(&self, index: u64, out: &mut [u32]) {
        let gray = index ^ (index >> 1);
        for (d, o) in out.iter_mut().enumerate() {
            let mut x = 0u32;
            let mut g = gray;
            let mut bit = 0;
            while g != 0 && bit < BITS {
                if g & 1 == 1 {
                    x ^= self.directions[d][bit];
                }
                g >>= 1;
                bit += 1;
            }
            *o = x ^ self.shift[d];
        }
    }

    /// Writes the next point into `out` (length `dims`) and advances.
    pub fn next_into(&mut self, out: &mut [f64]) {
        let mut ints = [0u32; MAX_SOBOL_DIMS];
        self.integer_point(self.next_index, &mut ints[..self.dims]);
        for (o, &i) in out.iter_mut().zip(&ints[..self.dims]) {
            *o = i as f64 * (1.0 / 4_294_967_296.0);
        }
        self.next_index += 1;
    }

    /// Like [`next_into`](Self::next_into) but centred in the 2^-32 cell, so
    /// no coordinate is exactly 0. Used before inverse-CDF transforms.
    pub fn next_open_into(&mut self, out: &mut [f64]) {
        let mut ints = [0u32; MAX_SOBOL_DIMS];
        self.integer_point(self.next_index, &mut ints[..self.dims]);
        for (o, &i) in out.iter_mut().zip(&ints[..self.dims]) {
            *o = (i as f64 + 0.5) * (1.0 / 4_294_967_296.0);
        }
        self.next_index += 1;
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let mut p = vec![0.0; self.dims];
        self.next_into(&mut p);
        p
    }
}
