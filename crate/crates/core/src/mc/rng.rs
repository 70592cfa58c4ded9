//! Counter-based pseudo-random stream.

use statrs::distribution::{ContinuousCDF, Normal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 in counter form: draw `i` is a pure function of `(seed, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub counter: u64,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Independent child stream, keyed by `key`.
    pub fn fork(&self, key: u64) -> Self {
        Self::new(mix64(self.seed ^ mix64(key.wrapping_add(GOLDEN))))
    }

    /// The value at an arbitrary counter position, without advancing.
    pub fn at(&self, counter: u64) -> u64 {
        mix64(self.seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform in `[-1, 1)` rounded to the nearest f32, used for weight init.
    pub fn uniform_f32_symmetric(&mut self) -> f32 {
        let bits = (self.next_u64() >> 40) as u32; // 24 bits
        (bits as f32) * (2.0 / (1u32 << 24) as f32) - 1.0
    }

    pub fn standard_normal(&mut self) -> f64 {
        // Open interval so the inverse CDF stays finite.
        let u = ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        inverse_normal_cdf(u)
    }
}

/// A source of uniform variates in `[0, 1)`.
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;
}

impl UniformSource for RngStream {
    fn next_uniform(&mut self) -> f64 {
        self.uniform()
    }
}

/// Walks the coordinates of an already drawn point.
pub struct SliceSource<'a> {
    values: &'a [f64],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(values: &'a [f64]) -> Self {
        Self { values, pos: 0 }
    }
}

impl UniformSource for SliceSource<'_> {
    fn next_uniform(&mut self) -> f64 {
        let v = self.values[self.pos];
        self.pos += 1;
        v
    }
}

pub fn inverse_normal_cdf(u: f64) -> f64 {
    thread_local! {
        static STD: Normal = Normal::standard();
    }
    STD.with(|n| n.inverse_cdf(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_and_counter_give_identical_draw() {
        let a = RngStream { seed: 7, counter: 41 };
        let mut b = RngStream::new(7);
        for _ in 0..41 {
            b.next_u64();
        }
        assert_eq!(a.at(41), b.next_u64());
    }

    #[test]
    fn uniforms_stay_in_unit_interval() {
        let mut r = RngStream::new(3);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            let w = r.uniform_f32_symmetric();
            assert!((-1.0..1.0).contains(&w));
        }
    }

    #[test]
    fn forks_differ() {
        let r = RngStream::new(1);
        assert_ne!(r.fork(0).at(0), r.fork(1).at(0));
    }

    #[test]
    fn normal_moments() {
        let mut r = RngStream::new(11);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| r.standard_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }
}
