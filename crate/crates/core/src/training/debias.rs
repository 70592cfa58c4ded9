//! Gradient bias of stochastic losses on a one-parameter toy.
//!
//! The model output is a noisy estimate `g = theta + eta`, `eta ~ N(0, s^2)`,
//! supervised against the target 0. The true gradient is that of the loss
//! applied to the noise-free output `E[g] = theta`.

use crate::mc::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToyGradient {
    /// `L2'(g_A) * dg_B/dtheta` with independent realizations A and B.
    L2Independent,
    /// `huber'(g) * dg/dtheta` from a single realization.
    HuberCoupled { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DebiasToy {
    pub theta: f64,
    pub noise_sd: f64,
}

impl DebiasToy {
    /// Gradient of the loss at the noise-free output.
    pub fn true_gradient(&self, kind: ToyGradient) -> f64 {
        match kind {
            ToyGradient::L2Independent => 2.0 * self.theta,
            ToyGradient::HuberCoupled { delta } => self.theta.clamp(-delta, delta),
        }
    }

    /// One single-sample gradient estimate.
    pub fn sample_gradient(&self, kind: ToyGradient, rng: &mut RngStream) -> f64 {
        let mut draw = || self.theta + self.noise_sd * rng.standard_normal();
        match kind {
            ToyGradient::L2Independent => {
                let g_a = draw();
                // d g_B / d theta = 1 whatever the noise; draw it anyway so
                // both estimators consume the same stream layout.
                let _g_b = draw();
                2.0 * g_a
            }
            ToyGradient::HuberCoupled { delta } => draw().clamp(-delta, delta),
        }
    }

    /// `(mean, standard error)` of `trials` gradient estimates.
    pub fn trial_stats(&self, kind: ToyGradient, trials: usize, seed: u64) -> (f64, f64) {
        let mut rng = RngStream::new(seed);
        let xs: Vec<f64> = (0..trials).map(|_| self.sample_gradient(kind, &mut rng)).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_coupling_is_biased_and_l2_is_not() {
        let toy = DebiasToy { theta: 2.0, noise_sd: 3.0 };
        let huber = ToyGradient::HuberCoupled { delta: 1.0 };
        let (m, se) = toy.trial_stats(huber, 200, 1);
        assert!((m - toy.true_gradient(huber)).abs() > 3.0 * se, "{m} {se}");
        let (m, se) = toy.trial_stats(ToyGradient::L2Independent, 200, 1);
        assert!((m - toy.true_gradient(ToyGradient::L2Independent)).abs() < 3.0 * se, "{m} {se}");
    }
}
