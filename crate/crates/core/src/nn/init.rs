use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

/// Xavier/Glorot uniform initialization: entries drawn from
/// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
///
/// Weights are stored `[fan_in, fan_out]` (inputs multiply from the left).
pub fn xavier_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = xavier_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("consistent shape")
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Seeded convenience wrapper around [`xavier_uniform`].
pub fn xavier_init(shape: (usize, usize), seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_uniform(shape.0, shape.1, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_within_bound() {
        let t = xavier_init((4, 4), 3);
        let bound = (6.0f64 / 8.0).sqrt();
        assert!((bound - 0.866).abs() < 1e-3);
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn seeded_draws_repeat() {
        assert_eq!(xavier_init((5, 7), 11), xavier_init((5, 7), 11));
        assert_ne!(xavier_init((5, 7), 11), xavier_init((5, 7), 12));
    }

    #[test]
    fn empirical_variance_matches_glorot() {
        // 10^5 draws; uniform on (-a, a) has variance a^2 / 3 = 2 / (fan_in + fan_out).
        let t = xavier_init((250, 400), 5);
        let n = t.len() as f64;
        assert_eq!(t.len(), 100_000);
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / 650.0;
        assert!((var - expected).abs() / expected < 0.05, "var {var} vs {expected}");
    }
}
