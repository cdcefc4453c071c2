use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// Seeded generator used everywhere randomness enters training.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Glorot/Xavier uniform: `U(−a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::new(shape, data).expect("glorot shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_bounds_and_determinism() {
        let a = glorot_uniform(&[4, 6], 6, 4, &mut rng_from_seed(3));
        let b = glorot_uniform(&[4, 6], 6, 4, &mut rng_from_seed(3));
        assert_eq!(a, b);
        let bound = (6.0f64 / 10.0).sqrt();
        assert!(a.data().iter().all(|v| v.abs() <= bound));
    }
}
