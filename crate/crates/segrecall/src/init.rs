use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segrecall_core::linalg::Matrix;

/// Seeded GCN layer weights, uniform in `[-0.1, 0.1]`. `dims` lists the
/// feature width before and after every layer. For tests and demos only.
pub fn random_weights(dims: &[usize], seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dims.windows(2)
        .map(|d| {
            let data = (0..d[0] * d[1]).map(|_| rng.random_range(-0.1..=0.1)).collect();
            Matrix::new(d[0], d[1], data).expect("dims match data")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_bounded() {
        let a = random_weights(&[3, 5, 2], 7);
        assert_eq!(a, random_weights(&[3, 5, 2], 7));
        assert_ne!(a, random_weights(&[3, 5, 2], 8));
        assert_eq!((a[0].rows(), a[0].cols(), a[1].rows(), a[1].cols()), (3, 5, 5, 2));
        assert!(a.iter().flat_map(|m| m.data()).all(|v| v.abs() <= 0.1));
    }
}
