//! Seeded random matrices. Every generator takes an explicit RNG so results
//! depend only on the seed that created it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexMatrix, C64};

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with an index (splitmix64 finalizer), so that work
/// item `index` gets the same stream however the items are scheduled.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Wishart-type PSD matrix G*G with square Gaussian G.
pub fn random_psd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    complex_gaussian(n, n, rng).gram()
}

/// Unit-trace random PSD matrix.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let w = random_psd(n, rng);
    let t = w.trace().re;
    w.scale(1.0 / t)
}

/// Random unitary from the eigenvectors of a Gaussian Hermitian matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let g = complex_gaussian(n, n, rng);
    let h = (&g + &g.adjoint()).scale(0.5);
    crate::linalg::hermitian_eigen(&h)
        .expect("hermitian eigensolver on finite input")
        .eigenvectors
}

/// Vector with i.i.d. |N(0,1)| real entries.
pub fn nonneg_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            C64::new(x.abs(), 0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_and_repeat() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let b: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn density_has_unit_trace() {
        let rho = random_density(3, &mut rng_from_seed(1));
        assert!((rho.trace().re - 1.0).abs() < 1e-14);
    }
}
