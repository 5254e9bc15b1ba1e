//! Shared fixtures for the benchmarks.

use gmf_core::operator::{derive_seed, random_vector};
use gmf_core::{singular_profile, synthesize_test_matrix, DVector, DenseOperator, ProfileKind};

/// Square test matrix with log-spaced singular values on `[0.1, 10]` and its start vector.
pub fn fixture(n: usize, seed: u64) -> (DenseOperator, DVector<f64>) {
    let prof = singular_profile(ProfileKind::Logspace, n, 0.1, 10.0).expect("valid profile");
    let a = synthesize_test_matrix(n, n, &prof, seed).expect("valid shape");
    (a, random_vector(n, derive_seed(seed, 3)))
}
