//! Generalized matrix functions `f◇(A)·b` by polynomial and rational Krylov
//! projection, with a short-recurrence rational Golub-Kahan process, a-priori
//! error bounds and an experiment harness.

pub mod bounds;
pub mod error;
pub mod functions;
pub mod golub_kahan;
pub mod harness;
pub mod operator;
pub mod poles;
pub mod rational_gk;
pub mod rational_krylov;
pub mod rectangular;
pub mod reference;
pub mod trace;

pub use bounds::{
    chui_hasson_constant, polynomial_bound_curve, quasi_optimal_rational_bound, quasi_optimal_rational_curve, rho_of,
    si_closed_form, si_style_bound, BoundCurve, EllipseSampler,
};
pub use error::{ErrorCategory, GmfError, Result};
pub use functions::{builtin, companion_g, odd_monomial, ScalarFunction};
pub use golub_kahan::{gk_approximate, gk_step, BidiagonalState, GkStatus};
pub use harness::{emit_dat, format_sci, load_config, run, run_file, ExperimentConfig, RunMode, RunSummary};
pub use operator::{
    haar_orthogonal, singular_profile, solve_shifted_gram, synthesize_test_matrix, DenseOperator, LinearOperator,
    ProfileKind, SingularProfile,
};
pub use poles::{extended_poles, load_user_poles, polynomial_poles, si_optimal_pole, Pole, PoleKind, PoleSequence};
pub use rational_gk::{reconstruct_dense, rgk_run, rgk_step, QuasiseparableUpper, RationalGolubKahan, RgkRun};
pub use rational_krylov::{project, rational_arnoldi, rational_gmf_approximate, GmfProjection, RationalArnoldi};
pub use rectangular::{gmf_via_transpose, run_method, KrylovMethod};
pub use reference::{check_identities, gmf_apply_reference, gmf_dense, CompactSvd};
pub use trace::{KrylovRun, RunOptions, StopReason};

pub use nalgebra::{DMatrix, DVector};
