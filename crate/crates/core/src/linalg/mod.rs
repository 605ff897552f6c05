//! Dense linear algebra used by construction and diagnostics.

mod eig;
mod lm;
mod lstsq;

pub use eig::{eig_general, sym_eigenvalues, Complex};
pub use lm::{levenberg_marquardt, LmOptions};
pub use lstsq::{min_norm_lstsq, numerical_rank, singular_values};

/// Default relative rank threshold for minimum-norm solves.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;
