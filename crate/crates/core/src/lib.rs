//! Diagonal-norm summation-by-parts operators on triangles and tetrahedra.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`); the aliases at
//! the bottom fix it to `f64`, which is what the studies and the CLI use.

pub mod advection;
pub mod assembly;
pub mod cubature;
pub mod linalg;
pub mod matrix;
pub mod mesh;
pub mod operators;
pub mod poly;
pub mod simplex;
mod scalar;

pub use matrix::DenseMatrix;
pub use scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported degree p={p} (supported: 1 to 4)")]
    UnsupportedDegree { p: usize },
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("iteration did not converge (residual {residual_norm:e})")]
    NonConvergence { best: Vec<f64>, residual_norm: f64 },
    #[error("cubature weight {index} is not positive ({value:e})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("no admissible cubature found for d={d}, p={p}")]
    NoAdmissibleRule { d: usize, p: usize },
    #[error("cubature check failed: {0}")]
    CubatureCheck(String),
    #[error("facet nodes cannot interpolate the facet basis: {0}")]
    SingularInterpolation(String),
    #[error("inconsistent linear system (residual {residual:e})")]
    InconsistentSystem { residual: f64 },
    #[error("element {element} has non-positive Jacobian determinant {det:e}")]
    InvertedElement { element: usize, det: f64 },
    #[error("facet mismatch: {0}")]
    FacetMismatch(String),
    #[error("non-finite state at t={time}")]
    NonFiniteState { time: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub type Matrix = DenseMatrix<f64>;

pub type Rule = cubature::CubatureRule<f64>;
pub type Nodes = poly::NodeSet<f64>;
pub type Operators = operators::ElementOperators<f64>;
pub type Mesh = mesh::PeriodicTriMesh<f64>;
pub type NodeMap = mesh::GlobalNodeMap<f64>;
pub type Global = assembly::GlobalOperators<f64>;
pub type Problem = advection::Advection<f64>;
