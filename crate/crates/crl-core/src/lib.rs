//! Categorical representation learning.
//!
//! Objects are embedded as vectors and relations as matrices acting on them;
//! both are learned from co-occurrence statistics with a negative-sampling
//! objective whose optimum is the pointwise mutual information between
//! objects. Two learned models can be aligned by an orthogonal map fitted to
//! morphism structure plus a handful of supervised anchor pairs, which yields
//! a translator between the vocabularies. A fusion operator on the tensor
//! product of the feature space coarse-grains strongly linked pairs into
//! composite objects, round by round.
//!
//! The math core is generic over the floating-point scalar; the crate root
//! exports `f64` aliases, which every shipped tool uses.

pub mod category;
pub mod corpus;
pub mod error;
pub mod functor;
pub mod fusion;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type for all shipped tools.
pub type Real = f64;
pub type RealMatrix = linalg::Matrix<Real>;
pub type RealCategoryModel = category::CategoryModel<Real>;
pub type RealFunctorModel = functor::FunctorModel<Real>;
pub type RealFusionOperator = fusion::FusionOperator<Real>;
