// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comparison;
pub mod convex;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod numerics;
pub mod wave;

pub use error::{Error, Result};
pub use feedback::{CoefficientField, ConvexityReport, Family, FeedbackLaw, LambdaLimit, Profile};
