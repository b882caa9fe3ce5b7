//! Classification losses and the uncertainty sets they induce by convex
//! conjugation, with a kernel minimum-distance learner built on top.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod loss;
pub mod model;
pub mod oracle;
pub mod samples;
pub mod solver;
pub mod uncertainty;

pub use data::Dataset;
pub use error::{Error, Result};
pub use kernel::{Kernel, KernelExpansion};
pub use loss::{ExtendedReal, Interval, Loss, LossKind};
pub use model::DecisionModel;
pub use samples::Samples;
