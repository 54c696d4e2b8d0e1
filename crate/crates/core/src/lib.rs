//! Experiments on the implicit bias of gradient descent in the last layer of
//! a neural network.
//!
//! A network trained to zero loss on a classification task has a last weight
//! layer whose direction approaches the hard-margin SVM fitted to the
//! last-hidden-layer features. This crate provides the pieces needed to
//! observe that empirically:
//!
//! * [`data`]: deterministic synthetic 2-D datasets and separability tests,
//! * [`net`]: a small fully connected network with exact backprop and
//!   GD / SGD / momentum training that records the last layer over time,
//! * [`svm`]: exact hard-margin binary and multi-class SVM solvers with KKT
//!   certificates,
//! * [`analysis`]: alignment curves, log-growth fits, gradient decomposition
//!   and decision-boundary grids.

pub mod analysis;
pub mod data;
pub mod linalg;
pub mod lp;
pub mod net;
pub mod svm;
