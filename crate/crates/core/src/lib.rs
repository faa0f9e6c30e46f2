//! Deep-network SGD dynamics, their McKean-Vlasov mean-field limit and the
//! ideal-particle coupling between the two.

pub mod backprop;
pub mod error;
pub mod harness;
pub mod ideal;
pub mod linalg;
pub mod mckean_vlasov;
pub mod meanfield;
pub mod net;
pub mod seeding;
pub mod sgd;

pub use error::{Error, Result};
pub use net::{
    forward, loss_ln, predict, ActivationSpec, DataDistribution, ForwardTrace, GradVector, NetworkConfig,
    OutputActivation, ParamVector,
};
