//! Network architecture, parameters, forward pass and loss.

pub mod activation;
pub mod config;
pub mod data;
pub mod forward;
pub mod params;

pub use activation::{ActivationSpec, HiddenMap, OutputActivation};
pub use config::NetworkConfig;
pub use data::DataDistribution;
pub use forward::{forward, loss_ln, predict, ForwardTrace};
pub use params::{GradVector, LayerParams, ParamVector};
