//! Particle ensembles over weight paths and the mean-field maps evaluated
//! against them.

mod ensemble;
mod maps;

pub use ensemble::{sample_ensemble, EnsembleCounts, MeasureSnapshot, PathEnsemble, TimeGrid};
pub use maps::{gammabar, gradbar, loss_bar, mbar, mean_field_trace, zbar_forward, AdjointClosure, MeanFieldTrace, PathPoint};

pub(crate) use maps::{average_map, loss_bar_unchecked, zbar_unchecked};
