//! Simulation of leak-like demand anomalies and sensor faults on
//! graph-structured infrastructure networks, and localization of those
//! anomalies from sparse sensor time series.
//!
//! The crate is organised along the pipeline:
//!
//! * [`network`]: topology, node coordinates, sensor placement and distances.
//! * [`dynamics`]: the contractive transition map, demand generation,
//!   steady states and the measurement channel.
//! * [`anomaly`]: type-I (demand) and type-II (sensor) anomaly injection
//!   and scenario sweeps.
//! * [`learners`]: tree ensembles, logistic regression and a linear SVM
//!   with feature-importance extraction.
//! * [`localization`]: random, mean-window, KS and model-based localizers.
//! * [`evaluation`]: distance metrics, precision/recall, aggregation and
//!   error maps.
//! * [`theory`]: numerical checks of the fixpoint, Hölder and exponential
//!   decay bounds.
//! * [`experiment`]: config-driven end-to-end runs and CSV ingestion.
//!
//! Data-parallel loops (tree fitting, scenario sweeps, theory sweeps) run on
//! rayon when the `parallel` feature is enabled and fall back to plain
//! iterators otherwise. Results never depend on the number of workers.

pub mod anomaly;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod experiment;
pub mod io;
pub mod learners;
pub mod localization;
pub mod matrix;
pub mod network;
pub mod seed;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use network::{Hops, NetworkGraph, NodeId};
