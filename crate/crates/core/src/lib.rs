//! Temporal contact graphs with indirect (same place, different time)
//! co-location links.
//!
//! The crate covers the whole pipeline: turning raw location updates into
//! contact graphs, fitting the generative model, synthesizing graphs and
//! their SPST / BADN baselines, and running airborne SIR diffusion on them.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod diffusion;
pub mod distributions;
pub mod error;
pub mod estimator;
pub mod generator;
pub mod graph;
pub mod ingestion;
pub mod params;
pub mod rng;

pub use analysis::{
    ape_mape, clustering_coefficients, degree_stats, project_static, rse, ApeReport, Clustering,
    DegreeStats, Histogram, StaticGraph,
};
pub use diffusion::{
    infection_probability, link_exposure, run_sir, BadnExposure, ContactSource, DiseaseParams,
    EpidemicTimeSeries, GraphExposure, LinkTimes,
};
pub use error::{Result, SpdtError};
pub use estimator::{estimate_pc, estimate_power_law, estimate_q, estimate_rho, fit_all, CipSamples};
pub use generator::{clip_to_spst, generate_badn, synthesize_graph, BadnModel};
pub use graph::{ActiveCopy, LinkComponent, NodeId, SpdtLink, TemporalGraph};
pub use ingestion::{build_real_graph, densify, extract_visits, LocationUpdate, ProximityVisit};
pub use params::{per_step_probability, validate_params, SpdtParams, Step, StepParams, TimeGrid};
pub use rng::RandomSource;
