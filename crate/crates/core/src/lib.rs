//! Spatiotemporal road-safety analysis over crash point events.
//!
//! The crate is organised as a pipeline of independent stages:
//!
//! * [`ingest`]: parse crash / POI / zone / network files into validated
//!   domain objects, compute severity-weighted indices (SWI), assign events
//!   to zones and build temporal aggregates.
//! * [`netkde`]: snap events onto a road network, subdivide edges into
//!   lixels and estimate event density per linear unit with a Gaussian
//!   kernel over shortest-path distance.
//! * [`autocorr`]: queen-contiguity spatial weights, global Moran's I and
//!   local (LISA) statistics with permutation significance.
//! * [`geodetector`]: Jenks natural-breaks stratification plus factor and
//!   interaction detectors (power-determinant q statistics).
//! * [`tensor`]: region x age x hour SWI tensors, nonnegative Tucker
//!   decomposition with multiplicative updates, KL-divergence core-size
//!   selection and pattern extraction.
//!
//! All stochastic routines take an explicit seed and derive per-replicate
//! RNG streams from it, so results are reproducible regardless of
//! execution order.

pub mod autocorr;
pub mod geodetector;
pub(crate) mod geom;
pub mod ingest;
pub mod netkde;
pub mod tensor;

pub use ingest::{
    AgeGroup, CrashFilter, CrashRecord, Dataset, DayClass, PoiCategory, PoiRecord, Severity,
    SeverityCounts, TemporalHeatmap, Zone, ZoneField,
};
