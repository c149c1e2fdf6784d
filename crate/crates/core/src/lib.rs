//! Queueing models of pirated-content delivery, an event-driven simulation
//! oracle for them, and threshold-based token-abuse detection over
//! synthetic CDN access logs.
//!
//! The crate has five areas:
//!
//! * [`queueing`] — closed-form scenario times, the non-preemptive priority
//!   countermeasure, and the limiting legal price.
//! * [`des`] — deterministic discrete-event simulation used to validate
//!   every closed form.
//! * [`access`] — access-log schema, labeled synthetic workload generator,
//!   and windowed per-token aggregation.
//! * [`detect`] — IPs-per-token and request-volumetry flagging, recurrence
//!   analysis, and scoring against ground truth.
//! * [`report`] — parameter sweeps and histograms as plot-ready CSV/JSON.

pub mod access;
pub mod des;
pub mod detect;
pub mod io;
pub mod queueing;
pub mod report;
