//! Simulation core for DAG growth driven by i.i.d. attachment delays:
//! delay laws and their derived constants, delay traces, regeneration
//! detection, and the statistics used to compare runs against the
//! closed-form predictions.

pub mod analysis;
pub mod construction;
pub mod delay;
pub mod engine;
pub mod export;
pub mod fenwick;
pub mod height;
pub mod regen;
pub mod rng;
pub mod stats;
pub mod trace;
