//! Recurrent online trajectory prediction for UAVs.

pub mod bench;
pub mod engine;
pub mod feed;
pub mod geo;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod predictor;
pub mod preprocess;
pub mod report;
pub mod seed;
pub mod synth;
