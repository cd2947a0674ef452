//! Monte-Carlo experiment runner: configuration, estimator tags, the link
//! simulation, metrics and CSV output, complexity accounting, and BER.

pub mod ber;
pub mod complexity;
pub mod config;
pub mod estimator;
pub mod experiment;
pub mod link;
pub mod metrics;
