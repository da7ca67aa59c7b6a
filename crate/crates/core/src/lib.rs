//! Monte Carlo simulation for spreadsheet-style formula models, with detectors
//! that turn simulation evidence into warnings about broken model logic.

pub mod analytics;
pub mod audit;
pub mod formula;
pub mod simulator;
pub mod stochastic;
