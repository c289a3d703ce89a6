pub mod align;
pub mod criterion;
pub mod curve;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod partition;
pub mod template;
pub mod warp;
pub mod weight;
pub mod engine;
pub mod stats;
pub mod io;
pub mod sim;
pub mod cli;
