pub mod analysis;
pub mod cli;
pub mod model;
pub mod report;
pub mod runner;
pub mod stack;
pub mod transport;
