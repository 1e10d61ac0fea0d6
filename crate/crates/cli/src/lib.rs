//! Configuration, pipeline and reporting for the `msv` experiment runner.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod validate;
