pub mod geometry;
pub mod sampling;
pub mod mobility;
pub mod stats;
pub mod detection;
pub mod stationary;
pub mod percolation;
pub mod config;
pub mod trace;
pub mod experiment;
