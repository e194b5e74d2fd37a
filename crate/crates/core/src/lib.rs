pub mod error;
pub mod geometry;
pub mod graph;
pub mod kinematics;
pub mod risk;
pub mod rng;
pub mod safety;
pub mod sensing;
pub mod engagement;
pub mod config;
pub mod sim;
pub mod experiments;
