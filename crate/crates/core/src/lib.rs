//! Detection of physically antagonistic agents in a robot swarm performing
//! Voronoi coverage.
//!
//! The pipeline simulates normal and antagonistic deployments ([`sim`],
//! [`adversaries`]), featurizes each robot's context and action
//! ([`featurize`]), fits a conditional normalizing flow on normal behavior
//! ([`flow`]) and classifies agents from the flow's log-densities
//! ([`detector`], [`evaluation`]).

pub mod adversaries;
pub mod detector;
pub mod evaluation;
pub mod featurize;
pub mod flow;
pub mod geometry;
pub mod pipeline;
pub mod rng;
pub mod sim;
