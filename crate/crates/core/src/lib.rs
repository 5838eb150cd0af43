//! Compiles a 4D BIM project and a construction robot knowledge base into a
//! robot simulation world, derives the extra modeling requirements robots
//! need, and runs an action-level simulation of a mobile manipulator
//! installing interior wall frames among scripted workers.

pub mod analytics;
pub mod fleet;
pub mod kb;
pub mod model;
pub mod reqs;
pub mod sim;
pub mod worldgen;
