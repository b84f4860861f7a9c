pub mod math;
pub mod physics;
pub mod scene;
pub mod env;
pub mod nn;
pub mod seeds;
pub mod selftest;
pub mod agent;
pub mod eval;
pub mod io;
