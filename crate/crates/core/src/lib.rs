pub mod docfmt;
pub mod geometry;
pub mod legend;
pub mod world;
pub mod mapping;
pub mod perception;
pub mod stmr;
pub mod plan;
pub mod planner;
pub mod eval;
pub mod synth;
pub mod cli;
