pub mod eval;
pub mod experiment;
pub mod gen;
pub mod predict;
pub mod render;
pub mod train;
