pub mod autograd;
pub mod data;
pub mod distill;
pub mod experiment;
pub mod landscape;
pub mod models;
pub mod trainer;
