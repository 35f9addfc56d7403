pub mod data;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;
