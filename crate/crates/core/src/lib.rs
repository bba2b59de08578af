pub mod cgf;
pub mod error;
pub mod numeric;
pub mod field;
pub mod series;
pub mod tilt;
pub mod risk;
pub mod regress;
pub mod mc;
pub mod cli;
