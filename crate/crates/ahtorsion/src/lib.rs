pub mod jets;
pub mod exprlang;
pub mod tensor;
pub mod matfield;
pub mod geometry;
pub mod unstruct;
pub mod catalog;
pub mod cli;
pub mod diagnostics;
pub mod flow;
pub mod numfmt;
