pub mod compare;
pub mod decompose;
pub mod region;
pub mod simulate;
