pub mod bench;
pub mod eval;
pub mod fit;
pub mod gen_bases;
pub mod nonlin_demo;
pub mod synth;
