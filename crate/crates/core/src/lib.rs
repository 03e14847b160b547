pub mod attr;
pub mod dsl;
pub mod eval;
pub mod harness;
pub mod labeling;
pub mod learn;
pub mod oracle;
pub mod select;
