pub mod arith;
pub mod channel;
pub mod error;
pub mod flops;
pub mod harness;
pub mod inversion;
pub mod linalg;
pub mod ltbf;
pub mod metrics;
