#![no_std]

extern crate alloc;

mod math;
pub mod kernels;
pub mod linalg;
pub mod mdp;
pub mod env;
pub mod evaluation;
pub mod oracle;
pub mod policy;
pub mod schedule;
pub mod npg;
pub mod analysis;
