//! Experiment drivers behind the `flashread` command line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod compare;
pub mod config;
pub mod ldpc_cmd;
pub mod output;
pub mod policy_cmd;
pub mod propagation;
pub mod seeds;
pub mod simulate;
pub mod stats;
pub mod strategy;
pub mod table1;
