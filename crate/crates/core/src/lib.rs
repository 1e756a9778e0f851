//! Read-threshold selection for flash memory: channel models, noise
//! parameter estimation from a few reads, information-theoretic rewards,
//! dynamic-programming read policies and an LDPC evaluation code.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod errordist;
pub mod estimation;
pub mod infotheory;
pub mod ldpc;
pub mod numerics;
pub mod policy;

pub use error::{Error, Result};
