#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distillation;
pub mod expr;
pub mod ipm;
pub mod kkt;
pub mod sparse;
