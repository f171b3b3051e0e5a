#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod privacy;
pub mod protocol;
pub mod tensor;
