#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod units;
pub(crate) mod matser;
pub mod numeric;
pub mod intlin;
pub mod graph_core;
pub mod fixtures;
pub mod quantize;
pub mod decompose;
pub mod extract;
pub mod dynamics;
pub mod io;
