// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod geom;
pub mod matching;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rgbd;
pub mod synth;
