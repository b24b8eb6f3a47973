//! Perch location identification: picks the best branch segment of a tree
//! mask for a claw-equipped drone to grasp.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branch;
pub mod drone;
pub mod geom;
pub mod graph;
pub mod mask;
pub mod mechanics;
pub mod morphology;
pub mod oracle;
pub mod overlay;
pub mod pipeline;
pub mod profile;
pub mod ranking;
pub mod report;
pub mod window;

#[cfg(test)]
pub(crate) mod testutil;
