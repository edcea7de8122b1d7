//! Gradient conflict between the two objectives, box statistics of the
//! per-block cosines, variance/invariance/covariance of block features and
//! mean attention distance.

mod attention;
mod boxplot;
mod conflict;
mod vic;

pub use attention::{attention_distance, attention_distance_from_maps, AttnDistRow};
pub use boxplot::{box_stats, quantile_r7, BlockBox, BoxStats};
pub use conflict::{grad_conflict, ConflictOutput, GradConflictRecord};
pub use vic::{vic_per_block, vic_stats, VicRow};

#[cfg(test)]
mod tests;
