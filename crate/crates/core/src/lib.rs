//! Transfer-learning pipeline for hierarchical yoga pose classification.

pub mod backbones;
pub mod dataset;
pub mod evalreport;
pub mod imageprep;
pub mod nn;
pub mod par;
pub mod seed;
pub mod synthetic;
pub mod tensorio;
pub mod training;
pub mod tuner;
