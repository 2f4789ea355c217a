#![allow(dead_code)]

pub mod census;
pub mod metrics;
pub mod oracles;
