//! Checks shared by the topic test targets and the acceptance suite.
#![allow(dead_code)]

pub mod learner;
pub mod matcher;
pub mod oracles;
pub mod shield;
pub mod tamper;
