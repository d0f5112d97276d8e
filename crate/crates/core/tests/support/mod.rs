#![allow(dead_code)]
pub mod planted;
pub mod quad;
