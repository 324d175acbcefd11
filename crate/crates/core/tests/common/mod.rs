#![allow(dead_code)]

pub mod bessel;
pub mod harmonic;
pub mod metric;
