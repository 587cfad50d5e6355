#![allow(dead_code)]

pub mod rk4;
