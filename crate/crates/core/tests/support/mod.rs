#![allow(dead_code)]

pub mod cifar;
pub mod gradcheck;
