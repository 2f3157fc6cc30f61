#![allow(dead_code)]

pub mod corpus;
pub mod heads;
pub mod toy;
