#![allow(dead_code)]

pub mod fd_model;
pub mod five_nodes;
pub mod oracle;
