//! File formats: line-based key=value configs and manifests, netpbm images,
//! raw float arrays, and checkpoints. This module is the format authority
//! for everything the CLI reads or writes.

pub mod arrays;
pub mod checkpoint;
pub mod config;
pub mod image;
pub mod kv;
pub mod manifest;
