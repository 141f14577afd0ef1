pub mod config;
pub mod manifest;
pub mod sgrid;
pub mod svg;
