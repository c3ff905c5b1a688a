//! Library half of the `gravcollapse` command-line tool.

pub mod commands;
pub mod validate;
