//! Model-file parsing, controller documents, and Monte-Carlo simulation
//! backing the `pomdp` command-line tool.

pub mod document;
pub mod format;
pub mod simulate;
