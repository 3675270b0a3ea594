//! Front end: syntax tree, parser and canonical printer.

pub mod ast;
mod lexer;
pub mod parser;
pub mod printer;

pub use ast::*;
pub use parser::{parse, parse_file};
pub use printer::print;
