// mdbook cannot run Rust listings against a workspace crate, so every chapter
// is pulled in as a module doc comment and `cargo test --doc` runs them.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/canonical_form.md")]
pub mod canonical_form {}
#[doc = include_str!("src/matrix_functions.md")]
pub mod matrix_functions {}
#[doc = include_str!("src/correlations.md")]
pub mod correlations {}
#[doc = include_str!("src/estimation.md")]
pub mod estimation {}
#[doc = include_str!("src/command_line.md")]
pub mod command_line {}
#[doc = include_str!("../README.md")]
pub mod readme {}
