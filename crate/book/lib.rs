//! mdbook cannot resolve dependencies when it tests a book, so each chapter
//! is pulled in as the docs of an empty module and `cargo test --doc` runs
//! the listings. One module per chapter keeps failures traceable.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/model.md")]
pub mod model {}
#[doc = include_str!("src/policy.md")]
pub mod policy {}
#[doc = include_str!("src/fixed_point.md")]
pub mod fixed_point {}
#[doc = include_str!("src/feasibility.md")]
pub mod feasibility {}
#[doc = include_str!("src/optimal.md")]
pub mod optimal {}
#[doc = include_str!("src/oracle.md")]
pub mod oracle {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
