//! Acceptance suite for the splat4d workspace.
//!
//! The checks live in `tests/acceptance.rs` and run as
//! `cargo test -p splat4d-validation --test acceptance`; pass criterion
//! numbers after `--` to run a subset. The package sorts after the library
//! and CLI packages, so `cargo test --workspace` runs it last.
