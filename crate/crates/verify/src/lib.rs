//! Holds the `acceptance` test target (`tests/acceptance.rs`); no library code.
//!
//! Run with `cargo test -p ulab-verify --test acceptance`.
