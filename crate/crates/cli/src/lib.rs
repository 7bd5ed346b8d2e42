//! Library side of the CLI crate.
