//! Drivers behind the `cellrom` command line: run specifications,
//! training/test set construction, the experiment pipelines, and the
//! verification suite. The binary in `main.rs` only parses arguments and
//! dispatches here.

pub mod drivers;
pub mod experiments;
pub mod sets;
pub mod spec;
pub mod verify;

pub use spec::RunSpec;
