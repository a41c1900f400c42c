//! Configuration-aware accelerator dispatch: IR, passes, simulator and
//! roofline analysis.

pub mod accel;
pub mod benchgen;
pub mod ir;
pub mod passes;
pub mod presets;
pub mod random;
pub mod roofline;
pub mod sim;

pub use accel::{load_descriptor, AcceleratorDescriptor, Scheme};
pub use ir::{parse_program, print_program, verify, Program};
pub use sim::{simulate, trace_equivalent, SimResult};
