//! Observation points and Daikon-format trace files.

pub mod daikon;
pub mod instrument;

pub use daikon::{
    read_decls, read_dtrace, write_decls, write_dtrace, PptVariable, ProgramPoint, RepType, TraceError, TraceRecord,
    TraceValue,
};
pub use instrument::{instrument, Binding, Bindings, BlockSelection, InstrumentationPlan, Instrumentation, Sampling, TraceRecorder};
