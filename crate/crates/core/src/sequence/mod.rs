//! Pulse-sequence language: parsing, canonical printing and expansion into
//! flat timed schedules.

mod ast;
mod parser;
mod schedule;

pub use ast::{Item, ItemKind, Macro, Phase, SequenceAst, Span};
pub use parser::parse;
pub use schedule::{expand, validate, Event, EventSpec, Finding, Pulse, PulseSchedule, Severity, ValidationReport};
