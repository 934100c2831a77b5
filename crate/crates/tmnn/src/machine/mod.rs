//! Machine descriptions and reference interpreters.
//!
//! Raw (`Raw*`) types mirror the on-disk description files one to one and are
//! produced by serde. `validate` turns a raw description into an
//! index-resolved machine, collecting *all* problems instead of stopping at
//! the first. The interpreters in [`turing`] and [`stack`] define the ground
//! truth every compiled network is tested against.

pub mod stack;
pub mod turing;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use stack::{
    RawStackMachine, RawStackRule, StackConfiguration, StackMachine, StackOp, StackRule, TopClass,
};
pub use turing::{Configuration, Move, RawTransition, RawTuringMachine, Transition, TuringMachine};

/// Problems found while validating a machine description.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("machine declares no states")]
    NoStates,
    #[error("machine declares no symbols")]
    NoSymbols,
    #[error("name `{0}` is empty or contains whitespace")]
    BadName(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("unknown state `{name}` referenced by {site}")]
    UnknownState { name: String, site: String },
    #[error("unknown symbol `{name}` referenced by {site}")]
    UnknownSymbol { name: String, site: String },
    #[error("duplicate transition for state `{0}` reading `{1}`")]
    DuplicateTransition(String, String),
    #[error("transition declared from terminal state `{0}`")]
    TransitionFromTerminal(String),
    #[error("move must be -1 or 1, got {0}")]
    BadMove(i64),
    #[error("machine must have at least one stack")]
    NoStacks,
    #[error("rule for state `{state}` lists {got} stack classes, machine has {want} stacks")]
    BadClassCount { state: String, got: usize, want: usize },
    #[error("rule for state `{state}` lists {got} stack ops, machine has {want} stacks")]
    BadOpCount { state: String, got: usize, want: usize },
    #[error("unknown stack class `{0}` (expected `empty`, `0`, or `1`)")]
    BadClass(String),
    #[error("unknown stack op `{0}` (expected `noop`, `push0`, `push1`, or `pop`)")]
    BadOp(String),
    #[error("duplicate rule for state `{0}` with classes {1}")]
    DuplicateRule(String, String),
    #[error("rule for state `{state}` pops stack {stack} whose class is `empty`")]
    PopOnEmptyClass { state: String, stack: usize },
    #[error("reject state `{0}` must be terminal")]
    RejectNotTerminal(String),
    #[error("input encoding key `{0}` must be a single character")]
    BadEncodingKey(String),
    #[error("input encoding value for `{key}` must be 0 or 1, got {value}")]
    BadEncodingValue { key: String, value: i64 },
}

/// Problems hit while interpreting or decoding a run.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("no transition defined for state `{state}` reading `{symbol}`")]
    UndefinedTransition { state: String, symbol: String },
    #[error("head moved off the tape to position {pos} in non-terminal state `{state}`")]
    HeadOffTape { pos: isize, state: String },
    #[error("step applied in terminal state `{0}`")]
    StepInTerminal(String),
    #[error("tape must contain at least one cell")]
    EmptyTape,
    #[error("no rule defined for state `{state}` with stack classes {classes} and no reject state designated")]
    UndefinedRule { state: String, classes: String },
    #[error("pop applied to empty stack {stack}")]
    PopOnEmptyStack { stack: usize },
    #[error("input character `{0}` is not a single-character tape symbol")]
    UnknownInputSymbol(char),
    #[error("input character `{0}` is not in the machine's input encoding")]
    UnencodableChar(char),
}

/// A validated machine of either kind.
#[derive(Debug, Clone)]
pub enum Machine {
    Turing(TuringMachine),
    Stack(StackMachine),
}

impl Machine {
    pub fn digest(&self) -> String {
        match self {
            Machine::Turing(m) => m.digest(),
            Machine::Stack(m) => m.digest(),
        }
    }
}

/// A machine description as read from a file, tagged by `type`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type")]
pub enum RawMachine {
    #[serde(rename = "turing")]
    Turing(RawTuringMachine),
    #[serde(rename = "stack")]
    Stack(RawStackMachine),
}

impl RawMachine {
    pub fn validate(&self) -> Result<Machine, Vec<MachineError>> {
        match self {
            RawMachine::Turing(raw) => raw.validate().map(Machine::Turing),
            RawMachine::Stack(raw) => raw.validate().map(Machine::Stack),
        }
    }
}

pub(crate) fn sha256_hex(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub(crate) fn check_name(name: &str, errors: &mut Vec<MachineError>) {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        errors.push(MachineError::BadName(name.to_string()));
    }
}

/// Resolve `name` against a declaration list, recording an error if missing.
pub(crate) fn resolve(
    name: &str,
    names: &[String],
    site: &str,
    kind_state: bool,
    errors: &mut Vec<MachineError>,
) -> Option<usize> {
    match names.iter().position(|n| n == name) {
        Some(i) => Some(i),
        None => {
            if kind_state {
                errors.push(MachineError::UnknownState {
                    name: name.to_string(),
                    site: site.to_string(),
                });
            } else {
                errors.push(MachineError::UnknownSymbol {
                    name: name.to_string(),
                    site: site.to_string(),
                });
            }
            None
        }
    }
}
