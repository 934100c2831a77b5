//! Trace rendering shared by `run`, `oracle`, and `verify`.
//!
//! One line per configuration: `step<TAB>state<TAB>contents`. For a tape
//! the head cell is wrapped in brackets; for stacks the digits are printed
//! top first, `_` for an empty stack, stacks separated by `|`. The network
//! and the reference interpreter are printed by the same code, so trace
//! equality is a plain text diff.

use tmnn::machine::{Configuration, StackConfiguration, StackMachine, TuringMachine};

pub fn tape_line(m: &TuringMachine, step: usize, c: &Configuration) -> String {
    let mut tape = String::new();
    for (i, &sym) in c.tape.iter().enumerate() {
        if i == c.head {
            tape.push('[');
            tape.push_str(m.symbol_name(sym));
            tape.push(']');
        } else {
            tape.push_str(m.symbol_name(sym));
        }
    }
    format!("{step}\t{}\t{tape}", m.state_name(c.state))
}

pub fn stack_line(m: &StackMachine, step: usize, c: &StackConfiguration) -> String {
    let stacks: Vec<String> = c
        .stacks
        .iter()
        .map(|s| {
            if s.is_empty() {
                "_".to_string()
            } else {
                s.iter().map(|&b| char::from(b'0' + b)).collect()
            }
        })
        .collect();
    format!("{step}\t{}\t{}", m.state_name(c.state), stacks.join("|"))
}

/// Render a whole outcome — the trace plus either the final state name or
/// the error — as the lines `run` would print with `--trace`.
pub fn tape_outcome(
    m: &TuringMachine,
    outcome: &Result<Vec<Configuration>, String>,
) -> Vec<String> {
    match outcome {
        Ok(trace) => {
            let mut lines: Vec<String> =
                trace.iter().enumerate().map(|(i, c)| tape_line(m, i, c)).collect();
            if let Some(last) = trace.last() {
                lines.push(m.state_name(last.state).to_string());
            }
            lines
        }
        Err(e) => vec![format!("error: {e}")],
    }
}

pub fn stack_outcome(
    m: &StackMachine,
    outcome: &Result<Vec<StackConfiguration>, String>,
) -> Vec<String> {
    match outcome {
        Ok(trace) => {
            let mut lines: Vec<String> =
                trace.iter().enumerate().map(|(i, c)| stack_line(m, i, c)).collect();
            if let Some(last) = trace.last() {
                lines.push(m.state_name(last.state).to_string());
            }
            lines
        }
        Err(e) => vec![format!("error: {e}")],
    }
}
