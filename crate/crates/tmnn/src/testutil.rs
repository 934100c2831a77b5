//! Fixtures shared across the crate's unit tests. The balanced-parentheses
//! checkers (one Turing, one two-stack) exercise every construction feature:
//! writes, both move directions, halting moves off the tape, reject
//! fall-through, and pushes/pops on both stacks.

use crate::machine::stack::RawStackRule;
use crate::machine::turing::RawTransition;
use crate::machine::{RawStackMachine, RawTuringMachine, StackMachine, TuringMachine};
use rand::Rng;

fn tr(state: &str, read: &str, next: &str, write: &str, mv: i64) -> RawTransition {
    RawTransition {
        state: state.into(),
        read: read.into(),
        next: next.into(),
        write: write.into(),
        mv,
    }
}

pub fn bp_turing_raw() -> RawTuringMachine {
    RawTuringMachine {
        states: ["I", "R", "M", "V", "T", "F"].map(String::from).to_vec(),
        alphabet: ["B", "E", "(", ")", "*"].map(String::from).to_vec(),
        empty: Some("E".into()),
        initial: "I".into(),
        terminals: vec!["T".into(), "F".into()],
        transitions: vec![
            tr("I", "B", "R", "B", 1),
            tr("R", "(", "R", "(", 1),
            tr("R", ")", "M", "*", -1),
            tr("R", "*", "R", "*", 1),
            tr("R", "E", "V", "E", -1),
            tr("M", "B", "F", "*", -1),
            tr("M", "(", "R", "*", 1),
            tr("M", "*", "M", "*", -1),
            tr("V", "(", "F", "*", -1),
            tr("V", "*", "V", "*", -1),
            tr("V", "B", "T", "B", 1),
        ],
    }
}

pub fn bp_turing() -> TuringMachine {
    bp_turing_raw().validate().expect("bp turing fixture must validate")
}

fn rule(state: &str, tops: [&str; 2], next: &str, ops: [&str; 2]) -> RawStackRule {
    RawStackRule {
        state: state.into(),
        tops: tops.map(String::from).to_vec(),
        next: next.into(),
        ops: ops.map(String::from).to_vec(),
    }
}

pub fn bp_stack_raw() -> RawStackMachine {
    // Stack 0 carries the input (first character on top); stack 1 counts
    // unmatched opens. `(` encodes as 1, `)` as 0.
    let mut rules = vec![
        rule("I", ["empty", "empty"], "T", ["noop", "noop"]),
        rule("I", ["1", "empty"], "R", ["pop", "push1"]),
        rule("I", ["0", "empty"], "F", ["noop", "noop"]),
        rule("M", ["0", "1"], "R", ["pop", "pop"]),
        rule("M", ["0", "empty"], "F", ["noop", "noop"]),
        rule("V", ["empty", "1"], "F", ["noop", "noop"]),
        rule("V", ["empty", "empty"], "T", ["noop", "noop"]),
    ];
    for c in ["empty", "0", "1"] {
        rules.push(rule("R", ["1", c], "R", ["pop", "push1"]));
        rules.push(rule("R", ["0", c], "M", ["noop", "noop"]));
        rules.push(rule("R", ["empty", c], "V", ["noop", "noop"]));
    }
    RawStackMachine {
        states: ["I", "R", "M", "V", "T", "F"].map(String::from).to_vec(),
        initial: "I".into(),
        terminals: vec!["T".into(), "F".into()],
        reject: Some("F".into()),
        stacks: 2,
        input_encoding: [("(".to_string(), 1), (")".to_string(), 0)].into_iter().collect(),
        rules,
    }
}

pub fn bp_stack() -> StackMachine {
    bp_stack_raw().validate().expect("bp stack fixture must validate")
}

/// A random two- or one-stack machine: 2–3 states, one terminal, rules on
/// about 85% of the combinations, and a 50% chance of designating the
/// terminal as the reject fall-through. Pops are only drawn for classes
/// that guarantee a non-empty stack.
pub fn random_stack_machine(rng: &mut impl Rng) -> StackMachine {
    let nq = rng.gen_range(2..=3usize);
    let p = rng.gen_range(1..=2usize);
    let states: Vec<String> = (0..nq).map(|i| format!("s{i}")).collect();
    let terminal = rng.gen_range(0..nq);
    let initial = rng.gen_range(0..nq);
    let reject = rng.gen_bool(0.5).then(|| states[terminal].clone());
    let classes = ["empty", "0", "1"];
    let mut rules = Vec::new();
    for s in 0..nq {
        if s == terminal {
            continue;
        }
        for combo in 0..3usize.pow(p as u32) {
            if !rng.gen_bool(0.85) {
                continue;
            }
            let mut tops = Vec::with_capacity(p);
            let mut idx = combo;
            for _ in 0..p {
                tops.push(classes[idx % 3].to_string());
                idx /= 3;
            }
            let ops = tops
                .iter()
                .map(|c| {
                    let allowed: &[&str] = if c == "empty" {
                        &["noop", "push0", "push1"]
                    } else {
                        &["noop", "push0", "push1", "pop"]
                    };
                    allowed[rng.gen_range(0..allowed.len())].to_string()
                })
                .collect();
            rules.push(RawStackRule {
                state: states[s].clone(),
                tops,
                next: states[rng.gen_range(0..nq)].clone(),
                ops,
            });
        }
    }
    RawStackMachine {
        states,
        initial: format!("s{initial}"),
        terminals: vec![format!("s{terminal}")],
        reject,
        stacks: p,
        input_encoding: std::collections::BTreeMap::new(),
        rules,
    }
    .validate()
    .expect("random stack machine must validate")
}

/// A random Turing machine with a complete transition table on its
/// non-terminal states: 2–4 states, 2–3 symbols, one terminal, uniform
/// next/write/move choices. Runs can still fall off the tape.
pub fn random_complete_turing(rng: &mut impl Rng) -> TuringMachine {
    let nq = rng.gen_range(2..=4usize);
    let ng = rng.gen_range(2..=3usize);
    let states: Vec<String> = (0..nq).map(|i| format!("q{i}")).collect();
    let alphabet: Vec<String> = (0..ng).map(|i| format!("s{i}")).collect();
    let terminal = rng.gen_range(0..nq);
    let initial = rng.gen_range(0..nq);
    let mut transitions = Vec::new();
    for q in 0..nq {
        if q == terminal {
            continue;
        }
        for a in 0..ng {
            transitions.push(RawTransition {
                state: states[q].clone(),
                read: alphabet[a].clone(),
                next: states[rng.gen_range(0..nq)].clone(),
                write: alphabet[rng.gen_range(0..ng)].clone(),
                mv: if rng.gen_bool(0.5) { 1 } else { -1 },
            });
        }
    }
    RawTuringMachine {
        states,
        alphabet,
        empty: None,
        initial: format!("q{initial}"),
        terminals: vec![format!("q{terminal}")],
        transitions,
    }
    .validate()
    .expect("random machine must validate")
}
