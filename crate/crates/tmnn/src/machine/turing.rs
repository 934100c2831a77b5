//! Turing machines over a fixed-length tape, plus the reference interpreter.
//!
//! The tape never grows: a move that would leave it is an error unless the
//! machine is entering a terminal state on that very step, in which case the
//! head stays put and the final configuration stays well formed.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::{check_name, resolve, sha256_hex, MachineError, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Move {
    Left,
    Right,
}

impl Move {
    pub fn offset(self) -> isize {
        match self {
            Move::Left => -1,
            Move::Right => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub next: usize,
    pub write: usize,
    pub mv: Move,
}

/// One machine configuration: control state, head position, full tape.
/// Invariant: `head < tape.len()` and every cell is a valid symbol index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub state: usize,
    pub head: usize,
    pub tape: Vec<usize>,
}

/// A transition as written in a description file.
#[derive(Debug, Clone, Deserialize)]
pub struct RawTransition {
    pub state: String,
    pub read: String,
    pub next: String,
    pub write: String,
    #[serde(rename = "move")]
    pub mv: i64,
}

/// A Turing machine description as written in a file.
#[derive(Debug, Clone, Deserialize)]
pub struct RawTuringMachine {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    /// Symbol treated as the blank; defaults to the first alphabet entry.
    pub empty: Option<String>,
    pub initial: String,
    pub terminals: Vec<String>,
    #[serde(default)]
    pub transitions: Vec<RawTransition>,
}

/// A validated Turing machine. States and symbols are identified by their
/// declaration index; the one-hot encodings used by compiled networks follow
/// the same order.
#[derive(Debug, Clone)]
pub struct TuringMachine {
    states: Vec<String>,
    alphabet: Vec<String>,
    empty: usize,
    initial: usize,
    terminals: BTreeSet<usize>,
    delta: BTreeMap<(usize, usize), Transition>,
}

impl RawTuringMachine {
    pub fn validate(&self) -> Result<TuringMachine, Vec<MachineError>> {
        let mut errors = Vec::new();

        if self.states.is_empty() {
            errors.push(MachineError::NoStates);
        }
        if self.alphabet.is_empty() {
            errors.push(MachineError::NoSymbols);
        }
        for (i, name) in self.states.iter().enumerate() {
            check_name(name, &mut errors);
            if self.states[..i].contains(name) {
                errors.push(MachineError::DuplicateState(name.clone()));
            }
        }
        for (i, name) in self.alphabet.iter().enumerate() {
            check_name(name, &mut errors);
            if self.alphabet[..i].contains(name) {
                errors.push(MachineError::DuplicateSymbol(name.clone()));
            }
        }

        let initial = resolve(&self.initial, &self.states, "initial", true, &mut errors);
        let empty = match &self.empty {
            Some(name) => resolve(name, &self.alphabet, "empty", false, &mut errors),
            None => Some(0),
        };
        let mut terminals = BTreeSet::new();
        for name in &self.terminals {
            if let Some(i) = resolve(name, &self.states, "terminals", true, &mut errors) {
                terminals.insert(i);
            }
        }

        let mut delta = BTreeMap::new();
        for (n, t) in self.transitions.iter().enumerate() {
            let site = format!("transition {n}");
            let q = resolve(&t.state, &self.states, &site, true, &mut errors);
            let a = resolve(&t.read, &self.alphabet, &site, false, &mut errors);
            let next = resolve(&t.next, &self.states, &site, true, &mut errors);
            let write = resolve(&t.write, &self.alphabet, &site, false, &mut errors);
            let mv = match t.mv {
                -1 => Some(Move::Left),
                1 => Some(Move::Right),
                other => {
                    errors.push(MachineError::BadMove(other));
                    None
                }
            };
            if let Some(q) = q {
                if terminals.contains(&q) {
                    errors.push(MachineError::TransitionFromTerminal(t.state.clone()));
                }
            }
            if let (Some(q), Some(a), Some(next), Some(write), Some(mv)) =
                (q, a, next, write, mv)
            {
                if delta.insert((q, a), Transition { next, write, mv }).is_some() {
                    errors.push(MachineError::DuplicateTransition(
                        t.state.clone(),
                        t.read.clone(),
                    ));
                }
            }
        }

        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(TuringMachine {
            states: self.states.clone(),
            alphabet: self.alphabet.clone(),
            empty: empty.unwrap(),
            initial: initial.unwrap(),
            terminals,
            delta,
        })
    }
}

impl TuringMachine {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.alphabet.len()
    }

    pub fn state_name(&self, i: usize) -> &str {
        &self.states[i]
    }

    pub fn symbol_name(&self, i: usize) -> &str {
        &self.alphabet[i]
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn empty_symbol(&self) -> usize {
        self.empty
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminals.contains(&state)
    }

    pub fn delta(&self, state: usize, read: usize) -> Option<&Transition> {
        self.delta.get(&(state, read))
    }

    /// Transitions in a fixed deterministic order (sorted by state then
    /// symbol index). Compiled networks allocate one detector per entry in
    /// this order.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, &Transition)> {
        self.delta.iter().map(|(&(q, a), t)| (q, a, t))
    }

    /// Map an input string to a tape, one single-character symbol per char.
    pub fn parse_tape(&self, input: &str) -> Result<Vec<usize>, RunError> {
        input
            .chars()
            .map(|ch| {
                let s = ch.to_string();
                self.alphabet
                    .iter()
                    .position(|a| *a == s)
                    .ok_or(RunError::UnknownInputSymbol(ch))
            })
            .collect()
    }

    /// Render a tape as a string of symbol names (single-char symbols only
    /// render compactly; longer names are space-separated).
    pub fn render_tape(&self, tape: &[usize]) -> String {
        if self.alphabet.iter().all(|a| a.chars().count() == 1) {
            tape.iter().map(|&s| self.alphabet[s].as_str()).collect()
        } else {
            tape.iter()
                .map(|&s| self.alphabet[s].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        }
    }

    /// Apply one transition. Failing moves off the tape are allowed only when
    /// the machine is halting on this step, in which case the head stays.
    pub fn step(&self, c: &Configuration) -> Result<Configuration, RunError> {
        if self.is_terminal(c.state) {
            return Err(RunError::StepInTerminal(self.states[c.state].clone()));
        }
        let read = c.tape[c.head];
        let tr = self
            .delta(c.state, read)
            .ok_or_else(|| RunError::UndefinedTransition {
                state: self.states[c.state].clone(),
                symbol: self.alphabet[read].clone(),
            })?;
        let mut tape = c.tape.clone();
        tape[c.head] = tr.write;
        let pos = c.head as isize + tr.mv.offset();
        let head = if pos >= 0 && (pos as usize) < tape.len() {
            pos as usize
        } else if self.is_terminal(tr.next) {
            c.head
        } else {
            return Err(RunError::HeadOffTape {
                pos,
                state: self.states[tr.next].clone(),
            });
        };
        Ok(Configuration { state: tr.next, head, tape })
    }

    /// Run from the initial state at head 0 until a terminal state or the
    /// step budget is exhausted. The returned trace includes the initial
    /// configuration; whether the machine halted can be read off its last
    /// entry.
    pub fn run(&self, tape: Vec<usize>, max_steps: usize) -> Result<Vec<Configuration>, RunError> {
        if tape.is_empty() {
            return Err(RunError::EmptyTape);
        }
        debug_assert!(tape.iter().all(|&s| s < self.alphabet.len()));
        let mut trace = vec![Configuration { state: self.initial, head: 0, tape }];
        while trace.len() <= max_steps {
            let last = trace.last().unwrap();
            if self.is_terminal(last.state) {
                break;
            }
            let next = self.step(last)?;
            trace.push(next);
        }
        Ok(trace)
    }

    pub fn digest(&self) -> String {
        let mut text = String::from("turing\n");
        text.push_str(&format!("states: {}\n", self.states.join(" ")));
        text.push_str(&format!("alphabet: {}\n", self.alphabet.join(" ")));
        text.push_str(&format!("empty: {}\n", self.alphabet[self.empty]));
        text.push_str(&format!("initial: {}\n", self.states[self.initial]));
        let terms: Vec<&str> = self.terminals.iter().map(|&i| self.states[i].as_str()).collect();
        text.push_str(&format!("terminals: {}\n", terms.join(" ")));
        for (q, a, t) in self.transitions() {
            text.push_str(&format!(
                "delta {} {} -> {} {} {}\n",
                self.states[q],
                self.alphabet[a],
                self.states[t.next],
                self.alphabet[t.write],
                match t.mv {
                    Move::Left => "-1",
                    Move::Right => "+1",
                }
            ));
        }
        sha256_hex(&text)
    }
}
