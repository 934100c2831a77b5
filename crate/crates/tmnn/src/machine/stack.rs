//! Multi-stack machines over the binary stack alphabet, plus the reference
//! interpreter.
//!
//! Each step inspects the top class of every stack (`empty`, `0` on top, `1`
//! on top), picks the rule for that combination, and applies one op per
//! stack. Combinations without a rule fall through to the machine's
//! designated reject state (a terminal) when one is declared; terminal states
//! hold their configuration fixed. Both behaviors are part of the semantics
//! shared with the compiled networks, which is why they live here in
//! [`StackMachine::effective_rule`] rather than in the compiler.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::{check_name, resolve, sha256_hex, MachineError, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TopClass {
    Empty,
    Top0,
    Top1,
}

impl TopClass {
    pub fn index(self) -> usize {
        match self {
            TopClass::Empty => 0,
            TopClass::Top0 => 1,
            TopClass::Top1 => 2,
        }
    }

    pub fn from_index(i: usize) -> TopClass {
        match i {
            0 => TopClass::Empty,
            1 => TopClass::Top0,
            2 => TopClass::Top1,
            _ => panic!("top class index out of range: {i}"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TopClass::Empty => "empty",
            TopClass::Top0 => "0",
            TopClass::Top1 => "1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StackOp {
    Noop,
    Push0,
    Push1,
    Pop,
}

impl StackOp {
    pub fn index(self) -> usize {
        match self {
            StackOp::Noop => 0,
            StackOp::Push0 => 1,
            StackOp::Push1 => 2,
            StackOp::Pop => 3,
        }
    }

    pub fn from_index(i: usize) -> StackOp {
        match i {
            0 => StackOp::Noop,
            1 => StackOp::Push0,
            2 => StackOp::Push1,
            3 => StackOp::Pop,
            _ => panic!("stack op index out of range: {i}"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StackOp::Noop => "noop",
            StackOp::Push0 => "push0",
            StackOp::Push1 => "push1",
            StackOp::Pop => "pop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackRule {
    pub next: usize,
    pub ops: Vec<StackOp>,
}

/// One configuration: control state plus the stacks. Index 0 of each stack
/// vector is the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackConfiguration {
    pub state: usize,
    pub stacks: Vec<Vec<u8>>,
}

/// A rule as written in a description file.
#[derive(Debug, Clone, Deserialize)]
pub struct RawStackRule {
    pub state: String,
    /// One class per stack: `empty`, `0`, or `1`.
    pub tops: Vec<String>,
    pub next: String,
    /// One op per stack: `noop`, `push0`, `push1`, or `pop`.
    pub ops: Vec<String>,
}

/// A stack machine description as written in a file.
#[derive(Debug, Clone, Deserialize)]
pub struct RawStackMachine {
    pub states: Vec<String>,
    pub initial: String,
    pub terminals: Vec<String>,
    /// Terminal that undefined class combinations fall through to. Without
    /// it, hitting an undefined combination is a runtime (and compile-time)
    /// error.
    pub reject: Option<String>,
    pub stacks: usize,
    /// Input characters mapped to the bit pushed for them.
    pub input_encoding: BTreeMap<String, i64>,
    #[serde(default)]
    pub rules: Vec<RawStackRule>,
}

#[derive(Debug, Clone)]
pub struct StackMachine {
    states: Vec<String>,
    initial: usize,
    terminals: BTreeSet<usize>,
    reject: Option<usize>,
    num_stacks: usize,
    input_encoding: BTreeMap<char, u8>,
    rules: BTreeMap<(usize, Vec<TopClass>), StackRule>,
}

fn parse_class(s: &str) -> Option<TopClass> {
    match s {
        "empty" => Some(TopClass::Empty),
        "0" => Some(TopClass::Top0),
        "1" => Some(TopClass::Top1),
        _ => None,
    }
}

fn parse_op(s: &str) -> Option<StackOp> {
    match s {
        "noop" => Some(StackOp::Noop),
        "push0" => Some(StackOp::Push0),
        "push1" => Some(StackOp::Push1),
        "pop" => Some(StackOp::Pop),
        _ => None,
    }
}

pub(crate) fn render_classes(classes: &[TopClass]) -> String {
    classes.iter().map(|c| c.name()).collect::<Vec<_>>().join(" ")
}

impl RawStackMachine {
    pub fn validate(&self) -> Result<StackMachine, Vec<MachineError>> {
        let mut errors = Vec::new();

        if self.states.is_empty() {
            errors.push(MachineError::NoStates);
        }
        if self.stacks == 0 {
            errors.push(MachineError::NoStacks);
        }
        for (i, name) in self.states.iter().enumerate() {
            check_name(name, &mut errors);
            if self.states[..i].contains(name) {
                errors.push(MachineError::DuplicateState(name.clone()));
            }
        }

        let initial = resolve(&self.initial, &self.states, "initial", true, &mut errors);
        let mut terminals = BTreeSet::new();
        for name in &self.terminals {
            if let Some(i) = resolve(name, &self.states, "terminals", true, &mut errors) {
                terminals.insert(i);
            }
        }
        let reject = match &self.reject {
            Some(name) => match resolve(name, &self.states, "reject", true, &mut errors) {
                Some(i) => {
                    if !terminals.contains(&i) {
                        errors.push(MachineError::RejectNotTerminal(name.clone()));
                    }
                    Some(i)
                }
                None => None,
            },
            None => None,
        };

        let mut input_encoding = BTreeMap::new();
        for (key, &value) in &self.input_encoding {
            let mut chars = key.chars();
            let ch = match (chars.next(), chars.next()) {
                (Some(c), None) => Some(c),
                _ => {
                    errors.push(MachineError::BadEncodingKey(key.clone()));
                    None
                }
            };
            if !(value == 0 || value == 1) {
                errors.push(MachineError::BadEncodingValue { key: key.clone(), value });
            } else if let Some(ch) = ch {
                input_encoding.insert(ch, value as u8);
            }
        }

        let mut rules = BTreeMap::new();
        for (n, rule) in self.rules.iter().enumerate() {
            let site = format!("rule {n}");
            let q = resolve(&rule.state, &self.states, &site, true, &mut errors);
            let next = resolve(&rule.next, &self.states, &site, true, &mut errors);
            if let Some(q) = q {
                if terminals.contains(&q) {
                    errors.push(MachineError::TransitionFromTerminal(rule.state.clone()));
                }
            }
            if rule.tops.len() != self.stacks {
                errors.push(MachineError::BadClassCount {
                    state: rule.state.clone(),
                    got: rule.tops.len(),
                    want: self.stacks,
                });
                continue;
            }
            if rule.ops.len() != self.stacks {
                errors.push(MachineError::BadOpCount {
                    state: rule.state.clone(),
                    got: rule.ops.len(),
                    want: self.stacks,
                });
                continue;
            }
            let mut classes = Vec::with_capacity(self.stacks);
            for c in &rule.tops {
                match parse_class(c) {
                    Some(c) => classes.push(c),
                    None => errors.push(MachineError::BadClass(c.clone())),
                }
            }
            let mut ops = Vec::with_capacity(self.stacks);
            for o in &rule.ops {
                match parse_op(o) {
                    Some(o) => ops.push(o),
                    None => errors.push(MachineError::BadOp(o.clone())),
                }
            }
            if classes.len() != self.stacks || ops.len() != self.stacks {
                continue;
            }
            for (i, (&c, &o)) in classes.iter().zip(&ops).enumerate() {
                if c == TopClass::Empty && o == StackOp::Pop {
                    errors.push(MachineError::PopOnEmptyClass {
                        state: rule.state.clone(),
                        stack: i,
                    });
                }
            }
            if let (Some(q), Some(next)) = (q, next) {
                if rules
                    .insert((q, classes.clone()), StackRule { next, ops })
                    .is_some()
                {
                    errors.push(MachineError::DuplicateRule(
                        rule.state.clone(),
                        render_classes(&classes),
                    ));
                }
            }
        }

        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(StackMachine {
            states: self.states.clone(),
            initial: initial.unwrap(),
            terminals,
            reject,
            num_stacks: self.stacks,
            input_encoding,
            rules,
        })
    }
}

impl StackMachine {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_stacks(&self) -> usize {
        self.num_stacks
    }

    pub fn state_name(&self, i: usize) -> &str {
        &self.states[i]
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminals.contains(&state)
    }

    pub fn reject(&self) -> Option<usize> {
        self.reject
    }

    pub fn class_of(stack: &[u8]) -> TopClass {
        match stack.first() {
            None => TopClass::Empty,
            Some(0) => TopClass::Top0,
            Some(_) => TopClass::Top1,
        }
    }

    pub fn classes_of(&self, c: &StackConfiguration) -> Vec<TopClass> {
        c.stacks.iter().map(|s| Self::class_of(s)).collect()
    }

    /// Number of (state, class-combination) pairs: `|Q| * 3^stacks`.
    pub fn num_combos(&self) -> usize {
        self.states.len() * 3usize.pow(self.num_stacks as u32)
    }

    /// Combination index: state-major, then classes as a base-3 number with
    /// stack 0 as the most significant digit.
    pub fn combo_index(&self, state: usize, classes: &[TopClass]) -> usize {
        debug_assert_eq!(classes.len(), self.num_stacks);
        let mut idx = state;
        for c in classes {
            idx = idx * 3 + c.index();
        }
        idx
    }

    pub fn combo(&self, mut idx: usize) -> (usize, Vec<TopClass>) {
        let mut classes = vec![TopClass::Empty; self.num_stacks];
        for i in (0..self.num_stacks).rev() {
            classes[i] = TopClass::from_index(idx % 3);
            idx /= 3;
        }
        (idx, classes)
    }

    pub fn rule(&self, state: usize, classes: &[TopClass]) -> Option<&StackRule> {
        self.rules.get(&(state, classes.to_vec()))
    }

    /// The transition the machine actually performs for a combination, with
    /// the shared fall-through semantics applied: terminal states hold their
    /// configuration, undefined combinations go to the reject state (all
    /// no-ops) when one is designated. `None` means the combination is
    /// genuinely undefined.
    pub fn effective_rule(&self, state: usize, classes: &[TopClass]) -> Option<(usize, Vec<StackOp>)> {
        if self.is_terminal(state) {
            return Some((state, vec![StackOp::Noop; self.num_stacks]));
        }
        if let Some(rule) = self.rule(state, classes) {
            return Some((rule.next, rule.ops.clone()));
        }
        self.reject.map(|r| (r, vec![StackOp::Noop; self.num_stacks]))
    }

    /// True if every non-terminal combination has a rule or a reject
    /// fall-through; compilation requires this.
    pub fn is_total(&self) -> bool {
        if self.reject.is_some() {
            return true;
        }
        (0..self.num_combos()).all(|i| {
            let (state, classes) = self.combo(i);
            self.is_terminal(state) || self.rule(state, &classes).is_some()
        })
    }

    pub fn apply_op(op: StackOp, stack: &[u8], index: usize) -> Result<Vec<u8>, RunError> {
        match op {
            StackOp::Noop => Ok(stack.to_vec()),
            StackOp::Push0 => {
                let mut s = Vec::with_capacity(stack.len() + 1);
                s.push(0);
                s.extend_from_slice(stack);
                Ok(s)
            }
            StackOp::Push1 => {
                let mut s = Vec::with_capacity(stack.len() + 1);
                s.push(1);
                s.extend_from_slice(stack);
                Ok(s)
            }
            StackOp::Pop => {
                if stack.is_empty() {
                    Err(RunError::PopOnEmptyStack { stack: index })
                } else {
                    Ok(stack[1..].to_vec())
                }
            }
        }
    }

    pub fn step(&self, c: &StackConfiguration) -> Result<StackConfiguration, RunError> {
        if self.is_terminal(c.state) {
            return Err(RunError::StepInTerminal(self.states[c.state].clone()));
        }
        let classes = self.classes_of(c);
        let (next, ops) =
            self.effective_rule(c.state, &classes)
                .ok_or_else(|| RunError::UndefinedRule {
                    state: self.states[c.state].clone(),
                    classes: render_classes(&classes),
                })?;
        let mut stacks = Vec::with_capacity(self.num_stacks);
        for (i, (op, stack)) in ops.iter().zip(&c.stacks).enumerate() {
            stacks.push(Self::apply_op(*op, stack, i)?);
        }
        Ok(StackConfiguration { state: next, stacks })
    }

    /// Map an input string onto the initial stacks: stack 0 holds the encoded
    /// input with the first character on top, all other stacks start empty.
    pub fn encode_input(&self, input: &str) -> Result<Vec<Vec<u8>>, RunError> {
        let mut first = Vec::with_capacity(input.len());
        for ch in input.chars() {
            match self.input_encoding.get(&ch) {
                Some(&b) => first.push(b),
                None => return Err(RunError::UnencodableChar(ch)),
            }
        }
        let mut stacks = vec![first];
        stacks.resize(self.num_stacks, Vec::new());
        Ok(stacks)
    }

    /// Run from the initial state until a terminal state or the step budget
    /// is exhausted; the trace includes the initial configuration.
    pub fn run(
        &self,
        stacks: Vec<Vec<u8>>,
        max_steps: usize,
    ) -> Result<Vec<StackConfiguration>, RunError> {
        assert_eq!(stacks.len(), self.num_stacks, "wrong number of stacks");
        let mut trace = vec![StackConfiguration { state: self.initial, stacks }];
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

    pub fn render_stack(stack: &[u8]) -> String {
        if stack.is_empty() {
            "_".to_string()
        } else {
            stack.iter().map(|b| char::from(b'0' + b)).collect()
        }
    }

    pub fn digest(&self) -> String {
        let mut text = String::from("stack\n");
        text.push_str(&format!("states: {}\n", self.states.join(" ")));
        text.push_str(&format!("initial: {}\n", self.states[self.initial]));
        let terms: Vec<&str> = self.terminals.iter().map(|&i| self.states[i].as_str()).collect();
        text.push_str(&format!("terminals: {}\n", terms.join(" ")));
        if let Some(r) = self.reject {
            text.push_str(&format!("reject: {}\n", self.states[r]));
        }
        text.push_str(&format!("stacks: {}\n", self.num_stacks));
        for (ch, bit) in &self.input_encoding {
            text.push_str(&format!("encode {ch} {bit}\n"));
        }
        for ((q, classes), rule) in &self.rules {
            let ops: Vec<&str> = rule.ops.iter().map(|o| o.name()).collect();
            text.push_str(&format!(
                "rule {} {} -> {} {}\n",
                self.states[*q],
                render_classes(classes),
                self.states[rule.next],
                ops.join(" ")
            ));
        }
        sha256_hex(&text)
    }
}
