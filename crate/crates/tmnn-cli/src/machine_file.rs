//! Machine description files.
//!
//! Both kinds are TOML. A Turing machine has `states`, `alphabet`,
//! optional `empty` (blank symbol, defaults to the first alphabet entry),
//! `initial`, `terminals`, and a `transitions` list of
//! `{state, read, next, write, move}` with `move` being -1 or 1. A stack
//! program has `states`, `initial`, `terminals`, optional `reject`,
//! `stacks` (count), an `input_encoding` table mapping input characters to
//! the bit pushed for them, and a `rules` list of
//! `{state, top0.., next, op0..}` with one `topN` class
//! (`empty`/`0`/`1`) and one `opN` operation (`noop`/`push0`/`push1`/`pop`)
//! per stack. See `machines/` for worked examples of each.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tmnn::machine::stack::RawStackRule;
use tmnn::machine::{RawStackMachine, RawTuringMachine, StackMachine, TuringMachine};

pub enum MachineDoc {
    Turing(TuringMachine),
    Stack(StackMachine),
}

#[derive(Deserialize)]
struct StackDoc {
    states: Vec<String>,
    initial: String,
    terminals: Vec<String>,
    reject: Option<String>,
    stacks: usize,
    input_encoding: BTreeMap<String, i64>,
    #[serde(default)]
    rules: Vec<RuleDoc>,
}

#[derive(Deserialize)]
struct RuleDoc {
    state: String,
    next: String,
    /// The per-stack `topN` / `opN` keys.
    #[serde(flatten)]
    rest: BTreeMap<String, String>,
}

fn validated<T>(result: Result<T, Vec<tmnn::machine::MachineError>>, path: &Path) -> Result<T> {
    result.map_err(|errors| {
        let lines: Vec<String> = errors.iter().map(|e| format!("  {e}")).collect();
        anyhow::anyhow!("{}: invalid machine description:\n{}", path.display(), lines.join("\n"))
    })
}

pub fn load(path: &Path) -> Result<MachineDoc> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: toml::Value =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let table = match value.as_table() {
        Some(t) => t,
        None => bail!("{}: machine description must be a TOML table", path.display()),
    };

    if table.contains_key("alphabet") || table.contains_key("transitions") {
        let raw: RawTuringMachine =
            value.try_into().with_context(|| format!("parsing {}", path.display()))?;
        return Ok(MachineDoc::Turing(validated(raw.validate(), path)?));
    }
    if table.contains_key("stacks") || table.contains_key("rules") {
        let doc: StackDoc =
            value.try_into().with_context(|| format!("parsing {}", path.display()))?;
        let mut rules = Vec::with_capacity(doc.rules.len());
        for rule in &doc.rules {
            let mut tops = Vec::with_capacity(doc.stacks);
            let mut ops = Vec::with_capacity(doc.stacks);
            for i in 0..doc.stacks {
                let top = rule.rest.get(&format!("top{i}")).with_context(|| {
                    format!("{}: rule for `{}` is missing top{i}", path.display(), rule.state)
                })?;
                let op = rule.rest.get(&format!("op{i}")).with_context(|| {
                    format!("{}: rule for `{}` is missing op{i}", path.display(), rule.state)
                })?;
                tops.push(top.clone());
                ops.push(op.clone());
            }
            if rule.rest.len() != 2 * doc.stacks {
                let known: Vec<String> = (0..doc.stacks)
                    .flat_map(|i| [format!("top{i}"), format!("op{i}")])
                    .collect();
                let stray: Vec<&str> = rule
                    .rest
                    .keys()
                    .filter(|k| !known.contains(k))
                    .map(String::as_str)
                    .collect();
                bail!(
                    "{}: rule for `{}` has unrecognized keys: {}",
                    path.display(),
                    rule.state,
                    stray.join(", ")
                );
            }
            rules.push(RawStackRule { state: rule.state.clone(), tops, next: rule.next.clone(), ops });
        }
        let raw = RawStackMachine {
            states: doc.states,
            initial: doc.initial,
            terminals: doc.terminals,
            reject: doc.reject,
            stacks: doc.stacks,
            input_encoding: doc.input_encoding,
            rules,
        };
        return Ok(MachineDoc::Stack(validated(raw.validate(), path)?));
    }
    bail!(
        "{}: unrecognized machine description (expected `transitions`/`alphabet` for a Turing \
         machine or `rules`/`stacks` for a stack program)",
        path.display()
    );
}

pub fn load_turing(path: &Path) -> Result<TuringMachine> {
    match load(path)? {
        MachineDoc::Turing(m) => Ok(m),
        MachineDoc::Stack(_) => bail!(
            "architecture wcm21 simulates Turing machines, but {} is a stack program",
            path.display()
        ),
    }
}

pub fn load_stack(path: &Path) -> Result<StackMachine> {
    match load(path)? {
        MachineDoc::Stack(m) => Ok(m),
        MachineDoc::Turing(_) => bail!(
            "ss95 architectures simulate stack programs, but {} is a Turing machine description",
            path.display()
        ),
    }
}
