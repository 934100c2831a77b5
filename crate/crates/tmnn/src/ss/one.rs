//! One saturated layer per machine step (`ss95-1`), base-40 encoding.
//!
//! A single `σ(Wx + b)` cannot read a stack's top, look up the rule, and
//! apply the chosen arithmetic in sequence, so the recurrent state is
//! staggered: every quantity the *next* update needs is already present in
//! binary or gated form, kept one step ahead. Per stack `i` the state holds
//! four-way op-split blocks — slot `op` is live exactly when `op` is the
//! operation the last step applied to that stack, and the block's sum is the
//! plain value:
//!
//! * `cand`    — the stack value, `v_i = Σ_op cand(i,op)`;
//! * `topcand` / `necand` — the top bit and non-empty bit of `v_i`;
//! * `nepopcand` / `toppopcand` — those bits for `pop(v_i)`, one digit
//!   down, so a pop can be followed by a class read without another layer.
//!
//! The control block `dcand` is a one-hot situation detector over
//! `(state, class-combination, previously-applied ops)` — `|Q| * 3^p * 4^p`
//! coordinates. From it everything else is affine: the next state is a sum
//! of detectors, and the gate "operation `op` will now be applied to stack
//! `i`" is the sum of detectors whose rule says so. Gates enter each split
//! coordinate as `G*(gate - 1)`, with `G` large enough to push the dead
//! slots below zero; the live slot sees the gate term vanish, leaving the
//! exact push/pop/no-op arithmetic. Updating `dcand` itself needs the
//! classes *after* the pending ops: a push's class is a constant, a no-op
//! keeps the current bits, and a pop's class is read from the
//! `nepop`/`toppop` bits — while the pop-slot of the new `nepop`/`toppop`
//! blocks regenerates from the double-pop affine form
//! `b*(b*v - digit(top)) - digit(toppop)`.
//!
//! Base 40 is not dyadic: pops amplify error by `b` per step, which the
//! 1/80 threshold margins absorb for the probed depths (see the module
//! docs). Decoding is therefore threshold-based rather than exact.

use std::collections::BTreeMap;

use super::{CantorCodec, StackCensus};
use crate::linalg::{Activation, Matrix};
use crate::machine::{StackMachine, StackOp, TopClass};
use crate::network::{Layer, LinearLayer, Network};

pub const ARCH: &str = "ss95-1";
pub const BASE: u32 = 40;

struct OneDims {
    nq: usize,
    p: usize,
    combos: usize,
    /// `4^p` op-combinations, stack 0 most significant.
    nop: usize,
    /// Effective rule per combination; `None` for genuinely undefined ones.
    fired: Vec<Option<(usize, Vec<StackOp>)>>,
}

impl OneDims {
    fn new(m: &StackMachine) -> OneDims {
        let combos = m.num_combos();
        let fired = (0..combos)
            .map(|idx| {
                let (q, classes) = m.combo(idx);
                m.effective_rule(q, &classes)
            })
            .collect();
        OneDims {
            nq: m.num_states(),
            p: m.num_stacks(),
            combos,
            nop: 4usize.pow(m.num_stacks() as u32),
            fired,
        }
    }

    fn cand(&self, i: usize) -> usize {
        self.nq + 4 * i
    }
    fn topcand(&self, i: usize) -> usize {
        self.nq + 4 * (self.p + i)
    }
    fn necand(&self, i: usize) -> usize {
        self.nq + 4 * (2 * self.p + i)
    }
    fn nepopcand(&self, i: usize) -> usize {
        self.nq + 4 * (3 * self.p + i)
    }
    fn toppopcand(&self, i: usize) -> usize {
        self.nq + 4 * (4 * self.p + i)
    }
    fn dcand(&self, combo: usize, alpha: usize) -> usize {
        self.nq + 20 * self.p + combo * self.nop + alpha
    }
    fn width(&self) -> usize {
        self.nq + 20 * self.p + self.combos * self.nop
    }

    fn op_combo(&self, mut alpha: usize) -> Vec<StackOp> {
        let mut ops = vec![StackOp::Noop; self.p];
        for i in (0..self.p).rev() {
            ops[i] = StackOp::from_index(alpha % 4);
            alpha /= 4;
        }
        ops
    }
}

fn add(w: &mut Matrix, row: usize, col: usize, coeff: f64) {
    let v = w.get(row, col) + coeff;
    w.set(row, col, v);
}

/// Add `coeff` on all four slots of an op-split block.
fn add_block(w: &mut Matrix, row: usize, start: usize, coeff: f64) {
    for op in 0..4 {
        add(w, row, start + op, coeff);
    }
}

/// Add `coeff` on every detector whose rule applies `op` to stack `i`.
fn add_gate(w: &mut Matrix, d: &OneDims, row: usize, i: usize, op: StackOp, coeff: f64) {
    for combo in 0..d.combos {
        if let Some((_, ops)) = &d.fired[combo] {
            if ops[i] == op {
                for alpha in 0..d.nop {
                    add(w, row, d.dcand(combo, alpha), coeff);
                }
            }
        }
    }
}

/// Add `scale * raw_op(v_i, top_i)`; returns the constant term.
fn add_raw(w: &mut Matrix, d: &OneDims, row: usize, i: usize, op: StackOp, scale: f64, b: f64) -> f64 {
    match op {
        StackOp::Noop => {
            add_block(w, row, d.cand(i), scale);
            0.0
        }
        StackOp::Push0 => {
            add_block(w, row, d.cand(i), scale / b);
            scale * (b - 3.0) / b
        }
        StackOp::Push1 => {
            add_block(w, row, d.cand(i), scale / b);
            scale * (b - 1.0) / b
        }
        StackOp::Pop => {
            add_block(w, row, d.cand(i), scale * b);
            add_block(w, row, d.topcand(i), -2.0 * scale);
            -scale * (b - 3.0)
        }
    }
}

/// Add `scale * pop(pop(v_i))` in its double-pop affine form; returns the
/// constant term.
fn add_pop2(w: &mut Matrix, d: &OneDims, row: usize, i: usize, scale: f64, b: f64) -> f64 {
    add_block(w, row, d.cand(i), scale * b * b);
    add_block(w, row, d.topcand(i), -2.0 * b * scale);
    add_block(w, row, d.toppopcand(i), -2.0 * scale);
    -scale * (b - 3.0) * (b + 1.0)
}

/// Add the indicator "bits read as class `c`" over a (`ne`, `top`) block
/// pair; returns the constant term.
fn add_class_lit(
    w: &mut Matrix,
    row: usize,
    ne_start: usize,
    top_start: usize,
    c: TopClass,
) -> f64 {
    match c {
        TopClass::Empty => {
            add_block(w, row, ne_start, -1.0);
            1.0
        }
        TopClass::Top0 => {
            add_block(w, row, ne_start, 1.0);
            add_block(w, row, top_start, -1.0);
            0.0
        }
        TopClass::Top1 => {
            add_block(w, row, top_start, 1.0);
            0.0
        }
    }
}

fn step_layer(m: &StackMachine, d: &OneDims) -> LinearLayer {
    let b = f64::from(BASE);
    let n = d.width();
    let mut w = Matrix::zeros(n, n);
    let mut bias = vec![0.0; n];

    // Next control state: sum the detectors routed to it.
    for combo in 0..d.combos {
        if let Some((next, _)) = &d.fired[combo] {
            for alpha in 0..d.nop {
                add(&mut w, *next, d.dcand(combo, alpha), 1.0);
            }
        }
    }

    for i in 0..d.p {
        for op_idx in 0..4 {
            let op = StackOp::from_index(op_idx);

            let row = d.cand(i) + op_idx;
            bias[row] = add_raw(&mut w, d, row, i, op, 1.0, b) - 2.0;
            add_gate(&mut w, d, row, i, op, 2.0);

            // Slope 3b, not b: the top-1 band starts at (b-1)/b, which maps
            // to a pre-activation of exactly 1 under slope b.  Any downward
            // rounding noise then bleeds the bit below 1 and re-amplifies
            // through the pop taps.  At slope 3b the bands land in [2, 5)
            // and [-4, -1), a full unit of slack on either side.
            let row = d.topcand(i) + op_idx;
            bias[row] = add_raw(&mut w, d, row, i, op, 3.0 * b, b) - 3.0 * b;
            add_gate(&mut w, d, row, i, op, 5.0);

            let row = d.necand(i) + op_idx;
            bias[row] = add_raw(&mut w, d, row, i, op, 2.0, b) - 0.5 - 1.5;
            add_gate(&mut w, d, row, i, op, 1.5);

            let row = d.nepopcand(i) + op_idx;
            match op {
                StackOp::Push0 | StackOp::Push1 => {
                    // pop(push(v)) = v: reuse the current non-empty bit.
                    add_block(&mut w, row, d.necand(i), 1.0);
                    add_gate(&mut w, d, row, i, op, 1.0);
                    bias[row] = -1.0;
                }
                StackOp::Noop => {
                    add_block(&mut w, row, d.nepopcand(i), 1.0);
                    add_gate(&mut w, d, row, i, op, 1.0);
                    bias[row] = -1.0;
                }
                StackOp::Pop => {
                    bias[row] = add_pop2(&mut w, d, row, i, 2.0, b) - 0.5 - 1.5;
                    add_gate(&mut w, d, row, i, op, 1.5);
                }
            }

            let row = d.toppopcand(i) + op_idx;
            match op {
                StackOp::Push0 | StackOp::Push1 => {
                    add_block(&mut w, row, d.topcand(i), 1.0);
                    add_gate(&mut w, d, row, i, op, 1.0);
                    bias[row] = -1.0;
                }
                StackOp::Noop => {
                    add_block(&mut w, row, d.toppopcand(i), 1.0);
                    add_gate(&mut w, d, row, i, op, 1.0);
                    bias[row] = -1.0;
                }
                StackOp::Pop => {
                    // Same widened slope as the top-of-stack rows above.
                    bias[row] = add_pop2(&mut w, d, row, i, 3.0 * b, b) - 3.0 * b;
                    add_gate(&mut w, d, row, i, op, 5.0);
                }
            }
        }
    }

    // Situation detectors: state reached, ops just applied, classes now
    // showing. An AND of 1 + p grouped literals.
    for combo in 0..d.combos {
        let (s, classes) = m.combo(combo);
        for alpha in 0..d.nop {
            let row = d.dcand(combo, alpha);
            let ops = d.op_combo(alpha);
            for src in 0..d.combos {
                if d.fired[src].as_ref() == Some(&(s, ops.clone())) {
                    for a in 0..d.nop {
                        add(&mut w, row, d.dcand(src, a), 1.0);
                    }
                }
            }
            let mut bia = -(d.p as f64);
            for (i, op) in ops.iter().enumerate() {
                bia += match op {
                    StackOp::Push0 => f64::from(classes[i] == TopClass::Top0),
                    StackOp::Push1 => f64::from(classes[i] == TopClass::Top1),
                    StackOp::Noop => {
                        add_class_lit(&mut w, row, d.necand(i), d.topcand(i), classes[i])
                    }
                    StackOp::Pop => {
                        add_class_lit(&mut w, row, d.nepopcand(i), d.toppopcand(i), classes[i])
                    }
                };
            }
            bias[row] = bia;
        }
    }

    LinearLayer { name: "step".into(), w, b: bias, activation: Activation::Satlin }
}

pub fn compile(m: &StackMachine) -> (Network, StackCensus) {
    let d = OneDims::new(m);
    let layer = step_layer(m, &d);
    let census = StackCensus {
        state_width: d.width(),
        layers_per_step: 1,
        layer_widths: vec![d.width()],
        detectors: d.combos * d.nop,
        base: BASE,
        // The routing is enumerated directly, not solved.
        routing_residual: 0.0,
    };
    let mut meta = BTreeMap::new();
    meta.insert("base".to_string(), BASE.to_string());
    meta.insert("num_states".to_string(), d.nq.to_string());
    meta.insert("num_stacks".to_string(), d.p.to_string());
    let net = Network {
        arch: ARCH.to_string(),
        machine_digest: m.digest(),
        width: d.width(),
        enc_width: 0,
        layers: vec![Layer::Linear(layer)],
        meta,
    };
    debug_assert!(net.check_shapes().is_ok());
    (net, census)
}

pub fn init_state(m: &StackMachine, codec: &CantorCodec, stacks: &[Vec<u8>]) -> Vec<f64> {
    let d = OneDims::new(m);
    let mut x = vec![0.0; d.width()];
    x[m.initial()] = 1.0;
    // All split mass starts in the no-op slot (index 0): the "previous op"
    // of the initial configuration is a no-op on every stack.
    for (i, stack) in stacks.iter().enumerate() {
        x[d.cand(i)] = codec.encode(stack);
        x[d.topcand(i)] = f64::from(stack.first() == Some(&1));
        x[d.necand(i)] = f64::from(!stack.is_empty());
        x[d.nepopcand(i)] = f64::from(stack.len() >= 2);
        x[d.toppopcand(i)] = f64::from(stack.get(1) == Some(&1));
    }
    let classes: Vec<TopClass> = stacks.iter().map(|s| StackMachine::class_of(s)).collect();
    let combo = m.combo_index(m.initial(), &classes);
    x[d.dcand(combo, 0)] = 1.0;
    x
}

pub fn read_state(m: &StackMachine, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = OneDims::new(m);
    let q = x[..d.nq].to_vec();
    let v = (0..d.p).map(|i| (0..4).map(|op| x[d.cand(i) + op]).sum()).collect();
    (q, v)
}
