//! Four saturated layers per machine step (`ss95-4`), base-4 encoding.
//!
//! The recurrent state is `[q; v]`: a one-hot control state and one Cantor
//! value per stack. Base 4 keeps every value dyadic, so all arithmetic below
//! is exact and the simulator reproduces the interpreter bit for bit.
//!
//! One step runs:
//!
//! * `read`  — append each stack's top bit `σ(b·v - (b-2))` and non-empty
//!   bit `σ(b·v)`.
//! * `detect` — one conjunction per (state, class-combination): the class
//!   indicators `empty = 1 - ne`, `top0 = ne - top`, `top1 = top` are affine
//!   in the read bits, so `σ(q + Σ class - p)` is an exact detector. The
//!   layer also carries `v` and `top` forward.
//! * `route` — the next one-hot state is `σ(B d)` and each stack's four
//!   gated candidates are `σ(cand + (Γ d) - 1)`, where `cand` is the affine
//!   push/pop/no-op arithmetic on `(v, top)` and `(Γ d)` is 1 exactly for
//!   the operation the fired rule applies. `B` and `Γ` are solved by least
//!   squares against the detector responses of every combination.
//! * `write` — the new stack value is the sum of its gated candidates.
//!
//! Combinations with no rule (on machines without a designated reject
//! state) route to all zeros: the state comes back empty-handed and decoding
//! reports the same undefined-rule error as the interpreter.

use std::collections::BTreeMap;

use super::{CantorCodec, CompileError, StackCensus};
use crate::linalg::{lstsq, Activation, Matrix};
use crate::machine::{StackMachine, StackOp, TopClass};
use crate::network::{Layer, LinearLayer, Network};

pub const ARCH: &str = "ss95-4";
pub const BASE: u32 = 4;

struct Dims {
    nq: usize,
    p: usize,
    combos: usize,
}

impl Dims {
    fn new(m: &StackMachine) -> Dims {
        Dims { nq: m.num_states(), p: m.num_stacks(), combos: m.num_combos() }
    }
    fn n0(&self) -> usize {
        self.nq + self.p
    }
    fn n1(&self) -> usize {
        self.nq + 3 * self.p
    }
    fn n2(&self) -> usize {
        self.combos + 2 * self.p
    }
    fn n3(&self) -> usize {
        self.nq + 4 * self.p
    }
}

fn satlin(name: &str, w: Matrix, b: Vec<f64>) -> LinearLayer {
    LinearLayer { name: name.into(), w, b, activation: Activation::Satlin }
}

/// `[q; v] -> [q; v; top; ne]`.
fn read_layer(d: &Dims, b: f64) -> LinearLayer {
    let (n0, n1) = (d.n0(), d.n1());
    let mut w = Matrix::zeros(n1, n0);
    let mut bias = vec![0.0; n1];
    for i in 0..n0 {
        w.set(i, i, 1.0);
    }
    for i in 0..d.p {
        let v = d.nq + i;
        w.set(n0 + i, v, b);
        bias[n0 + i] = -(b - 2.0);
        w.set(n0 + d.p + i, v, b);
    }
    satlin("read", w, bias)
}

/// `[q; v; top; ne] -> [d; v; top]`.
fn detect_layer(m: &StackMachine, d: &Dims) -> LinearLayer {
    let (n1, n2) = (d.n1(), d.n2());
    let top = |i: usize| d.n0() + i;
    let ne = |i: usize| d.n0() + d.p + i;
    let mut w = Matrix::zeros(n2, n1);
    let mut bias = vec![0.0; n2];
    for idx in 0..d.combos {
        let (q, classes) = m.combo(idx);
        w.set(idx, q, 1.0);
        bias[idx] = -(d.p as f64);
        for (i, c) in classes.iter().enumerate() {
            match c {
                TopClass::Empty => {
                    w.set(idx, ne(i), w.get(idx, ne(i)) - 1.0);
                    bias[idx] += 1.0;
                }
                TopClass::Top0 => {
                    w.set(idx, ne(i), w.get(idx, ne(i)) + 1.0);
                    w.set(idx, top(i), w.get(idx, top(i)) - 1.0);
                }
                TopClass::Top1 => {
                    w.set(idx, top(i), w.get(idx, top(i)) + 1.0);
                }
            }
        }
    }
    for i in 0..d.p {
        w.set(d.combos + i, d.nq + i, 1.0);
        w.set(d.combos + d.p + i, top(i), 1.0);
    }
    satlin("detect", w, bias)
}

/// Candidate arithmetic for applying `op` to the value at column `v_col`
/// with top bit at `top_col`; returns the constant term.
fn candidate(w: &mut Matrix, row: usize, v_col: usize, top_col: usize, op: StackOp, b: f64) -> f64 {
    match op {
        StackOp::Noop => {
            w.set(row, v_col, 1.0);
            0.0
        }
        StackOp::Push0 => {
            w.set(row, v_col, 1.0 / b);
            (b - 3.0) / b
        }
        StackOp::Push1 => {
            w.set(row, v_col, 1.0 / b);
            (b - 1.0) / b
        }
        StackOp::Pop => {
            w.set(row, v_col, b);
            w.set(row, top_col, -2.0);
            -(b - 3.0)
        }
    }
}

/// `[d; v; top] -> [n; gated]` using the solved routing.
fn route_layer(d: &Dims, routing: &Routing, b: f64) -> LinearLayer {
    let (n2, n3) = (d.n2(), d.n3());
    let mut w = Matrix::zeros(n3, n2);
    let mut bias = vec![0.0; n3];
    for j in 0..d.nq {
        for dd in 0..d.combos {
            w.set(j, dd, routing.coeffs.get(dd, j));
        }
    }
    for i in 0..d.p {
        for op in 0..4 {
            let row = d.nq + 4 * i + op;
            bias[row] = candidate(
                &mut w,
                row,
                d.combos + i,
                d.combos + d.p + i,
                StackOp::from_index(op),
                b,
            ) - 1.0;
            for dd in 0..d.combos {
                w.set(row, dd, routing.coeffs.get(dd, d.nq + 4 * i + op));
            }
        }
    }
    satlin("route", w, bias)
}

/// `[n; gated] -> [q; v]`.
fn write_layer(d: &Dims) -> LinearLayer {
    let (n3, n0) = (d.n3(), d.n0());
    let mut w = Matrix::zeros(n0, n3);
    for j in 0..d.nq {
        w.set(j, j, 1.0);
    }
    for i in 0..d.p {
        for op in 0..4 {
            w.set(d.nq + i, d.nq + 4 * i + op, 1.0);
        }
    }
    satlin("write", w, vec![0.0; n0])
}

/// Detector responses on synthetic inputs covering every combination: row
/// `idx` is the detector block after `read` and `detect` on a state vector
/// staged for combination `idx`. On a correct construction this is exactly
/// the identity.
pub fn detector_matrix(m: &StackMachine) -> Result<Matrix, CompileError> {
    let d = Dims::new(m);
    let codec = CantorCodec::new(BASE);
    let read = read_layer(&d, f64::from(BASE));
    let detect = detect_layer(m, &d);
    let mut a = Matrix::zeros(0, d.combos);
    for idx in 0..d.combos {
        let (q, classes) = m.combo(idx);
        let mut x = vec![0.0; d.n0()];
        x[q] = 1.0;
        for (i, c) in classes.iter().enumerate() {
            x[d.nq + i] = match c {
                TopClass::Empty => 0.0,
                TopClass::Top0 => codec.encode(&[0]),
                TopClass::Top1 => codec.encode(&[1]),
            };
        }
        let h = detect.apply(&read.apply(&x)?)?;
        a.push_row(&h[..d.combos]).expect("detector row width");
    }
    Ok(a)
}

pub struct Routing {
    /// `combos x (|Q| + 4p)`: next-state columns then per-stack gate columns.
    pub coeffs: Matrix,
    pub residual: f64,
}

/// Solve the detector-to-action routing by least squares: the design matrix
/// is the detector response to every combination, the targets are the
/// one-hot next state and operation gates of the rule that fires there.
pub fn solve_routing(m: &StackMachine) -> Result<Routing, CompileError> {
    let d = Dims::new(m);
    let a = detector_matrix(m)?;
    let mut targets = Matrix::zeros(d.combos, d.nq + 4 * d.p);
    for idx in 0..d.combos {
        let (q, classes) = m.combo(idx);
        if let Some((next, ops)) = m.effective_rule(q, &classes) {
            targets.set(idx, next, 1.0);
            for (i, op) in ops.iter().enumerate() {
                targets.set(idx, d.nq + 4 * i + op.index(), 1.0);
            }
        }
    }
    let sol = lstsq(&a, &targets)?;
    // NaN residuals must fail too, hence the negated form.
    if !(sol.residual.is_finite() && sol.residual < 1e-9) {
        return Err(CompileError::Routing(sol.residual));
    }
    Ok(Routing { coeffs: sol.x, residual: sol.residual })
}

pub fn compile(m: &StackMachine) -> Result<(Network, StackCensus), CompileError> {
    let d = Dims::new(m);
    let b = f64::from(BASE);
    let routing = solve_routing(m)?;
    let layers = vec![
        Layer::Linear(read_layer(&d, b)),
        Layer::Linear(detect_layer(m, &d)),
        Layer::Linear(route_layer(&d, &routing, b)),
        Layer::Linear(write_layer(&d)),
    ];
    let census = StackCensus {
        state_width: d.n0(),
        layers_per_step: 4,
        layer_widths: vec![d.n1(), d.n2(), d.n3(), d.n0()],
        detectors: d.combos,
        base: BASE,
        routing_residual: routing.residual,
    };
    let mut meta = BTreeMap::new();
    meta.insert("base".to_string(), BASE.to_string());
    meta.insert("num_states".to_string(), d.nq.to_string());
    meta.insert("num_stacks".to_string(), d.p.to_string());
    let net = Network {
        arch: ARCH.to_string(),
        machine_digest: m.digest(),
        width: d.n0(),
        enc_width: 0,
        layers,
        meta,
    };
    debug_assert!(net.check_shapes().is_ok());
    Ok((net, census))
}

pub fn init_state(m: &StackMachine, codec: &CantorCodec, stacks: &[Vec<u8>]) -> Vec<f64> {
    let mut x = vec![0.0; m.num_states() + m.num_stacks()];
    x[m.initial()] = 1.0;
    for (i, stack) in stacks.iter().enumerate() {
        x[m.num_states() + i] = codec.encode(stack);
    }
    x
}

pub fn read_state(m: &StackMachine, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nq = m.num_states();
    (x[..nq].to_vec(), x[nq..nq + m.num_stacks()].to_vec())
}
