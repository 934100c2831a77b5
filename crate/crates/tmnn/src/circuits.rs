//! Boolean circuitry realized as width-preserving ReLU layers.
//!
//! Every builder returns layers of a fixed width `d` that compute a gate at
//! chosen coordinates while passing all other coordinates through an
//! identity row. The passthrough relies on coordinates being nonnegative
//! (ReLU of a nonnegative identity is the identity); every vector these
//! layers ever see is 0/1-valued.
//!
//! On 0/1 inputs each gate is *exact*: the arithmetic below never leaves
//! small integers, so there is no floating-point slack anywhere.

use crate::linalg::{Activation, Matrix};
use crate::network::LinearLayer;

fn base(d: usize) -> (Matrix, Vec<f64>) {
    (Matrix::identity(d), vec![0.0; d])
}

fn finish(name: &str, w: Matrix, b: Vec<f64>) -> LinearLayer {
    LinearLayer { name: name.into(), w, b, activation: Activation::Relu }
}

fn clear_row(w: &mut Matrix, i: usize) {
    for j in 0..w.cols() {
        w.set(i, j, 0.0);
    }
}

fn check_dims(d: usize, dims: &[usize]) {
    for (n, &i) in dims.iter().enumerate() {
        assert!(i < d, "gate coordinate {i} out of range for width {d}");
        assert!(!dims[..n].contains(&i), "gate coordinates must be distinct, {i} repeats");
    }
}

/// `out := NOT x[out]`, one layer.
pub fn not_gate(d: usize, out: usize) -> Vec<LinearLayer> {
    check_dims(d, &[out]);
    let (mut w, mut b) = base(d);
    w.set(out, out, -1.0);
    b[out] = 1.0;
    vec![finish("not", w, b)]
}

/// `out := AND(inputs)`, one layer. `out` may be one of the inputs.
pub fn and_gate(d: usize, inputs: &[usize], out: usize) -> Vec<LinearLayer> {
    assert!(!inputs.is_empty());
    check_dims(d, inputs);
    check_dims(d, &[out]);
    let (mut w, mut b) = base(d);
    clear_row(&mut w, out);
    for &i in inputs {
        w.set(out, i, 1.0);
    }
    b[out] = 1.0 - inputs.len() as f64;
    vec![finish("and", w, b)]
}

/// `out := NOR(inputs)`, one layer. `out` may be one of the inputs.
pub fn nor_gate(d: usize, inputs: &[usize], out: usize) -> Vec<LinearLayer> {
    assert!(!inputs.is_empty());
    check_dims(d, inputs);
    check_dims(d, &[out]);
    let (mut w, mut b) = base(d);
    clear_row(&mut w, out);
    for &i in inputs {
        w.set(out, i, -1.0);
    }
    b[out] = 1.0;
    vec![finish("nor", w, b)]
}

/// `out := OR(inputs)`, two layers (NOR then NOT).
pub fn or_gate(d: usize, inputs: &[usize], out: usize) -> Vec<LinearLayer> {
    let mut layers = nor_gate(d, inputs, out);
    layers.extend(not_gate(d, out));
    layers
}

/// `out := NAND(inputs)`, two layers (AND then NOT).
pub fn nand_gate(d: usize, inputs: &[usize], out: usize) -> Vec<LinearLayer> {
    let mut layers = and_gate(d, inputs, out);
    layers.extend(not_gate(d, out));
    layers
}

/// Half adder on coordinates `i`, `j`: three layers ending with the sum
/// (xor) at `i` and the carry (and) at `j`.
///
/// Layer 1 computes AND into `i` and NOR into `j`; layer 2 negates both
/// (NAND, OR); layer 3 combines them: `AND(NAND, OR) = XOR` at `i` and
/// `NOT NAND = AND` at `j`.
pub fn half_adder(d: usize, i: usize, j: usize) -> Vec<LinearLayer> {
    check_dims(d, &[i, j]);
    let (mut w1, mut b1) = base(d);
    clear_row(&mut w1, i);
    w1.set(i, i, 1.0);
    w1.set(i, j, 1.0);
    b1[i] = -1.0;
    clear_row(&mut w1, j);
    w1.set(j, i, -1.0);
    w1.set(j, j, -1.0);
    b1[j] = 1.0;

    let (mut w2, mut b2) = base(d);
    w2.set(i, i, -1.0);
    b2[i] = 1.0;
    w2.set(j, j, -1.0);
    b2[j] = 1.0;

    let (mut w3, mut b3) = base(d);
    clear_row(&mut w3, i);
    w3.set(i, i, 1.0);
    w3.set(i, j, 1.0);
    b3[i] = -1.0;
    clear_row(&mut w3, j);
    w3.set(j, i, -1.0);
    b3[j] = 1.0;

    vec![finish("ha1", w1, b1), finish("ha2", w2, b2), finish("ha3", w3, b3)]
}

/// Full adder over `a` at `i`, `b` at `j`, carry-in at `c`: eight layers
/// ending with the sum at `i` and the carry-out at `c`. Coordinate `j` is
/// consumed (it holds an intermediate afterwards).
pub fn full_adder(d: usize, i: usize, j: usize, c: usize) -> Vec<LinearLayer> {
    check_dims(d, &[i, j, c]);
    let mut layers = half_adder(d, i, j);
    layers.extend(half_adder(d, i, c));
    // The two partial carries can never both be 1, but OR is used for
    // uniformity with the gate library.
    layers.extend(or_gate(d, &[j, c], c));
    layers
}

/// Ripple-carry adder: `x += y (mod 2^k)` where `x` and `y` list coordinate
/// indices LSB first. `carry` must name a coordinate holding 0; the final
/// carry-out is left there (callers drop or clear it, making the addition
/// wrap). The `y` coordinates are consumed.
pub fn ripple_adder(d: usize, x: &[usize], y: &[usize], carry: usize) -> Vec<LinearLayer> {
    assert_eq!(x.len(), y.len(), "addend widths differ");
    let mut all: Vec<usize> = x.to_vec();
    all.extend_from_slice(y);
    all.push(carry);
    check_dims(d, &all);
    let mut layers = Vec::with_capacity(8 * x.len());
    for (&xi, &yi) in x.iter().zip(y) {
        layers.extend(full_adder(d, xi, yi, carry));
    }
    layers
}

/// One conjunctive clause of a DNF: fires when every `positive` coordinate
/// is 1 and every `negative` coordinate is 0, contributing +1 to each
/// coordinate in `outputs`.
#[derive(Debug, Clone)]
pub struct DnfClause {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// Two ReLU layers computing a DNF with routed outputs.
///
/// Layer 1 keeps the row and appends one detector per clause
/// (`ReLU(sum(pos) - sum(neg) - |pos| + 1)`, exactly 1 when the clause
/// matches, else 0 on 0/1 inputs). Layer 2 drops the detectors and rewrites
/// every coordinate in `replaced` with the sum of the detectors routed to
/// it; all other coordinates pass through. Clause outputs must be listed in
/// `replaced`.
pub fn dnf_layers(d: usize, clauses: &[DnfClause], replaced: &[usize]) -> Vec<LinearLayer> {
    check_dims(d, replaced);
    let m = clauses.len();

    let mut w1 = Matrix::zeros(d + m, d);
    let mut b1 = vec![0.0; d + m];
    for i in 0..d {
        w1.set(i, i, 1.0);
    }
    for (n, clause) in clauses.iter().enumerate() {
        check_dims(d, &clause.positive);
        check_dims(d, &clause.negative);
        for &o in &clause.outputs {
            assert!(replaced.contains(&o), "clause output {o} not listed as replaced");
        }
        for &p in &clause.positive {
            w1.set(d + n, p, 1.0);
        }
        for &q in &clause.negative {
            w1.set(d + n, q, -1.0);
        }
        b1[d + n] = 1.0 - clause.positive.len() as f64;
    }

    let mut w2 = Matrix::zeros(d, d + m);
    let b2 = vec![0.0; d];
    for i in 0..d {
        if !replaced.contains(&i) {
            w2.set(i, i, 1.0);
        }
    }
    for (n, clause) in clauses.iter().enumerate() {
        for &o in &clause.outputs {
            w2.set(o, d + n, 1.0);
        }
    }

    vec![finish("dnf-detect", w1, b1), finish("dnf-route", w2, b2)]
}
