//! Encoder–decoder transformer construction for Turing machines (`wcm21`).
//!
//! The network simulates one machine step per decoder application. Each
//! produced row is a *write record*: alongside the new control state (`st`),
//! the symbol now under the head (`sym1`) and the new head position (`pos3`),
//! it records which cell this step wrote (`pos2`) and what was written
//! (`sym2`), plus its own index in the history (`pos1`, stamped by the
//! simulator as a positional encoding). Self-attention over these records
//! reconstructs the tape on demand: a cell's current symbol is the `sym2` of
//! the record with the highest index among those whose `pos2` matches —
//! found by one "visited" query plus a most-significant-bit-first binary
//! search over record indices — falling back to the original input via
//! cross-attention against the encoder when the cell was never written.
//!
//! Row slices, in order: `st` (states, one-hot), `sym1`, `sym2` (symbols,
//! one-hot), `pos1`, `pos2`, `pos3` (positions, `k`-bit binary, LSB first),
//! and scratch `scr1`, `scr2` (symbol-wide), `scr3` (position-wide), `scr4`
//! (2), `scr5` (3). All activations stay exactly 0/1 valued: attention runs
//! at a sharp softmax gain where losing scores underflow to exactly zero,
//! and the two tie-prone stages re-sharpen their outputs with a pair of
//! `relu(1 - x)` layers.
//!
//! The per-step pipeline:
//!
//! 1.  `advance` — copy `pos3` into `pos2`: the cell about to be written.
//! 2.  `transition` — two-layer DNF over (`st`, `sym1`) with one detector
//!     per machine transition, routing next state into `st`, written symbol
//!     into `sym2`, and move direction into `scr5`.
//! 3.  `preprocess` — append the move addend (`+1` or, in two's complement,
//!     all-ones for `-1`) behind the row.
//! 4.  `adder` — ripple-carry `pos3 += addend` (one full adder per bit,
//!     carry riding in `scr3[0]`), wrapping modulo `2^k`.
//! 5.  `project` — drop the addend and clear the carry residue.
//! 6.  `visited` — self-attention: was `pos3` ever written? -> `scr4[0]`.
//! 7.  `search` — `k` self-attention layers recovering, MSB first, the
//!     highest record index that wrote `pos3` -> `scr3`.
//! 8.  `lastwrite` — self-attention: fetch that record's `sym2` -> `scr1`.
//! 9.  `initial` — cross-attention: the input symbol at `pos3` -> `scr2`.
//! 10. `assemble` — three feedforwards selecting `sym1` by priority
//!     (written symbol, else input symbol, else the blank), then clearing
//!     all scratch and `pos1` for the next stamp.
//!
//! Undefined transitions leave `st` all-zero; decoding reports them exactly
//! like the reference interpreter. A move off the tape only decodes cleanly
//! when the machine halts on that step (the head then stays); otherwise it
//! is the same error the interpreter raises.

use std::collections::BTreeMap;
use std::ops::Range;

use thiserror::Error;

use crate::circuits::{self, DnfClause};
use crate::linalg::Matrix;
use crate::machine::{Configuration, Move, RunError, TuringMachine};
use crate::network::{AttentionLayer, Layer, LinearLayer, Network, NetworkError};

pub const ARCH: &str = "wcm21";
/// Softmax gain. Score gaps are at least 1/4, and `exp(-9999/4)` underflows
/// to exactly 0.0, so attention weights are exact hard choices.
pub const KAPPA: f64 = 9999.0;

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("step budget must be at least 1")]
    ZeroBudget,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Net(#[from] NetworkError),
    #[error(transparent)]
    Machine(#[from] RunError),
    #[error("non-binary activation {value} at dimension {dim} of a decoded row")]
    NonBinary { dim: usize, value: f64 },
    #[error("decoded row is internally inconsistent: {0}")]
    Inconsistent(String),
    #[error("network was compiled for a different machine")]
    MachineMismatch,
    #[error("network has architecture `{got}`, expected `{expected}`")]
    WrongArch { expected: String, got: String },
    #[error("network metadata is missing or malformed: `{0}`")]
    BadMeta(&'static str),
    #[error("input length {len} exceeds what {bits} position bits can address ({capacity})")]
    InputTooLong { len: usize, bits: usize, capacity: usize },
}

/// Where each slice of a row lives. Positions are `k`-bit binary, LSB at the
/// lowest dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceLayout {
    pub num_states: usize,
    pub num_symbols: usize,
    pub k: usize,
}

/// Position bits needed for a step budget: record indices `0..t_max` are
/// queried (the final row's own stamp may wrap; it is never queried).
pub fn position_bits(t_max: usize) -> usize {
    if t_max <= 2 {
        1
    } else {
        (t_max - 1).ilog2() as usize + 1
    }
}

impl SliceLayout {
    pub fn new(m: &TuringMachine, t_max: usize) -> SliceLayout {
        SliceLayout {
            num_states: m.num_states(),
            num_symbols: m.num_symbols(),
            k: position_bits(t_max),
        }
    }

    pub fn st(&self) -> Range<usize> {
        0..self.num_states
    }
    pub fn sym1(&self) -> Range<usize> {
        let s = self.num_states;
        s..s + self.num_symbols
    }
    pub fn sym2(&self) -> Range<usize> {
        let s = self.num_states + self.num_symbols;
        s..s + self.num_symbols
    }
    pub fn pos1(&self) -> Range<usize> {
        let s = self.num_states + 2 * self.num_symbols;
        s..s + self.k
    }
    pub fn pos2(&self) -> Range<usize> {
        let s = self.pos1().end;
        s..s + self.k
    }
    pub fn pos3(&self) -> Range<usize> {
        let s = self.pos2().end;
        s..s + self.k
    }
    pub fn scr1(&self) -> Range<usize> {
        let s = self.pos3().end;
        s..s + self.num_symbols
    }
    pub fn scr2(&self) -> Range<usize> {
        let s = self.scr1().end;
        s..s + self.num_symbols
    }
    pub fn scr3(&self) -> Range<usize> {
        let s = self.scr2().end;
        s..s + self.k
    }
    pub fn scr4(&self) -> Range<usize> {
        let s = self.scr3().end;
        s..s + 2
    }
    pub fn scr5(&self) -> Range<usize> {
        let s = self.scr4().end;
        s..s + 3
    }
    pub fn width(&self) -> usize {
        self.scr5().end
    }

    /// Encoder rows are a one-hot symbol followed by the cell position.
    pub fn enc_width(&self) -> usize {
        self.num_symbols + self.k
    }
    pub fn enc_sym(&self) -> Range<usize> {
        0..self.num_symbols
    }
    pub fn enc_pos(&self) -> Range<usize> {
        self.num_symbols..self.num_symbols + self.k
    }
}

/// Structural summary of a compiled step network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Census {
    pub width: usize,
    pub position_bits: usize,
    pub transition_detectors: usize,
    pub full_adders: usize,
    pub self_attention: usize,
    pub cross_attention: usize,
    pub assembly_feedforwards: usize,
    pub layers: usize,
}

fn set_bits(row: &mut [f64], range: Range<usize>, value: usize) {
    for (t, dim) in range.enumerate() {
        row[dim] = ((value >> t) & 1) as f64;
    }
}

fn identity_layer(name: &str, d: usize) -> LinearLayer {
    LinearLayer {
        name: name.into(),
        w: Matrix::identity(d),
        b: vec![0.0; d],
        activation: crate::linalg::Activation::Relu,
    }
}

fn clear_row(w: &mut Matrix, i: usize) {
    for j in 0..w.cols() {
        w.set(i, j, 0.0);
    }
}

/// `pos2 := pos3`; the write target of the step about to run is the current
/// head position.
fn advance_layer(l: &SliceLayout) -> LinearLayer {
    let mut layer = identity_layer("advance", l.width());
    for (dst, src) in l.pos2().zip(l.pos3()) {
        clear_row(&mut layer.w, dst);
        layer.w.set(dst, src, 1.0);
    }
    layer
}

/// Two-layer DNF applying the transition function: one detector per
/// transition over (`st`, `sym1`), routed into `st`, `sym2` and the move
/// flags `scr5[0]` (right) / `scr5[1]` (left).
fn transition_layers(m: &TuringMachine, l: &SliceLayout) -> Vec<LinearLayer> {
    let clauses: Vec<DnfClause> = m
        .transitions()
        .map(|(q, a, t)| {
            let dir = match t.mv {
                Move::Right => l.scr5().start,
                Move::Left => l.scr5().start + 1,
            };
            DnfClause {
                positive: vec![l.st().start + q, l.sym1().start + a],
                negative: vec![],
                outputs: vec![l.st().start + t.next, l.sym2().start + t.write, dir],
            }
        })
        .collect();
    let replaced: Vec<usize> = l.st().chain(l.sym2()).chain(l.scr5()).collect();
    let mut layers = circuits::dnf_layers(l.width(), &clauses, &replaced);
    layers[0].name = "transition.detect".into();
    layers[1].name = "transition.route".into();
    layers
}

/// Widen the row by the move addend: `+1` encodes as `1,0,...,0` and `-1` as
/// all ones (two's complement); with no move flag set the addend is zero.
fn preprocess_layer(l: &SliceLayout) -> LinearLayer {
    let w = l.width();
    let mut m = Matrix::zeros(w + l.k, w);
    for i in 0..w {
        m.set(i, i, 1.0);
    }
    let right = l.scr5().start;
    let left = l.scr5().start + 1;
    m.set(w, right, 1.0);
    for t in 0..l.k {
        m.set(w + t, left, 1.0);
    }
    LinearLayer {
        name: "preprocess".into(),
        w: m,
        b: vec![0.0; w + l.k],
        activation: crate::linalg::Activation::Relu,
    }
}

/// Ripple-carry `pos3 += addend` on the widened row, carry in `scr3[0]`.
fn adder_layers(l: &SliceLayout) -> Vec<LinearLayer> {
    let w = l.width();
    let x: Vec<usize> = l.pos3().collect();
    let y: Vec<usize> = (w..w + l.k).collect();
    let mut layers = circuits::ripple_adder(w + l.k, &x, &y, l.scr3().start);
    for (i, layer) in layers.iter_mut().enumerate() {
        layer.name = format!("adder.{i}");
    }
    layers
}

/// Back to row width: drop the addend dims, clear the carry residue.
fn project_layer(l: &SliceLayout) -> LinearLayer {
    let w = l.width();
    let mut m = Matrix::zeros(w, w + l.k);
    for i in 0..w {
        m.set(i, i, 1.0);
    }
    clear_row(&mut m, l.scr3().start);
    LinearLayer {
        name: "project".into(),
        w: m,
        b: vec![0.0; w],
        activation: crate::linalg::Activation::Relu,
    }
}

/// Bilinear bit-matching projections shared by the attention stages.
///
/// Query bits map to `2b - 1` and key bits to `b - 1/2`, so each matching
/// pair contributes `+1/2` and each mismatch `-1/2`: the bilinear score is
/// `#matches - m/2`. The constants come from dotting against a block that
/// sums to one in every valid row (the state block of records, the symbol
/// block of encoder rows) — attention projections have no bias terms. A
/// final score dimension carries a constant query of 1; `bonus` adds a
/// scaled key bit there, and the phantom row's score is placed against it.
fn matcher(
    x_width: usize,
    key_width: usize,
    x_ones: Range<usize>,
    key_ones: Range<usize>,
    pairs: &[(usize, usize)],
    bonus: Option<(usize, f64)>,
    null_score: f64,
) -> (Matrix, Matrix, Vec<f64>) {
    let m = pairs.len();
    let mut wq = Matrix::zeros(m + 1, x_width);
    let mut wk = Matrix::zeros(m + 1, key_width);
    for (t, &(qdim, kdim)) in pairs.iter().enumerate() {
        wq.set(t, qdim, 2.0);
        for dim in x_ones.clone() {
            let v = wq.get(t, dim) - 1.0;
            wq.set(t, dim, v);
        }
        wk.set(t, kdim, 1.0);
        for dim in key_ones.clone() {
            let v = wk.get(t, dim) - 0.5;
            wk.set(t, dim, v);
        }
    }
    for dim in x_ones {
        let v = wq.get(m, dim) + 1.0;
        wq.set(m, dim, v);
    }
    if let Some((kdim, coeff)) = bonus {
        wk.set(m, kdim, coeff);
    }
    let mut null_key = vec![0.0; m + 1];
    null_key[m] = null_score;
    (wq, wk, null_key)
}

/// Merge matrix that keeps the row and overwrites `targets[i]` with attended
/// component `i`.
fn merge_plain(w: usize, value_dim: usize, targets: &[usize]) -> Matrix {
    let mut m = Matrix::zeros(w, w + value_dim);
    for i in 0..w {
        m.set(i, i, 1.0);
    }
    for (i, &t) in targets.iter().enumerate() {
        clear_row(&mut m, t);
        m.set(t, w + i, 1.0);
    }
    m
}

/// Merge matrix writing `4*attended - 2` into `target` (the constant again
/// comes from the state block). Ties among identical winners average to
/// within a few ulps of 1; the follow-up [`sharpen`] pair collapses
/// `4a - 2 > 0` to exactly 1 and `-2` to exactly 0.
fn merge_sharp(w: usize, x_ones: Range<usize>, target: usize) -> Matrix {
    let mut m = Matrix::zeros(w, w + 1);
    for i in 0..w {
        m.set(i, i, 1.0);
    }
    clear_row(&mut m, target);
    m.set(target, w, 4.0);
    for dim in x_ones {
        m.set(target, dim, -2.0);
    }
    m
}

/// Two `relu(1 - x)` layers: maps any value `>= 1` to 0 then 1, and any
/// value `<= 0` to `>= 1` then 0 — an exact threshold at 1/2.
fn sharpen(name: &str, w: usize, dim: usize) -> Vec<LinearLayer> {
    let mut layers = Vec::with_capacity(2);
    for i in 1..=2 {
        let mut layer = identity_layer(&format!("{name}.sharpen{i}"), w);
        layer.w.set(dim, dim, -1.0);
        layer.b[dim] = 1.0;
        layers.push(layer);
    }
    layers
}

/// `scr4[0] := 1` iff some record wrote the cell `pos3` points at.
fn visited_layers(l: &SliceLayout) -> Vec<Layer> {
    let w = l.width();
    let pairs: Vec<(usize, usize)> = l.pos3().zip(l.pos2()).collect();
    let (wq, wk, null_key) = matcher(
        w,
        w,
        l.st(),
        l.st(),
        &pairs,
        None,
        l.k as f64 / 2.0 - 0.5,
    );
    // Value 1 for every record (the state block sums to one).
    let mut wv = Matrix::zeros(1, w);
    for dim in l.st() {
        wv.set(0, dim, 1.0);
    }
    let target = l.scr4().start;
    let mut layers = vec![Layer::Attention(AttentionLayer {
        name: "visited.attn".into(),
        cross: false,
        kappa: KAPPA,
        wq,
        wk,
        wv,
        null_key,
        null_value: vec![0.0],
        merge: merge_sharp(w, l.st(), target),
    })];
    layers.extend(sharpen("visited", w, target).into_iter().map(Layer::Linear));
    layers
}

/// MSB-first binary search for the highest record index that wrote `pos3`,
/// one attention layer per bit, result accumulating in `scr3`.
///
/// Layer `j` matches records on (`pos2 == pos3`) and on the already-decided
/// high bits (`pos1[>j] == scr3[>j]`), with a half-point bonus for records
/// whose bit `j` is set. The phantom row sits a quarter point above the
/// best bit-0 match: bit `j` of the answer is 1 exactly when a bit-1 match
/// exists.
fn search_layers(l: &SliceLayout) -> Vec<Layer> {
    let w = l.width();
    let mut layers = Vec::with_capacity(3 * l.k);
    for j in (0..l.k).rev() {
        let mut pairs: Vec<(usize, usize)> = l.pos3().zip(l.pos2()).collect();
        for t in j + 1..l.k {
            pairs.push((l.scr3().start + t, l.pos1().start + t));
        }
        let m = pairs.len();
        let (wq, wk, null_key) = matcher(
            w,
            w,
            l.st(),
            l.st(),
            &pairs,
            Some((l.pos1().start + j, 0.5)),
            m as f64 / 2.0 + 0.25,
        );
        let mut wv = Matrix::zeros(1, w);
        wv.set(0, l.pos1().start + j, 1.0);
        let target = l.scr3().start + j;
        layers.push(Layer::Attention(AttentionLayer {
            name: format!("search{j}.attn"),
            cross: false,
            kappa: KAPPA,
            wq,
            wk,
            wv,
            null_key,
            null_value: vec![0.0],
            merge: merge_sharp(w, l.st(), target),
        }));
        layers.extend(sharpen(&format!("search{j}"), w, target).into_iter().map(Layer::Linear));
    }
    layers
}

/// Fetch `sym2` of the record whose index equals `scr3` into `scr1`. Record
/// indices are unique, so the winner is exact without sharpening; if the
/// search found nothing, `scr3` is 0 and this fetches record 0's all-zero
/// `sym2`.
fn last_written_layer(l: &SliceLayout) -> AttentionLayer {
    let w = l.width();
    let pairs: Vec<(usize, usize)> = l.scr3().zip(l.pos1()).collect();
    let (wq, wk, null_key) = matcher(
        w,
        w,
        l.st(),
        l.st(),
        &pairs,
        None,
        l.k as f64 / 2.0 - 0.5,
    );
    let g = l.num_symbols;
    let mut wv = Matrix::zeros(g, w);
    for (i, dim) in l.sym2().enumerate() {
        wv.set(i, dim, 1.0);
    }
    let targets: Vec<usize> = l.scr1().collect();
    AttentionLayer {
        name: "lastwrite.attn".into(),
        cross: false,
        kappa: KAPPA,
        wq,
        wk,
        wv,
        null_key,
        null_value: vec![0.0; g],
        merge: merge_plain(w, g, &targets),
    }
}

/// Cross-attention against the encoder: the input symbol at cell `pos3`
/// into `scr2`, or all-zero when `pos3` addresses no cell.
fn initial_symbol_layer(l: &SliceLayout) -> AttentionLayer {
    let w = l.width();
    let pairs: Vec<(usize, usize)> = l.pos3().zip(l.enc_pos()).collect();
    let (wq, wk, null_key) = matcher(
        w,
        l.enc_width(),
        l.st(),
        l.enc_sym(),
        &pairs,
        None,
        l.k as f64 / 2.0 - 0.5,
    );
    let g = l.num_symbols;
    let mut wv = Matrix::zeros(g, l.enc_width());
    for (i, dim) in l.enc_sym().enumerate() {
        wv.set(i, dim, 1.0);
    }
    let targets: Vec<usize> = l.scr2().collect();
    AttentionLayer {
        name: "initial.attn".into(),
        cross: true,
        kappa: KAPPA,
        wq,
        wk,
        wv,
        null_key,
        null_value: vec![0.0; g],
        merge: merge_plain(w, g, &targets),
    }
}

/// Three feedforwards assembling the new `sym1`:
///
/// * `getv` gates the candidates by the visited flag — `scr1` survives only
///   if visited, `scr2` only if not — and raises the blank fallback flag
///   `scr4[1]` when neither candidate exists.
/// * `arrange` writes `sym1 := scr1 + scr2 + blank * scr4[1]` (at most one
///   term is live).
/// * `combine` clears `pos1` and all scratch for the next step.
fn assembly_layers(m: &TuringMachine, l: &SliceLayout) -> Vec<LinearLayer> {
    let w = l.width();
    let visited = l.scr4().start;

    let mut getv = identity_layer("assemble.getv", w);
    for dim in l.scr1() {
        getv.w.set(dim, visited, 1.0);
        getv.b[dim] = -1.0;
    }
    for dim in l.scr2() {
        getv.w.set(dim, visited, -1.0);
    }
    let fallback = l.scr4().start + 1;
    clear_row(&mut getv.w, fallback);
    getv.w.set(fallback, visited, -1.0);
    for dim in l.scr2() {
        getv.w.set(fallback, dim, -1.0);
    }
    getv.b[fallback] = 1.0;

    let mut arrange = identity_layer("assemble.arrange", w);
    let blank = m.empty_symbol();
    for (s, dim) in l.sym1().enumerate() {
        clear_row(&mut arrange.w, dim);
        arrange.w.set(dim, l.scr1().start + s, 1.0);
        arrange.w.set(dim, l.scr2().start + s, 1.0);
        if s == blank {
            arrange.w.set(dim, fallback, 1.0);
        }
    }

    let mut combine = identity_layer("assemble.combine", w);
    for dim in l
        .pos1()
        .chain(l.scr1())
        .chain(l.scr2())
        .chain(l.scr3())
        .chain(l.scr4())
        .chain(l.scr5())
    {
        clear_row(&mut combine.w, dim);
    }

    vec![getv, arrange, combine]
}

/// Compile a machine into its step network.
pub fn compile(m: &TuringMachine, t_max: usize) -> Result<(Network, Census), CompileError> {
    if t_max == 0 {
        return Err(CompileError::ZeroBudget);
    }
    let l = SliceLayout::new(m, t_max);
    let mut layers: Vec<Layer> = Vec::new();
    layers.push(Layer::Linear(advance_layer(&l)));
    layers.extend(transition_layers(m, &l).into_iter().map(Layer::Linear));
    layers.push(Layer::Linear(preprocess_layer(&l)));
    layers.extend(adder_layers(&l).into_iter().map(Layer::Linear));
    layers.push(Layer::Linear(project_layer(&l)));
    layers.extend(visited_layers(&l));
    layers.extend(search_layers(&l));
    layers.push(Layer::Attention(last_written_layer(&l)));
    layers.push(Layer::Attention(initial_symbol_layer(&l)));
    layers.extend(assembly_layers(m, &l).into_iter().map(Layer::Linear));

    let census = Census {
        width: l.width(),
        position_bits: l.k,
        transition_detectors: m.transitions().count(),
        full_adders: l.k,
        self_attention: layers
            .iter()
            .filter(|la| matches!(la, Layer::Attention(a) if !a.cross))
            .count(),
        cross_attention: layers
            .iter()
            .filter(|la| matches!(la, Layer::Attention(a) if a.cross))
            .count(),
        assembly_feedforwards: 3,
        layers: layers.len(),
    };

    let mut meta = BTreeMap::new();
    meta.insert("position_bits".to_string(), l.k.to_string());
    meta.insert("t_max".to_string(), t_max.to_string());
    meta.insert("num_states".to_string(), m.num_states().to_string());
    meta.insert("num_symbols".to_string(), m.num_symbols().to_string());

    let net = Network {
        arch: ARCH.to_string(),
        machine_digest: m.digest(),
        width: l.width(),
        enc_width: l.enc_width(),
        layers,
        meta,
    };
    debug_assert!(net.check_shapes().is_ok());
    Ok((net, census))
}

/// Encode an input tape: one row per cell, one-hot symbol then binary
/// position.
pub fn encoder(l: &SliceLayout, tape: &[usize]) -> Matrix {
    let mut e = Matrix::zeros(0, l.enc_width());
    for (i, &sym) in tape.iter().enumerate() {
        let mut row = vec![0.0; l.enc_width()];
        row[l.enc_sym().start + sym] = 1.0;
        set_bits(&mut row, l.enc_pos(), i);
        e.push_row(&row).expect("encoder row width");
    }
    e
}

fn initial_row(m: &TuringMachine, l: &SliceLayout, first_symbol: usize) -> Vec<f64> {
    let mut row = vec![0.0; l.width()];
    row[l.st().start + m.initial()] = 1.0;
    row[l.sym1().start + first_symbol] = 1.0;
    row
}

fn decode_bits(row: &[f64], range: Range<usize>) -> Result<usize, SimError> {
    let mut value = 0usize;
    for (t, dim) in range.enumerate() {
        let v = row[dim];
        if v == 1.0 {
            value |= 1 << t;
        } else if v != 0.0 {
            return Err(SimError::NonBinary { dim, value: v });
        }
    }
    Ok(value)
}

fn decode_onehot(row: &[f64], range: Range<usize>) -> Result<Option<usize>, SimError> {
    let mut found = None;
    for (i, dim) in range.enumerate() {
        let v = row[dim];
        if v == 1.0 {
            if found.is_some() {
                return Err(SimError::NonBinary { dim, value: v });
            }
            found = Some(i);
        } else if v != 0.0 {
            return Err(SimError::NonBinary { dim, value: v });
        }
    }
    Ok(found)
}

/// Decode a produced record into the next configuration, applying its write
/// to the running tape. `prev` is only used to phrase errors the way the
/// reference interpreter does.
fn decode_row(
    m: &TuringMachine,
    l: &SliceLayout,
    row: &[f64],
    prev: &Configuration,
    tape: &mut [usize],
) -> Result<Configuration, SimError> {
    let state = match decode_onehot(row, l.st())? {
        Some(s) => s,
        None => {
            // The transition DNF matched nothing: same error, same wording,
            // as the interpreter hitting the hole in the transition table.
            return Err(SimError::Machine(RunError::UndefinedTransition {
                state: m.state_name(prev.state).to_string(),
                symbol: m.symbol_name(prev.tape[prev.head]).to_string(),
            }));
        }
    };

    let wrote = decode_onehot(row, l.sym2())?
        .ok_or_else(|| SimError::Inconsistent("record carries no written symbol".into()))?;
    let wrote_at = decode_bits(row, l.pos2())?;
    if wrote_at >= tape.len() {
        return Err(SimError::Inconsistent(format!(
            "write position {wrote_at} is outside the tape"
        )));
    }
    tape[wrote_at] = wrote;

    let h = decode_bits(row, l.pos3())?;
    let head = if h < tape.len() {
        h
    } else if m.is_terminal(state) {
        // Halting move off the tape: the head stays on the written cell.
        wrote_at
    } else {
        let pos = if h == wrote_at + 1 { h as isize } else { -1 };
        return Err(SimError::Machine(RunError::HeadOffTape {
            pos,
            state: m.state_name(state).to_string(),
        }));
    };

    if h < tape.len() {
        let sym1 = decode_onehot(row, l.sym1())?
            .ok_or_else(|| SimError::Inconsistent("record carries no head symbol".into()))?;
        if sym1 != tape[h] {
            return Err(SimError::Inconsistent(format!(
                "record sees symbol {} under the head but the tape holds {}",
                m.symbol_name(sym1),
                m.symbol_name(tape[h]),
            )));
        }
    }

    Ok(Configuration { state, head, tape: tape.to_vec() })
}

/// Run the compiled network on an input tape, decoding one configuration per
/// step. Produces exactly the interpreter's trace — including its errors —
/// up to the compiled step budget.
pub fn simulate(
    m: &TuringMachine,
    net: &Network,
    tape: Vec<usize>,
) -> Result<Vec<Configuration>, SimError> {
    if net.arch != ARCH {
        return Err(SimError::WrongArch { expected: ARCH.into(), got: net.arch.clone() });
    }
    if net.machine_digest != m.digest() {
        return Err(SimError::MachineMismatch);
    }
    let k = net.meta_usize("position_bits").ok_or(SimError::BadMeta("position_bits"))?;
    let t_max = net.meta_usize("t_max").ok_or(SimError::BadMeta("t_max"))?;
    let l = SliceLayout { num_states: m.num_states(), num_symbols: m.num_symbols(), k };
    if l.width() != net.width || l.enc_width() != net.enc_width {
        return Err(SimError::MachineMismatch);
    }
    if tape.is_empty() {
        return Err(SimError::Machine(RunError::EmptyTape));
    }
    // Cells must be addressable and distinguishable from off-tape wraps.
    if tape.len() > (1usize << k) - 1 {
        return Err(SimError::InputTooLong {
            len: tape.len(),
            bits: k,
            capacity: (1usize << k) - 1,
        });
    }

    let enc = encoder(&l, &tape);
    let mut history = Matrix::zeros(0, l.width());
    history.push_row(&initial_row(m, &l, tape[0])).expect("row width");

    let mut cur_tape = tape.clone();
    let mut trace = vec![Configuration { state: m.initial(), head: 0, tape }];

    for tau in 1..=t_max {
        if m.is_terminal(trace.last().unwrap().state) {
            break;
        }
        let x = history.row(history.rows() - 1).to_vec();
        let mut y = net.forward_step(&x, &history, &enc)?;
        // Stamp the record index: the simulator supplies the positional
        // encoding, exactly like decoder inputs in an ordinary transformer.
        set_bits(&mut y, l.pos1(), tau % (1 << l.k));
        history.push_row(&y).expect("row width");
        let cfg = decode_row(m, &l, &y, trace.last().unwrap(), &mut cur_tape)?;
        trace.push(cfg);
    }
    Ok(trace)
}
