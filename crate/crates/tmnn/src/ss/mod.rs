//! Recurrent saturated-linear constructions for stack machines.
//!
//! Both simulators keep each stack as one real number in a base-`b` Cantor
//! encoding (digits `b-3` and `b-1` for bits 0 and 1, top digit first), so a
//! push is `(v + digit)/b` and a pop is `b*v - digit`. The gap left between
//! and around the digit ranges is what makes reads robust:
//!
//! * a non-empty stack with top bit 0 lies in `[(b-3)/b, (b-2)/b)`,
//! * one with top bit 1 lies in `[(b-1)/b, 1)`,
//! * the empty stack is exactly 0.
//!
//! The top-bit threshold `(2b-3)/(2b)` is the midpoint of the gap
//! `[(b-2)/b, (b-1)/b]` between those ranges, leaving `1/(2b)` of margin on
//! each side; the emptiness threshold `(b-3)/(2b)` is the midpoint between 0
//! and the smallest non-empty value `(b-3)/b`. For base 4 that is 5/8 and
//! 1/8, and every value is a dyadic rational, so the arithmetic is exact.
//! For base 40 the digits are 37/40 and 39/40, top-0 values lie in
//! `[0.925, 0.95)`, top-1 values in `[0.975, 1)`, the thresholds are
//! 77/80 = 0.9625 and 37/80 = 0.4625, and the margin is 1/80 = 0.0125 —
//! roomy enough that the `40x` error amplification of repeated pops stays
//! harmless for the depths the simulators are tested at (see
//! [`precision_probe`]).
//!
//! [`four`] builds the four-layer-per-step simulator (`ss95-4`, base 4);
//! [`one`] fuses a step into a single saturated layer (`ss95-1`, base 40).

pub mod four;
pub mod one;

use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::machine::stack::render_classes;
use crate::machine::{RunError, StackConfiguration, StackMachine};
use crate::network::{Network, NetworkError};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("routing residual {0:e} exceeds the 1e-9 tolerance")]
    Routing(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Net(#[from] NetworkError),
    #[error(transparent)]
    Machine(#[from] RunError),
    #[error("non-binary activation {value} at state dimension {dim}")]
    NonBinary { dim: usize, value: f64 },
    #[error("decoded state is internally inconsistent: {0}")]
    Inconsistent(String),
    #[error("network was compiled for a different machine")]
    MachineMismatch,
    #[error("network has architecture `{got}`, expected a stack simulator")]
    WrongArch { got: String },
    #[error("network metadata is missing or malformed: `{0}`")]
    BadMeta(&'static str),
}

/// Structural summary of a compiled stack simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct StackCensus {
    pub state_width: usize,
    pub layers_per_step: usize,
    /// Output width of each layer in one step.
    pub layer_widths: Vec<usize>,
    pub detectors: usize,
    pub base: u32,
    /// Least-squares residual of the detector-to-action routing; exactly 0
    /// for the single-layer construction, which enumerates its routing.
    pub routing_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CantorCodec {
    pub base: u32,
}

impl CantorCodec {
    pub fn new(base: u32) -> CantorCodec {
        assert!(base >= 4, "digits b-3 and b-1 need base >= 4");
        CantorCodec { base }
    }

    fn b(&self) -> f64 {
        f64::from(self.base)
    }

    pub fn digit(&self, bit: u8) -> f64 {
        self.b() - 3.0 + 2.0 * f64::from(bit)
    }

    /// Encode a stack (top first). Evaluated bottom-up so the rounding is
    /// identical to building the stack with successive [`push`](Self::push)es.
    pub fn encode(&self, stack: &[u8]) -> f64 {
        stack.iter().rev().fold(0.0, |v, &bit| (v + self.digit(bit)) / self.b())
    }

    pub fn push(&self, v: f64, bit: u8) -> f64 {
        (v + self.digit(bit)) / self.b()
    }

    pub fn pop(&self, v: f64, top: u8) -> f64 {
        self.b() * v - self.digit(top)
    }

    /// Midpoint between the empty value 0 and the smallest non-empty value.
    pub fn empty_threshold(&self) -> f64 {
        (self.b() - 3.0) / (2.0 * self.b())
    }

    /// Midpoint of the gap between the top-0 and top-1 value ranges.
    pub fn top_threshold(&self) -> f64 {
        (2.0 * self.b() - 3.0) / (2.0 * self.b())
    }

    /// Distance from either digit range to the top threshold: how much
    /// accumulated error a read tolerates.
    pub fn threshold_margin(&self) -> f64 {
        1.0 / (2.0 * self.b())
    }

    /// Threshold read of the top: `None` when the value decodes as empty.
    pub fn read_top(&self, v: f64) -> Option<u8> {
        if v <= self.empty_threshold() {
            None
        } else {
            Some(u8::from(v >= self.top_threshold()))
        }
    }

    /// Pop digits by threshold until the value reads empty. `None` if more
    /// than `max_depth` digits come out — the value was not a stack.
    pub fn decode(&self, mut v: f64, max_depth: usize) -> Option<Vec<u8>> {
        let mut out = Vec::new();
        while let Some(bit) = self.read_top(v) {
            if out.len() >= max_depth {
                return None;
            }
            out.push(bit);
            v = self.pop(v, bit);
        }
        Some(out)
    }
}

/// Error accumulation measured against fresh encodings while popping whole
/// stacks down to empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub base: u32,
    pub stacks: usize,
    pub max_depth: usize,
    /// Threshold reads (top bit or emptiness) that disagreed with the true
    /// stack, over every prefix of every probe.
    pub flips: usize,
    /// Flips whose read preceded the `k+1`-th pop (the final emptiness read
    /// of a fully popped stack counts one past its length).
    pub per_pop_flips: Vec<usize>,
    /// Largest `|value - encode(true remainder)|` seen after any pop.
    pub max_value_error: f64,
    /// Largest value error seen after the `k+1`-th pop.
    pub per_pop_error: Vec<f64>,
    /// Pop count before which the first misread happened, if any.
    pub first_flip: Option<usize>,
    pub threshold_margin: f64,
}

/// Pop each stack to the bottom, comparing every threshold read against the
/// truth and the running value against a fresh encoding of the remainder.
pub fn precision_probe(codec: &CantorCodec, stacks: &[Vec<u8>]) -> ProbeReport {
    let mut max_depth = 0usize;
    for stack in stacks {
        max_depth = max_depth.max(stack.len());
    }
    let mut per_pop_flips = vec![0usize; max_depth + 1];
    let mut per_pop_error = vec![0.0f64; max_depth];
    for stack in stacks {
        let mut v = codec.encode(stack);
        for k in 0..stack.len() {
            if codec.read_top(v) != Some(stack[k]) {
                per_pop_flips[k] += 1;
            }
            v = codec.pop(v, stack[k]);
            let err = (v - codec.encode(&stack[k + 1..])).abs();
            per_pop_error[k] = per_pop_error[k].max(err);
        }
        if codec.read_top(v).is_some() {
            per_pop_flips[stack.len()] += 1;
        }
    }
    ProbeReport {
        base: codec.base,
        stacks: stacks.len(),
        max_depth,
        flips: per_pop_flips.iter().sum(),
        first_flip: per_pop_flips.iter().position(|&f| f > 0),
        per_pop_flips,
        max_value_error: per_pop_error.iter().copied().fold(0.0, f64::max),
        per_pop_error,
        threshold_margin: codec.threshold_margin(),
    }
}

fn codec_for(net: &Network) -> Result<CantorCodec, SimError> {
    let base = net.meta_usize("base").ok_or(SimError::BadMeta("base"))?;
    if base < 4 {
        return Err(SimError::BadMeta("base"));
    }
    Ok(CantorCodec::new(base as u32))
}

/// Decode the recurrent state into a configuration. The four-layer network
/// computes in exact dyadic arithmetic, so its state bits must be exactly
/// 0/1 (`exact`); the base-40 single-layer network is read by thresholds.
fn decode_state(
    m: &StackMachine,
    codec: &CantorCodec,
    exact: bool,
    q: &[f64],
    v: &[f64],
    prev: &StackConfiguration,
) -> Result<StackConfiguration, SimError> {
    let mut state = None;
    for (i, &score) in q.iter().enumerate() {
        let on = if exact {
            if score != 0.0 && score != 1.0 {
                return Err(SimError::NonBinary { dim: i, value: score });
            }
            score == 1.0
        } else {
            score > 0.5
        };
        if on {
            if let Some(prev) = state {
                return Err(SimError::Inconsistent(format!(
                    "state dimensions {prev} and {i} are both set"
                )));
            }
            state = Some(i);
        }
    }
    let state = match state {
        Some(s) => s,
        None => {
            // No rule fired: phrase it exactly like the interpreter.
            return Err(SimError::Machine(RunError::UndefinedRule {
                state: m.state_name(prev.state).to_string(),
                classes: render_classes(&m.classes_of(prev)),
            }));
        }
    };

    let mut stacks = Vec::with_capacity(v.len());
    for (i, &value) in v.iter().enumerate() {
        // A stack grows by at most one digit per step.
        let cap = prev.stacks[i].len() + 1;
        match codec.decode(value, cap) {
            Some(stack) => stacks.push(stack),
            None => {
                return Err(SimError::Inconsistent(format!(
                    "stack {i} value {value} does not decode within depth {cap}"
                )))
            }
        }
    }
    Ok(StackConfiguration { state, stacks })
}

/// Run a compiled stack simulator from the machine's initial state on the
/// given stacks, decoding one configuration per step. Produces exactly the
/// interpreter's trace — including its errors — up to `t_max` steps.
pub fn simulate(
    m: &StackMachine,
    net: &Network,
    stacks: Vec<Vec<u8>>,
    t_max: usize,
) -> Result<Vec<StackConfiguration>, SimError> {
    let exact = match net.arch.as_str() {
        a if a == four::ARCH => true,
        a if a == one::ARCH => false,
        other => return Err(SimError::WrongArch { got: other.to_string() }),
    };
    if net.machine_digest != m.digest() {
        return Err(SimError::MachineMismatch);
    }
    if stacks.len() != m.num_stacks() {
        return Err(SimError::Inconsistent(format!(
            "expected {} initial stacks, got {}",
            m.num_stacks(),
            stacks.len()
        )));
    }
    let codec = codec_for(net)?;

    let mut x = if exact {
        four::init_state(m, &codec, &stacks)
    } else {
        one::init_state(m, &codec, &stacks)
    };
    if x.len() != net.width {
        return Err(SimError::MachineMismatch);
    }

    let history = Matrix::zeros(0, net.width);
    let enc = Matrix::zeros(0, net.enc_width);
    let mut trace = vec![StackConfiguration { state: m.initial(), stacks }];
    for _ in 1..=t_max {
        if m.is_terminal(trace.last().unwrap().state) {
            break;
        }
        x = net.forward_step(&x, &history, &enc)?;
        let (q, v) = if exact { four::read_state(m, &x) } else { one::read_state(m, &x) };
        let cfg = decode_state(m, &codec, exact, &q, &v, trace.last().unwrap())?;
        trace.push(cfg);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::bp_stack;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn base4_round_trips_exhaustively_to_depth_10() {
        let c = CantorCodec::new(4);
        for depth in 0..=10usize {
            for bits in 0..1u32 << depth {
                let stack: Vec<u8> = (0..depth).map(|i| (bits >> i & 1) as u8).collect();
                let v = c.encode(&stack);
                assert_eq!(c.decode(v, depth + 1).as_deref(), Some(&stack[..]));
                // Push/pop algebra is exact on dyadic values.
                for bit in [0u8, 1] {
                    assert_eq!(c.pop(c.push(v, bit), bit), v);
                }
                match stack.first() {
                    None => assert_eq!(v, 0.0),
                    Some(&top) => {
                        assert_eq!(c.read_top(v), Some(top));
                        assert_eq!(c.encode(&stack[1..]), c.pop(v, top));
                    }
                }
            }
        }
    }

    #[test]
    fn thresholds_sit_mid_gap() {
        let c4 = CantorCodec::new(4);
        assert_eq!(c4.top_threshold(), 5.0 / 8.0);
        assert_eq!(c4.empty_threshold(), 1.0 / 8.0);

        let c40 = CantorCodec::new(40);
        assert_eq!(c40.digit(0), 37.0);
        assert_eq!(c40.digit(1), 39.0);
        assert_eq!(c40.top_threshold(), 0.9625);
        assert_eq!(c40.empty_threshold(), 0.4625);
        assert_eq!(c40.threshold_margin(), 0.0125);

        // Value ranges stay inside their digit bands.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let depth = rng.gen_range(1..=12);
            let stack: Vec<u8> = (0..depth).map(|_| rng.gen_range(0..2u8)).collect();
            let v = c40.encode(&stack);
            if stack[0] == 0 {
                assert!((0.925..0.95).contains(&v), "top-0 value {v}");
            } else {
                assert!((0.975..1.0).contains(&v), "top-1 value {v}");
            }
        }
    }

    #[test]
    fn base40_probe_is_flip_free_to_depth_9() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let stacks: Vec<Vec<u8>> =
            (0..200).map(|_| (0..9).map(|_| rng.gen_range(0..2u8)).collect()).collect();
        let report = precision_probe(&CantorCodec::new(40), &stacks);
        assert_eq!(report.flips, 0);
        // The j-th read happens at error ~ 40^(j-1) * ulp, well under the
        // 1/80 margin through depth 9; the *final* residual after all nine
        // pops runs another factor of 40 hotter, so it is not held to the
        // read margin — only to the (huge) emptiness margin.
        assert!(report.max_value_error < 0.05, "residual {}", report.max_value_error);
    }

    #[test]
    fn base4_probe_is_error_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let stacks: Vec<Vec<u8>> =
            (0..100).map(|_| (0..20).map(|_| rng.gen_range(0..2u8)).collect()).collect();
        let report = precision_probe(&CantorCodec::new(4), &stacks);
        assert_eq!(report.flips, 0);
        assert_eq!(report.max_value_error, 0.0);
    }

    #[test]
    fn simulate_guards_reject_mismatches() {
        let m = bp_stack();
        let (net, _) = four::compile(&m).unwrap();

        let mut wrong = net.clone();
        wrong.arch = "wcm21".into();
        assert!(matches!(
            simulate(&m, &wrong, vec![vec![], vec![]], 4),
            Err(SimError::WrongArch { .. })
        ));

        let mut tampered = net.clone();
        tampered.machine_digest = "0".repeat(64);
        assert!(matches!(
            simulate(&m, &tampered, vec![vec![], vec![]], 4),
            Err(SimError::MachineMismatch)
        ));

        let mut no_meta = net.clone();
        no_meta.meta.remove("base");
        assert!(matches!(
            simulate(&m, &no_meta, vec![vec![], vec![]], 4),
            Err(SimError::BadMeta("base"))
        ));

        assert!(matches!(
            simulate(&m, &net, vec![vec![]], 4),
            Err(SimError::Inconsistent(_))
        ));
    }
}
