//! Oracle-equivalence harness: run the network simulation and the reference
//! interpreter on a corpus of inputs and report the first divergence.

use tmnn::machine::{StackMachine, TuringMachine};
use tmnn::network::Network;
use tmnn::{ss, wcm};

use crate::trace;

pub struct Divergence {
    pub case_id: usize,
    pub input: String,
    pub step: usize,
    pub expected: String,
    pub got: String,
}

pub struct Report {
    pub cases: usize,
    pub divergence: Option<Divergence>,
}

impl Report {
    pub fn print(&self) {
        println!("cases {}", self.cases);
        match &self.divergence {
            None => println!("divergence none"),
            Some(d) => {
                println!("divergence case {} input {:?} step {}", d.case_id, d.input, d.step);
                println!("expected {}", d.expected);
                println!("got {}", d.got);
            }
        }
    }

    pub fn ok(&self) -> bool {
        self.divergence.is_none()
    }
}

/// First index where the line lists disagree, if any.
fn first_diff(expected: &[String], got: &[String]) -> Option<(usize, String, String)> {
    let absent = "<absent>".to_string();
    for i in 0..expected.len().max(got.len()) {
        let e = expected.get(i).unwrap_or(&absent);
        let g = got.get(i).unwrap_or(&absent);
        if e != g {
            return Some((i, e.clone(), g.clone()));
        }
    }
    None
}

/// Cases are `(label, tape)`; the step budget is baked into the network.
pub fn verify_wcm(m: &TuringMachine, net: &Network, cases: &[(String, Vec<usize>)]) -> Report {
    let t_max = net.meta_usize("t_max").unwrap_or(0);
    let mut divergence = None;
    for (id, (label, tape)) in cases.iter().enumerate() {
        let expected = trace::tape_outcome(m, &m.run(tape.clone(), t_max).map_err(|e| e.to_string()));
        let got =
            trace::tape_outcome(m, &wcm::simulate(m, net, tape.clone()).map_err(|e| e.to_string()));
        if let Some((step, e, g)) = first_diff(&expected, &got) {
            divergence =
                Some(Divergence { case_id: id, input: label.clone(), step, expected: e, got: g });
            break;
        }
    }
    Report { cases: cases.len(), divergence }
}

/// Cases are `(label, stacks, step budget)`.
pub fn verify_ss(
    m: &StackMachine,
    net: &Network,
    cases: &[(String, Vec<Vec<u8>>, usize)],
) -> Report {
    let mut divergence = None;
    for (id, (label, stacks, t)) in cases.iter().enumerate() {
        let expected =
            trace::stack_outcome(m, &m.run(stacks.clone(), *t).map_err(|e| e.to_string()));
        let got = trace::stack_outcome(
            m,
            &ss::simulate(m, net, stacks.clone(), *t).map_err(|e| e.to_string()),
        );
        if let Some((step, e, g)) = first_diff(&expected, &got) {
            divergence =
                Some(Divergence { case_id: id, input: label.clone(), step, expected: e, got: g });
            break;
        }
    }
    Report { cases: cases.len(), divergence }
}
