//! Acceptance gate: ten criteria, one test each, covering the worked
//! balanced-parentheses examples, the layer censuses, the circuit truth
//! tables, oracle equivalence for all three architectures, the codec
//! algebra and precision claims, the routing residual, and document
//! round-trips. Each test prints a PASS line on success; the harness
//! reports FAIL with the assertion output otherwise.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmnn::machine::turing::{RawTransition, RawTuringMachine};
use tmnn::machine::{StackMachine, TuringMachine};
use tmnn::network::doc;
use tmnn::{circuits, ss, wcm};

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn tmnn_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmnn"))
        .args(args)
        .current_dir(repo_path(""))
        .output()
        .expect("running the tmnn binary")
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn load_bp_turing() -> TuringMachine {
    let text = std::fs::read_to_string(repo_path("machines/bp.toml")).unwrap();
    let raw: RawTuringMachine = toml::from_str::<toml::Value>(&text)
        .unwrap()
        .try_into()
        .expect("bp.toml parses as a Turing machine");
    raw.validate().expect("bp.toml validates")
}

fn load_bp_stack() -> StackMachine {
    // The stack file spells rules with per-stack keys (top0/op0/...), so
    // walk the TOML value directly instead of deriving a mirror struct.
    let text = std::fs::read_to_string(repo_path("machines/bp_stack.toml")).unwrap();
    let value: toml::Value = toml::from_str(&text).unwrap();
    let table = value.as_table().unwrap();
    let stacks = table["stacks"].as_integer().unwrap() as usize;
    let rules = table["rules"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            let s = |k: &str| r[k].as_str().unwrap().to_string();
            tmnn::machine::RawStackRule {
                state: s("state"),
                tops: (0..stacks).map(|i| s(&format!("top{i}"))).collect(),
                next: s("next"),
                ops: (0..stacks).map(|i| s(&format!("op{i}"))).collect(),
            }
        })
        .collect();
    let raw = tmnn::machine::RawStackMachine {
        states: table["states"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect(),
        initial: table["initial"].as_str().unwrap().to_string(),
        terminals: table["terminals"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect(),
        reject: table.get("reject").map(|v| v.as_str().unwrap().to_string()),
        stacks,
        input_encoding: table["input_encoding"]
            .as_table()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.as_integer().unwrap()))
            .collect(),
        rules,
    };
    raw.validate().expect("bp_stack.toml validates")
}

/// All parenthesis strings of length <= max, shortest first.
fn paren_strings(max: usize) -> Vec<String> {
    let mut out = Vec::new();
    for len in 0..=max {
        for bits in 0..1usize << len {
            out.push((0..len).map(|i| if bits >> i & 1 == 1 { '(' } else { ')' }).collect());
        }
    }
    out
}

#[test]
fn criterion_01_fig1_trace_reproduction() {
    let started = Instant::now();
    let out = tmnn_cmd(&[
        "run",
        "--machine",
        "machines/bp.toml",
        "--arch",
        "wcm21",
        "--input",
        "B()E",
        "--trace",
    ]);
    let expected = "0\tI\t[B]()E\n\
                    1\tR\tB[(])E\n\
                    2\tR\tB([)]E\n\
                    3\tM\tB[(]*E\n\
                    4\tR\tB*[*]E\n\
                    5\tR\tB**[E]\n\
                    6\tV\tB*[*]E\n\
                    7\tV\tB[*]*E\n\
                    8\tV\t[B]**E\n\
                    9\tT\tB[*]*E\n\
                    T\n";
    assert_eq!(stdout_of(&out), expected);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, limit 1 s");
    println!("PASS criterion 1: worked 10-step trace reproduced exactly ({elapsed:?})");
}

#[test]
fn criterion_02_long_balanced_input_accepts() {
    let started = Instant::now();
    let out = tmnn_cmd(&[
        "run",
        "--machine",
        "machines/bp.toml",
        "--arch",
        "wcm21",
        "--input",
        "B()((()(()))())E",
        "--T",
        "100",
    ]);
    assert_eq!(stdout_of(&out), "T\n");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, limit 5 s");
    println!("PASS criterion 2: 16-cell balanced input accepted with T=100 ({elapsed:?})");
}

#[test]
fn criterion_03_layer_census() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("bp.net");
    let out = tmnn_cmd(&[
        "compile",
        "--machine",
        "machines/bp.toml",
        "--arch",
        "wcm21",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let stdout = stdout_of(&out);
    for expected in [
        "width 59",
        "full-adders 7",
        "self-attention-layers 9",
        "cross-attention-layers 1",
        "assembly-feedforwards 3",
    ] {
        assert!(stdout.lines().any(|l| l == expected), "census missing {expected:?}:\n{stdout}");
    }
    println!("PASS criterion 3: census reports w=59, 7 adders, 9+1 attention, 3 feedforwards");
}

fn apply_layers(layers: &[tmnn::network::LinearLayer], mut x: Vec<f64>) -> Vec<f64> {
    for layer in layers {
        x = layer.apply(&x).expect("gate layer applies");
    }
    x
}

#[test]
fn criterion_04_gate_and_adder_truth_tables() {
    let started = Instant::now();
    // Unary and binary gates, exhaustive.
    for a in 0..2usize {
        let x = vec![a as f64];
        assert_eq!(apply_layers(&circuits::not_gate(1, 0), x)[0], (1 - a) as f64);
    }
    for a in 0..2usize {
        for b in 0..2usize {
            let x = vec![a as f64, b as f64, 0.0];
            let and = apply_layers(&circuits::and_gate(3, &[0, 1], 2), x.clone())[2];
            assert_eq!(and, (a & b) as f64, "AND({a},{b})");
            let nor = apply_layers(&circuits::nor_gate(3, &[0, 1], 2), x.clone())[2];
            assert_eq!(nor, ((a | b) ^ 1) as f64, "NOR({a},{b})");
            let or = apply_layers(&circuits::or_gate(3, &[0, 1], 2), x.clone())[2];
            assert_eq!(or, (a | b) as f64, "OR({a},{b})");
            let nand = apply_layers(&circuits::nand_gate(3, &[0, 1], 2), x.clone())[2];
            assert_eq!(nand, ((a & b) ^ 1) as f64, "NAND({a},{b})");
            // XOR is the sum output of the half adder.
            let ha = apply_layers(&circuits::half_adder(2, 0, 1), vec![a as f64, b as f64]);
            assert_eq!(ha[0], (a ^ b) as f64, "XOR({a},{b})");
            assert_eq!(ha[1], (a & b) as f64, "half-adder carry({a},{b})");
        }
    }
    // Full adder, all eight cases.
    for a in 0..2usize {
        for b in 0..2usize {
            for c in 0..2usize {
                let got = apply_layers(
                    &circuits::full_adder(3, 0, 1, 2),
                    vec![a as f64, b as f64, c as f64],
                );
                assert_eq!(got[0], ((a + b + c) % 2) as f64, "sum({a},{b},{c})");
                assert_eq!(got[2], ((a + b + c) / 2) as f64, "carry({a},{b},{c})");
            }
        }
    }
    // Ripple adder vs integer addition mod 2^k, exhaustive for k <= 8.
    for k in 1..=8usize {
        let x_dims: Vec<usize> = (0..k).collect();
        let y_dims: Vec<usize> = (k..2 * k).collect();
        let layers = circuits::ripple_adder(2 * k + 1, &x_dims, &y_dims, 2 * k);
        for x in 0..1usize << k {
            for y in 0..1usize << k {
                let mut v = vec![0.0; 2 * k + 1];
                for i in 0..k {
                    v[i] = (x >> i & 1) as f64;
                    v[k + i] = (y >> i & 1) as f64;
                }
                let got = apply_layers(&layers, v);
                let want = (x + y) % (1 << k);
                for i in 0..k {
                    assert_eq!(got[i], (want >> i & 1) as f64, "bit {i} of {x}+{y} mod 2^{k}");
                }
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, limit 10 s");
    println!("PASS criterion 4: gate, adder, and ripple-carry truth tables exact ({elapsed:?})");
}

/// A random Turing machine with complete transitions on non-terminals.
fn random_complete_tm(rng: &mut ChaCha8Rng) -> TuringMachine {
    let nq = rng.gen_range(2..=4usize);
    let ns = rng.gen_range(2..=3usize);
    let states: Vec<String> = (0..nq).map(|i| format!("q{i}")).collect();
    let symbols: Vec<String> = (0..ns).map(|i| format!("s{i}")).collect();
    let terminal = rng.gen_range(0..nq);
    let mut transitions = Vec::new();
    for q in 0..nq {
        if q == terminal {
            continue;
        }
        for s in 0..ns {
            transitions.push(RawTransition {
                state: states[q].clone(),
                read: symbols[s].clone(),
                next: states[rng.gen_range(0..nq)].clone(),
                write: symbols[rng.gen_range(0..ns)].clone(),
                mv: if rng.gen_bool(0.5) { 1 } else { -1 },
            });
        }
    }
    let raw = RawTuringMachine {
        states,
        alphabet: symbols,
        empty: None,
        initial: format!("q{}", rng.gen_range(0..nq)),
        terminals: vec![format!("q{terminal}")],
        transitions,
    };
    raw.validate().expect("random machine validates")
}

#[test]
fn criterion_05_wcm_oracle_equivalence() {
    let started = Instant::now();

    // Exhaustive sentinel-wrapped parenthesis strings of length <= 8,
    // through the CLI verify harness.
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("parens.txt");
    let mut corpus = std::fs::File::create(&corpus_path).unwrap();
    let mut cases = 0usize;
    for s in paren_strings(8) {
        writeln!(corpus, "B{s}E").unwrap();
        cases += 1;
    }
    drop(corpus);
    let out = tmnn_cmd(&[
        "verify",
        "--machine",
        "machines/bp.toml",
        "--arch",
        "wcm21",
        "--inputs",
        corpus_path.to_str().unwrap(),
    ]);
    let stdout = stdout_of(&out);
    assert!(stdout.contains(&format!("cases {cases}")), "unexpected report:\n{stdout}");
    assert!(stdout.contains("divergence none"), "unexpected report:\n{stdout}");

    // Fifty seeded random machines, twenty seeded inputs each, in process.
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    for _ in 0..50 {
        let m = random_complete_tm(&mut rng);
        let (net, _) = wcm::compile(&m, 40).expect("compiles");
        for _ in 0..20 {
            let len = rng.gen_range(1..=6usize);
            let tape: Vec<usize> = (0..len).map(|_| rng.gen_range(0..m.num_symbols())).collect();
            let expected = m.run(tape.clone(), 40);
            let got = wcm::simulate(&m, &net, tape.clone());
            match (&expected, &got) {
                (Ok(a), Ok(b)) => assert_eq!(a, b, "trace mismatch on {tape:?}"),
                (Err(e), Err(wcm::SimError::Machine(f))) => {
                    assert_eq!(e, f, "error mismatch on {tape:?}")
                }
                other => panic!("outcome mismatch on {tape:?}: {other:?}"),
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}, limit 2 min");
    println!(
        "PASS criterion 5: {cases} parenthesis cases and 50x20 random machines match the \
         interpreter ({elapsed:?})"
    );
}

#[test]
fn criterion_06_cantor_codec_round_trip_and_algebra() {
    let codec = ss::CantorCodec::new(4);
    // Exhaustive round-trip for every stack of length <= 10.
    for len in 0..=10usize {
        for bits in 0..1usize << len {
            let stack: Vec<u8> = (0..len).map(|i| (bits >> i & 1) as u8).collect();
            let v = codec.encode(&stack);
            assert_eq!(codec.decode(v, len), Some(stack.clone()), "round trip {stack:?}");
        }
    }
    // Push/pop/top algebra on random stacks: exact, every value is dyadic.
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    for _ in 0..1000 {
        let len = rng.gen_range(0..=10usize);
        let stack: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2)).collect();
        let v = codec.encode(&stack);
        for a in 0..2u8 {
            let mut pushed = stack.clone();
            pushed.insert(0, a);
            assert_eq!(codec.push(v, a), codec.encode(&pushed), "push {a} onto {stack:?}");
        }
        assert_eq!(codec.read_top(v), stack.first().copied(), "top of {stack:?}");
        if let Some(&top) = stack.first() {
            assert_eq!(codec.pop(v, top), codec.encode(&stack[1..]), "pop of {stack:?}");
        }
    }
    println!("PASS criterion 6: base-4 codec round-trips length <= 10 and matches the algebra");
}

#[test]
fn criterion_07_ss95_4_oracle_equivalence() {
    let started = Instant::now();
    let m = load_bp_stack();
    let (net, _) = ss::four::compile(&m).expect("compiles");
    let mut cases = 0usize;
    for s in paren_strings(10) {
        let stacks = m.encode_input(&s).expect("parens encode");
        let budget = 4 * s.len();
        let expected = m.run(stacks.clone(), budget);
        let got = ss::simulate(&m, &net, stacks, budget);
        match (&expected, &got) {
            (Ok(a), Ok(b)) => assert_eq!(a, b, "trace mismatch on {s:?}"),
            (Err(e), Err(ss::SimError::Machine(f))) => assert_eq!(e, f, "error mismatch on {s:?}"),
            other => panic!("outcome mismatch on {s:?}: {other:?}"),
        }
        cases += 1;
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, limit 30 s");
    println!("PASS criterion 7: 4-layer simulator matches the interpreter on {cases} inputs ({elapsed:?})");
}

#[test]
fn criterion_08_precision_claim() {
    let started = Instant::now();

    // Probe: zero flips through nine consecutive pops at b=40.
    let out = tmnn_cmd(&["precision", "--b", "40", "--pops", "15", "--stacks", "1000"]);
    let stdout = stdout_of(&out);
    for k in 1..=9usize {
        let row = stdout
            .lines()
            .find(|l| l.starts_with(&format!("{k}\t")))
            .unwrap_or_else(|| panic!("no table row for pop {k}:\n{stdout}"));
        let flips: usize = row.split('\t').nth(1).unwrap().parse().unwrap();
        assert_eq!(flips, 0, "flips at pop {k}:\n{stdout}");
    }
    let first_flip = stdout.lines().find(|l| l.starts_with("first-flip")).unwrap();
    let beyond_nine = match first_flip.trim_end() {
        "first-flip none" => true,
        other => other["first-flip ".len()..].parse::<usize>().unwrap() > 9,
    };
    assert!(beyond_nine, "{first_flip}");

    // The one-layer simulator agrees with the interpreter on every
    // parenthesis input of length <= 8.
    let m = load_bp_stack();
    let (net, _) = ss::one::compile(&m);
    let mut cases = 0usize;
    for s in paren_strings(8) {
        let stacks = m.encode_input(&s).expect("parens encode");
        let budget = 4 * s.len();
        let expected = m.run(stacks.clone(), budget);
        let got = ss::simulate(&m, &net, stacks, budget);
        match (&expected, &got) {
            (Ok(a), Ok(b)) => assert_eq!(a, b, "trace mismatch on {s:?}"),
            (Err(e), Err(ss::SimError::Machine(f))) => assert_eq!(e, f, "error mismatch on {s:?}"),
            other => panic!("outcome mismatch on {s:?}: {other:?}"),
        }
        cases += 1;
    }

    let elapsed = started.elapsed();
    println!(
        "PASS criterion 8: no flips through 9 pops at b=40; 1-layer simulator matches on \
         {cases} inputs ({elapsed:?})"
    );
}

#[test]
fn criterion_09_routing_residual_and_rule_table() {
    let m = load_bp_stack();
    let routing = ss::four::solve_routing(&m).expect("routing solves");
    assert!(routing.residual < 1e-9, "residual {}", routing.residual);

    // The detector response to each of the 54 combinations is an exact
    // one-hot, so the solved coefficients must reproduce the rule table.
    let detectors = ss::four::detector_matrix(&m).expect("detector matrix");
    let combos = m.num_combos();
    assert_eq!(detectors.rows(), combos);
    for i in 0..combos {
        for j in 0..combos {
            let want = if i == j { 1.0 } else { 0.0 };
            assert_eq!(detectors.get(i, j), want, "detector response ({i},{j})");
        }
    }
    let nq = m.num_states();
    let p = m.num_stacks();
    for combo in 0..combos {
        let (state, classes) = m.combo(combo);
        let mut want = vec![0.0; nq + 4 * p];
        if let Some((next, ops)) = m.effective_rule(state, &classes) {
            want[next] = 1.0;
            for (i, op) in ops.iter().enumerate() {
                want[nq + 4 * i + op.index()] = 1.0;
            }
        }
        for col in 0..nq + 4 * p {
            let got = routing.coeffs.get(combo, col);
            assert!(
                (got - want[col]).abs() < 1e-9,
                "routing row {combo} col {col}: got {got}, want {}",
                want[col]
            );
        }
    }
    assert_eq!(combos, 54);
    println!("PASS criterion 9: residual {:.2e} < 1e-9; 54 one-hots route per the rule table", routing.residual);
}

#[test]
fn criterion_10_document_round_trip() {
    let tm = load_bp_turing();
    let (wcm_net, _) = wcm::compile(&tm, 100).expect("wcm compiles");
    let sm = load_bp_stack();
    let (four_net, _) = ss::four::compile(&sm).expect("ss95-4 compiles");
    let (one_net, _) = ss::one::compile(&sm);
    for (name, net) in [("wcm21", &wcm_net), ("ss95-4", &four_net), ("ss95-1", &one_net)] {
        let text = doc::write_network(net);
        let parsed = doc::parse_network(&text).expect("document parses");
        let text2 = doc::write_network(&parsed);
        assert_eq!(text, text2, "round trip changed the {name} document");
    }
    println!("PASS criterion 10: weight documents round-trip bitwise on both architectures");
}
