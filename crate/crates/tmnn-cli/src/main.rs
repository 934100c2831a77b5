//! `tmnn` — compile Turing and stack machines into neural networks that
//! simulate them step for step, then run, verify, and probe the results.
//!
//! Subcommands: `compile` writes a weight document and prints the layer
//! census; `run` simulates the network on one input; `oracle` runs the
//! reference interpreter with identical output; `verify` diffs the two over
//! a corpus; `precision` tabulates stack-decode error per pop depth.
//! Results go to standard output, diagnostics to standard error, and the
//! exit status is zero exactly when there was no error or divergence.

mod machine_file;
mod trace;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmnn::machine::StackMachine;
use tmnn::network::{doc, Network};
use tmnn::ss::{self, CantorCodec, StackCensus};
use tmnn::wcm;

use machine_file::{load_stack, load_turing};

#[derive(Parser)]
#[command(
    name = "tmnn",
    version,
    about = "Compile Turing and stack machines into neural networks that simulate them"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arch {
    #[value(name = "wcm21")]
    Wcm21,
    #[value(name = "ss95-4")]
    Ss954,
    #[value(name = "ss95-1")]
    Ss951,
}

impl Arch {
    fn name(self) -> &'static str {
        match self {
            Arch::Wcm21 => wcm::ARCH,
            Arch::Ss954 => ss::four::ARCH,
            Arch::Ss951 => ss::one::ARCH,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a machine description into a weight document.
    Compile {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long, value_enum)]
        arch: Arch,
        /// Step budget baked into wcm21 networks (default 100).
        #[arg(long = "T")]
        t: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the network on one input and print the final state.
    Run {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long, value_enum)]
        arch: Arch,
        #[arg(long)]
        input: String,
        /// Step budget (default: 100 for wcm21, 4x input length for ss95).
        #[arg(long = "T")]
        t: Option<usize>,
        /// Print every configuration, one line per step.
        #[arg(long)]
        trace: bool,
        /// Load a weight document instead of compiling.
        #[arg(long)]
        net: Option<PathBuf>,
    },
    /// Run the reference interpreter with the same output format as `run`.
    Oracle {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long, value_enum)]
        arch: Arch,
        #[arg(long)]
        input: String,
        #[arg(long = "T")]
        t: Option<usize>,
        #[arg(long)]
        trace: bool,
    },
    /// Compare the network against the interpreter over a corpus.
    Verify {
        #[arg(long)]
        machine: PathBuf,
        #[arg(long, value_enum)]
        arch: Arch,
        /// File with one input string per line.
        #[arg(long, conflicts_with_all = ["random", "seed", "max_len"])]
        inputs: Option<PathBuf>,
        /// Generate this many seeded random inputs instead.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        #[arg(long = "T")]
        t: Option<usize>,
        /// Verify an existing weight document instead of compiling.
        #[arg(long)]
        net: Option<PathBuf>,
    },
    /// Pop seeded random stacks and tabulate decode error per pop depth.
    Precision {
        /// Encoding base (at least 4).
        #[arg(long)]
        b: u32,
        /// Stack depth; every stack is popped to the bottom.
        #[arg(long)]
        pops: usize,
        #[arg(long, default_value_t = 1000)]
        stacks: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    // Die quietly when the reader goes away (`tmnn precision | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Compile { machine, arch, t, out } => cmd_compile(&machine, arch, t, &out),
        Cmd::Run { machine, arch, input, t, trace, net } => {
            cmd_run(&machine, arch, &input, t, trace, net.as_deref())
        }
        Cmd::Oracle { machine, arch, input, t, trace } => {
            cmd_oracle(&machine, arch, &input, t, trace)
        }
        Cmd::Verify { machine, arch, inputs, random, seed, max_len, t, net } => {
            cmd_verify(&machine, arch, inputs.as_deref(), random, seed, max_len, t, net.as_deref())
        }
        Cmd::Precision { b, pops, stacks, seed } => cmd_precision(b, pops, stacks, seed),
    }
}

fn compile_ss(m: &StackMachine, arch: Arch) -> Result<(Network, StackCensus)> {
    match arch {
        Arch::Ss954 => Ok(ss::four::compile(m)?),
        Arch::Ss951 => Ok(ss::one::compile(m)),
        Arch::Wcm21 => unreachable!("wcm21 is not a stack architecture"),
    }
}

fn ss_census_lines(arch: Arch, census: &StackCensus) -> Vec<String> {
    let widths: Vec<String> = census.layer_widths.iter().map(ToString::to_string).collect();
    vec![
        format!("arch {}", arch.name()),
        format!("state-width {}", census.state_width),
        format!("layers-per-step {}", census.layers_per_step),
        format!("layer-widths {}", widths.join(" ")),
        format!("detectors {}", census.detectors),
        format!("base {}", census.base),
        format!("routing-residual {:.3e}", census.routing_residual),
    ]
}

fn wcm_census_lines(census: &wcm::Census) -> Vec<String> {
    vec![
        format!("arch {}", wcm::ARCH),
        format!("width {}", census.width),
        format!("position-bits {}", census.position_bits),
        format!("transition-detectors {}", census.transition_detectors),
        format!("full-adders {}", census.full_adders),
        format!("self-attention-layers {}", census.self_attention),
        format!("cross-attention-layers {}", census.cross_attention),
        format!("assembly-feedforwards {}", census.assembly_feedforwards),
        format!("layers-per-step {}", census.layers),
    ]
}

fn cmd_compile(machine: &Path, arch: Arch, t: Option<usize>, out: &Path) -> Result<ExitCode> {
    let (net, lines) = match arch {
        Arch::Wcm21 => {
            let m = load_turing(machine)?;
            let (net, census) = wcm::compile(&m, t.unwrap_or(100))?;
            (net, wcm_census_lines(&census))
        }
        _ => {
            let m = load_stack(machine)?;
            let (net, census) = compile_ss(&m, arch)?;
            (net, ss_census_lines(arch, &census))
        }
    };
    fs::write(out, doc::write_network(&net))
        .with_context(|| format!("writing {}", out.display()))?;
    for line in lines {
        println!("{line}");
    }
    eprintln!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

/// Load a weight document and check it belongs to this machine and arch.
fn load_net(path: &Path, arch: Arch, digest: &str) -> Result<Network> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let net = doc::parse_network(&text).with_context(|| format!("parsing {}", path.display()))?;
    if net.arch != arch.name() {
        bail!(
            "weight document {} was compiled for architecture {}, not {}",
            path.display(),
            net.arch,
            arch.name()
        );
    }
    if net.machine_digest != digest {
        bail!("weight document {} was compiled for a different machine", path.display());
    }
    Ok(net)
}

fn cmd_run(
    machine: &Path,
    arch: Arch,
    input: &str,
    t: Option<usize>,
    want_trace: bool,
    net_path: Option<&Path>,
) -> Result<ExitCode> {
    match arch {
        Arch::Wcm21 => {
            let m = load_turing(machine)?;
            let net = match net_path {
                Some(p) => {
                    let net = load_net(p, arch, &m.digest())?;
                    let baked = net.meta_usize("t_max").unwrap_or(0);
                    if t.is_some_and(|t| t != baked) {
                        bail!("--T conflicts with the loaded document's step budget ({baked})");
                    }
                    net
                }
                None => wcm::compile(&m, t.unwrap_or(100))?.0,
            };
            let tape = m.parse_tape(input)?;
            let steps = wcm::simulate(&m, &net, tape)?;
            if want_trace {
                for (i, c) in steps.iter().enumerate() {
                    println!("{}", trace::tape_line(&m, i, c));
                }
            }
            println!("{}", m.state_name(steps.last().expect("trace is never empty").state));
        }
        _ => {
            let m = load_stack(machine)?;
            let net = match net_path {
                Some(p) => load_net(p, arch, &m.digest())?,
                None => compile_ss(&m, arch)?.0,
            };
            let stacks = m.encode_input(input)?;
            let budget = t.unwrap_or(4 * input.chars().count());
            let steps = ss::simulate(&m, &net, stacks, budget)?;
            if want_trace {
                for (i, c) in steps.iter().enumerate() {
                    println!("{}", trace::stack_line(&m, i, c));
                }
            }
            println!("{}", m.state_name(steps.last().expect("trace is never empty").state));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(
    machine: &Path,
    arch: Arch,
    input: &str,
    t: Option<usize>,
    want_trace: bool,
) -> Result<ExitCode> {
    match arch {
        Arch::Wcm21 => {
            let m = load_turing(machine)?;
            let tape = m.parse_tape(input)?;
            let steps = m.run(tape, t.unwrap_or(100))?;
            if want_trace {
                for (i, c) in steps.iter().enumerate() {
                    println!("{}", trace::tape_line(&m, i, c));
                }
            }
            println!("{}", m.state_name(steps.last().expect("trace is never empty").state));
        }
        _ => {
            let m = load_stack(machine)?;
            let stacks = m.encode_input(input)?;
            let steps = m.run(stacks, t.unwrap_or(4 * input.chars().count()))?;
            if want_trace {
                for (i, c) in steps.iter().enumerate() {
                    println!("{}", trace::stack_line(&m, i, c));
                }
            }
            println!("{}", m.state_name(steps.last().expect("trace is never empty").state));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_input_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.split_terminator('\n').map(|l| l.trim_end_matches('\r').to_string()).collect())
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    machine: &Path,
    arch: Arch,
    inputs: Option<&Path>,
    random: Option<usize>,
    seed: u64,
    max_len: usize,
    t: Option<usize>,
    net_path: Option<&Path>,
) -> Result<ExitCode> {
    let report = match arch {
        Arch::Wcm21 => {
            let m = load_turing(machine)?;
            let net = match net_path {
                Some(p) => load_net(p, arch, &m.digest())?,
                None => wcm::compile(&m, t.unwrap_or(100))?.0,
            };
            let cases: Vec<(String, Vec<usize>)> = match (inputs, random) {
                (Some(file), _) => {
                    let mut cases = Vec::new();
                    for line in read_input_lines(file)? {
                        let tape = m
                            .parse_tape(&line)
                            .with_context(|| format!("corpus input {line:?}"))?;
                        cases.push((line, tape));
                    }
                    cases
                }
                (None, Some(n)) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    (0..n)
                        .map(|_| {
                            let len = rng.gen_range(1..=max_len.max(1));
                            let tape: Vec<usize> =
                                (0..len).map(|_| rng.gen_range(0..m.num_symbols())).collect();
                            let label: String =
                                tape.iter().map(|&s| m.symbol_name(s)).collect();
                            (label, tape)
                        })
                        .collect()
                }
                (None, None) => bail!("verify needs --inputs FILE or --random N"),
            };
            verify::verify_wcm(&m, &net, &cases)
        }
        _ => {
            let m = load_stack(machine)?;
            let net = match net_path {
                Some(p) => load_net(p, arch, &m.digest())?,
                None => compile_ss(&m, arch)?.0,
            };
            let cases: Vec<(String, Vec<Vec<u8>>, usize)> = match (inputs, random) {
                (Some(file), _) => {
                    let mut cases = Vec::new();
                    for line in read_input_lines(file)? {
                        let stacks = m
                            .encode_input(&line)
                            .with_context(|| format!("corpus input {line:?}"))?;
                        let budget = t.unwrap_or(4 * line.chars().count());
                        cases.push((line, stacks, budget));
                    }
                    cases
                }
                (None, Some(n)) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    (0..n)
                        .map(|_| {
                            let len = rng.gen_range(0..=max_len);
                            let first: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2)).collect();
                            let label: String = if first.is_empty() {
                                "_".to_string()
                            } else {
                                first.iter().map(|&b| char::from(b'0' + b)).collect()
                            };
                            let mut stacks = vec![first];
                            stacks.resize(m.num_stacks(), Vec::new());
                            (label, stacks, t.unwrap_or(4 * len))
                        })
                        .collect()
                }
                (None, None) => bail!("verify needs --inputs FILE or --random N"),
            };
            verify::verify_ss(&m, &net, &cases)
        }
    };
    report.print();
    Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_precision(b: u32, pops: usize, stacks: usize, seed: u64) -> Result<ExitCode> {
    if b < 4 {
        bail!("base must be at least 4, got {b}");
    }
    if pops == 0 {
        bail!("--pops must be positive");
    }
    let codec = CantorCodec::new(b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<Vec<u8>> =
        (0..stacks).map(|_| (0..pops).map(|_| rng.gen_range(0..2)).collect()).collect();
    let report = ss::precision_probe(&codec, &corpus);
    println!("base {b}");
    println!("stacks {stacks}");
    println!("threshold-margin {}", report.threshold_margin);
    println!("pops\tflips\tmax-error");
    for k in 0..pops {
        println!("{}\t{}\t{:.3e}", k + 1, report.per_pop_flips[k], report.per_pop_error[k]);
    }
    println!("final-read-flips {}", report.per_pop_flips[pops]);
    match report.first_flip {
        Some(k) => println!("first-flip {}", k + 1),
        None => println!("first-flip none"),
    }
    Ok(ExitCode::SUCCESS)
}
