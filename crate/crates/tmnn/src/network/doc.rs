//! Plain-text weight documents.
//!
//! The format is line oriented and versioned. Floats are printed with 17
//! significant digits (`{:.16e}`), which round-trips every finite `f64`
//! bit for bit; the round-trip test below checks exactly that. Keeping the
//! format hand-rolled makes the files diffable and keeps the loader free of
//! schema magic: every parse failure reports its line number.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::linalg::{Activation, Matrix};
use crate::network::{AttentionLayer, Layer, LinearLayer, Network};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "tmnn-weights";

#[derive(Debug, Error)]
pub enum DocError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported weight-document version {0}")]
    Version(u32),
    #[error("document ended unexpectedly")]
    Eof,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_row(row: &[f64]) -> String {
    row.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" ")
}

/// Serialize a network. Layer and meta names must not contain whitespace;
/// the compilers only produce such names.
pub fn write_network(net: &Network) -> String {
    let mut out = String::new();
    out.push_str(&format!("{MAGIC} {FORMAT_VERSION}\n"));
    out.push_str(&format!("arch {}\n", net.arch));
    out.push_str(&format!("machine {}\n", net.machine_digest));
    out.push_str(&format!("width {}\n", net.width));
    out.push_str(&format!("enc_width {}\n", net.enc_width));
    for (k, v) in &net.meta {
        assert!(!k.chars().any(char::is_whitespace), "meta key with whitespace: {k}");
        assert!(!v.chars().any(char::is_whitespace), "meta value with whitespace: {v}");
        out.push_str(&format!("meta {k} {v}\n"));
    }
    out.push_str(&format!("layers {}\n", net.layers.len()));
    for layer in &net.layers {
        assert!(
            !layer.name().chars().any(char::is_whitespace),
            "layer name with whitespace: {}",
            layer.name()
        );
        match layer {
            Layer::Linear(l) => {
                let act = match l.activation {
                    Activation::Identity => "identity",
                    Activation::Relu => "relu",
                    Activation::Satlin => "satlin",
                    Activation::SoftmaxRow { .. } => {
                        panic!("softmax is not a linear-layer activation")
                    }
                };
                out.push_str(&format!(
                    "linear {} {} {} {}\n",
                    l.name,
                    l.w.rows(),
                    l.w.cols(),
                    act
                ));
                for i in 0..l.w.rows() {
                    out.push_str(&fmt_row(l.w.row(i)));
                    out.push('\n');
                }
                out.push_str(&fmt_row(&l.b));
                out.push('\n');
            }
            Layer::Attention(a) => {
                out.push_str(&format!(
                    "attention {} {} {} {} {} {}\n",
                    a.name,
                    a.score_dim(),
                    a.value_dim(),
                    a.wq.cols(),
                    if a.cross { 1 } else { 0 },
                    fmt_f64(a.kappa),
                ));
                for m in [&a.wq, &a.wk, &a.wv, &a.merge] {
                    for i in 0..m.rows() {
                        out.push_str(&fmt_row(m.row(i)));
                        out.push('\n');
                    }
                }
                out.push_str(&fmt_row(&a.null_key));
                out.push('\n');
                out.push_str(&fmt_row(&a.null_value));
                out.push('\n');
            }
        }
    }
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), DocError> {
        // 1-based line numbers for error messages.
        self.iter.next().map(|(i, l)| (i + 1, l)).ok_or(DocError::Eof)
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> DocError {
    DocError::Parse { line, msg: msg.into() }
}

fn parse_fields<'a>(line: usize, text: &'a str, expect: usize, what: &str) -> Result<Vec<&'a str>, DocError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != expect {
        return Err(parse_err(
            line,
            format!("{what}: expected {expect} fields, got {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn parse_usize(line: usize, s: &str, what: &str) -> Result<usize, DocError> {
    s.parse().map_err(|_| parse_err(line, format!("{what}: bad integer `{s}`")))
}

fn parse_f64(line: usize, s: &str) -> Result<f64, DocError> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(line, format!("bad float `{s}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite float `{s}`")));
    }
    Ok(v)
}

fn parse_float_row(line: usize, text: &str, expect: usize) -> Result<Vec<f64>, DocError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != expect {
        return Err(parse_err(
            line,
            format!("expected {expect} floats, got {}", fields.len()),
        ));
    }
    fields.iter().map(|s| parse_f64(line, s)).collect()
}

fn parse_matrix(lines: &mut Lines, rows: usize, cols: usize) -> Result<Matrix, DocError> {
    let mut m = Matrix::zeros(0, cols);
    for _ in 0..rows {
        let (n, text) = lines.next()?;
        let row = parse_float_row(n, text, cols)?;
        m.push_row(&row).map_err(|e| parse_err(n, e.to_string()))?;
    }
    Ok(m)
}

pub fn parse_network(text: &str) -> Result<Network, DocError> {
    let mut lines = Lines { iter: text.lines().enumerate() };

    let (n, header) = lines.next()?;
    let fields = parse_fields(n, header, 2, "header")?;
    if fields[0] != MAGIC {
        return Err(parse_err(n, format!("not a weight document (magic `{}`)", fields[0])));
    }
    let version: u32 = fields[1]
        .parse()
        .map_err(|_| parse_err(n, format!("bad version `{}`", fields[1])))?;
    if version != FORMAT_VERSION {
        return Err(DocError::Version(version));
    }

    let (n, line) = lines.next()?;
    let fields = parse_fields(n, line, 2, "arch")?;
    if fields[0] != "arch" {
        return Err(parse_err(n, "expected `arch`"));
    }
    let arch = fields[1].to_string();

    let (n, line) = lines.next()?;
    let fields = parse_fields(n, line, 2, "machine")?;
    if fields[0] != "machine" {
        return Err(parse_err(n, "expected `machine`"));
    }
    let machine_digest = fields[1].to_string();

    let (n, line) = lines.next()?;
    let fields = parse_fields(n, line, 2, "width")?;
    if fields[0] != "width" {
        return Err(parse_err(n, "expected `width`"));
    }
    let width = parse_usize(n, fields[1], "width")?;

    let (n, line) = lines.next()?;
    let fields = parse_fields(n, line, 2, "enc_width")?;
    if fields[0] != "enc_width" {
        return Err(parse_err(n, "expected `enc_width`"));
    }
    let enc_width = parse_usize(n, fields[1], "enc_width")?;

    let mut meta = BTreeMap::new();
    let layer_count;
    loop {
        let (n, line) = lines.next()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["meta", k, v] => {
                meta.insert(k.to_string(), v.to_string());
            }
            ["layers", c] => {
                layer_count = parse_usize(n, c, "layers")?;
                break;
            }
            _ => return Err(parse_err(n, "expected `meta <k> <v>` or `layers <n>`")),
        }
    }

    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let (n, line) = lines.next()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            Some("linear") => {
                if fields.len() != 5 {
                    return Err(parse_err(n, "linear header needs `linear <name> <out> <in> <act>`"));
                }
                let name = fields[1].to_string();
                let rows = parse_usize(n, fields[2], "rows")?;
                let cols = parse_usize(n, fields[3], "cols")?;
                let activation = match fields[4] {
                    "identity" => Activation::Identity,
                    "relu" => Activation::Relu,
                    "satlin" => Activation::Satlin,
                    other => return Err(parse_err(n, format!("unknown activation `{other}`"))),
                };
                let w = parse_matrix(&mut lines, rows, cols)?;
                let (bn, btext) = lines.next()?;
                let b = parse_float_row(bn, btext, rows)?;
                layers.push(Layer::Linear(LinearLayer { name, w, b, activation }));
            }
            Some("attention") => {
                if fields.len() != 7 {
                    return Err(parse_err(
                        n,
                        "attention header needs `attention <name> <score> <value> <in> <cross> <kappa>`",
                    ));
                }
                let name = fields[1].to_string();
                let score = parse_usize(n, fields[2], "score dim")?;
                let value = parse_usize(n, fields[3], "value dim")?;
                let in_width = parse_usize(n, fields[4], "input width")?;
                let cross = match fields[5] {
                    "0" => false,
                    "1" => true,
                    other => return Err(parse_err(n, format!("bad cross flag `{other}`"))),
                };
                let kappa = parse_f64(n, fields[6])?;
                let wq = parse_matrix(&mut lines, score, in_width)?;
                // Key/value projections read attended rows; their width is
                // recorded by their own columns on disk. They share the
                // query's column count only for self-attention, so infer from
                // the document: keys match the encoder when cross.
                let key_width = if cross { enc_width } else { width };
                let wk = parse_matrix(&mut lines, score, key_width)?;
                let wv = parse_matrix(&mut lines, value, key_width)?;
                let merge = parse_matrix(&mut lines, in_width, in_width + value)?;
                let (kn, ktext) = lines.next()?;
                let null_key = parse_float_row(kn, ktext, score)?;
                let (vn, vtext) = lines.next()?;
                let null_value = parse_float_row(vn, vtext, value)?;
                layers.push(Layer::Attention(AttentionLayer {
                    name,
                    cross,
                    kappa,
                    wq,
                    wk,
                    wv,
                    null_key,
                    null_value,
                    merge,
                }));
            }
            _ => return Err(parse_err(n, "expected a `linear` or `attention` layer header")),
        }
    }

    Ok(Network { arch, machine_digest, width, enc_width, layers, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn awkward_network() -> Network {
        // Values chosen to stress the formatter: non-dyadic decimals,
        // repeating binary fractions, negative zero, subnormals, huge and
        // tiny magnitudes.
        let mut meta = BTreeMap::new();
        meta.insert("k".to_string(), "7".to_string());
        meta.insert("T".to_string(), "100".to_string());
        Network {
            arch: "wcm21".into(),
            machine_digest: "ab".repeat(32),
            width: 2,
            enc_width: 3,
            meta,
            layers: vec![
                Layer::Linear(LinearLayer {
                    name: "odd-values".into(),
                    w: mat(&[
                        &[0.1, 1.0 / 3.0],
                        &[-0.0, 5e-324],
                    ]),
                    b: vec![1e300, -2.2250738585072014e-308],
                    activation: Activation::Relu,
                }),
                Layer::Attention(AttentionLayer {
                    name: "pick".into(),
                    cross: true,
                    kappa: 9999.0,
                    wq: mat(&[&[2.0, -1.0]]),
                    wk: mat(&[&[1.0, 0.5, -0.5]]),
                    wv: mat(&[&[0.0, 1.0, 0.0], &[7.0, 0.0, 0.3]]),
                    null_key: vec![-0.5],
                    null_value: vec![0.0, 1.0 / 7.0],
                    merge: mat(&[
                        &[1.0, 0.0, 0.25, 0.0],
                        &[0.0, 1.0, 0.0, f64::MIN_POSITIVE],
                    ]),
                }),
                Layer::Linear(LinearLayer {
                    name: "squash".into(),
                    w: mat(&[&[1.0, 0.0], &[0.0, 1.0]]),
                    b: vec![0.0, 0.0],
                    activation: Activation::Satlin,
                }),
            ],
        }
    }

    fn assert_bitwise_equal(a: &Network, b: &Network) {
        assert_eq!(a.arch, b.arch);
        assert_eq!(a.machine_digest, b.machine_digest);
        assert_eq!(a.width, b.width);
        assert_eq!(a.enc_width, b.enc_width);
        assert_eq!(a.meta, b.meta);
        assert_eq!(a.layers.len(), b.layers.len());
        for (x, y) in a.layers.iter().zip(&b.layers) {
            match (x, y) {
                (Layer::Linear(x), Layer::Linear(y)) => {
                    assert_eq!(x.name, y.name);
                    assert_eq!(x.activation, y.activation);
                    assert_bits(x.w.data(), y.w.data());
                    assert_bits(&x.b, &y.b);
                }
                (Layer::Attention(x), Layer::Attention(y)) => {
                    assert_eq!(x.name, y.name);
                    assert_eq!(x.cross, y.cross);
                    assert_eq!(x.kappa.to_bits(), y.kappa.to_bits());
                    for (mx, my) in [(&x.wq, &y.wq), (&x.wk, &y.wk), (&x.wv, &y.wv), (&x.merge, &y.merge)] {
                        assert_bits(mx.data(), my.data());
                    }
                    assert_bits(&x.null_key, &y.null_key);
                    assert_bits(&x.null_value, &y.null_value);
                }
                _ => panic!("layer kinds differ"),
            }
        }
    }

    fn assert_bits(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits(), "{x} vs {y}");
        }
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let net = awkward_network();
        let text = write_network(&net);
        let back = parse_network(&text).unwrap();
        assert_bitwise_equal(&net, &back);
        // And the re-serialization is byte-identical.
        assert_eq!(text, write_network(&back));
    }

    #[test]
    fn seventeen_digit_format_round_trips_random_bit_patterns() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 20_000 {
            let bits: u64 = rng.gen();
            let v = f64::from_bits(bits);
            if !v.is_finite() {
                continue;
            }
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s} -> {back}");
            checked += 1;
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        assert!(matches!(
            parse_network("nonsense 1\n"),
            Err(DocError::Parse { line: 1, .. })
        ));
        let net = awkward_network();
        let text = write_network(&net).replacen("tmnn-weights 1", "tmnn-weights 2", 1);
        assert!(matches!(parse_network(&text), Err(DocError::Version(2))));
    }

    #[test]
    fn rejects_truncation_and_corruption() {
        let net = awkward_network();
        let text = write_network(&net);

        // Truncate at every line boundary; the parser must error, never panic.
        let lines: Vec<&str> = text.lines().collect();
        for cut in 0..lines.len() {
            let partial = lines[..cut].join("\n");
            assert!(parse_network(&partial).is_err(), "truncation at line {cut} accepted");
        }

        // Corrupt a float.
        let corrupted = text.replacen("1.0000000000000000e0", "shrug", 1);
        assert!(matches!(corrupted, ref c if parse_network(c).is_err()));

        // Non-finite floats are data corruption too.
        let corrupted = text.replacen("1.0000000000000000e0", "inf", 1);
        assert!(parse_network(&corrupted).is_err());
    }

    #[test]
    fn reports_line_numbers() {
        let net = awkward_network();
        let mut lines: Vec<String> = write_network(&net).lines().map(String::from).collect();
        lines[9] = "not a number row".into();
        let doc = lines.join("\n");
        match parse_network(&doc) {
            Err(DocError::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("expected a parse error with a line number, got {other:?}"),
        }
    }
}
