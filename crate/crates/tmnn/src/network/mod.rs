//! The compiled-network container: a sequence of linear and attention
//! layers applied to one state row per machine step.
//!
//! Linear layers may widen or narrow the row (several constructions append
//! scratch dimensions and drop them again); attention layers keep the row
//! width and mix in one attended vector, either from the history of rows
//! produced so far (self-attention) or from a fixed encoder matrix
//! (cross-attention). A whole step maps a width-`width` row to another
//! width-`width` row, which the caller appends to the history.

pub mod doc;

use std::collections::BTreeMap;

use crate::linalg::{activate, affine, Activation, LinalgError, Matrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("layer {index} `{name}`: {msg}")]
    Shape { index: usize, name: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub name: String,
    pub w: Matrix,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl LinearLayer {
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        Ok(activate(self.activation, &affine(&self.w, &self.b, x)?))
    }
}

/// Single-head hard attention. Scores are bilinear (`Wq x · Wk y`) with an
/// extra phantom row whose key and value are fixed vectors; at large `kappa`
/// the softmax returns exact hard weights, and the phantom row catches the
/// case where no real row should win. The merge matrix maps `[x; attended]`
/// back to the row width.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub name: String,
    /// Attend over the fixed encoder matrix instead of the row history.
    pub cross: bool,
    pub kappa: f64,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub null_key: Vec<f64>,
    pub null_value: Vec<f64>,
    pub merge: Matrix,
}

impl AttentionLayer {
    pub fn score_dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn value_dim(&self) -> usize {
        self.wv.rows()
    }

    pub fn apply(&self, x: &[f64], attended: &Matrix) -> Result<Vec<f64>, LinalgError> {
        let q = affine(&self.wq, &vec![0.0; self.wq.rows()], x)?;
        let n = attended.rows();
        let mut scores = Vec::with_capacity(n + 1);
        for i in 0..n {
            let k = affine(&self.wk, &vec![0.0; self.wk.rows()], attended.row(i))?;
            scores.push(dot(&q, &k));
        }
        scores.push(dot(&q, &self.null_key));
        let weights = activate(Activation::SoftmaxRow { kappa: self.kappa }, &scores);

        let mut pooled = vec![0.0; self.value_dim()];
        for i in 0..n {
            if weights[i] == 0.0 {
                continue;
            }
            let v = affine(&self.wv, &vec![0.0; self.wv.rows()], attended.row(i))?;
            for (p, vi) in pooled.iter_mut().zip(&v) {
                *p += weights[i] * vi;
            }
        }
        if weights[n] != 0.0 {
            for (p, vi) in pooled.iter_mut().zip(&self.null_value) {
                *p += weights[n] * vi;
            }
        }

        let mut cat = Vec::with_capacity(x.len() + pooled.len());
        cat.extend_from_slice(x);
        cat.extend_from_slice(&pooled);
        affine(&self.merge, &vec![0.0; self.merge.rows()], &cat)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(LinearLayer),
    Attention(AttentionLayer),
}

impl Layer {
    pub fn name(&self) -> &str {
        match self {
            Layer::Linear(l) => &l.name,
            Layer::Attention(a) => &a.name,
        }
    }

    /// Output width given an input width, or a shape complaint.
    fn out_width(&self, in_width: usize, enc_width: usize, row_width: usize) -> Result<usize, String> {
        match self {
            Layer::Linear(l) => {
                if l.w.cols() != in_width {
                    return Err(format!(
                        "linear weight expects input {} but row has width {in_width}",
                        l.w.cols()
                    ));
                }
                if l.b.len() != l.w.rows() {
                    return Err(format!(
                        "bias length {} does not match {} rows",
                        l.b.len(),
                        l.w.rows()
                    ));
                }
                Ok(l.w.rows())
            }
            Layer::Attention(a) => {
                let key_width = if a.cross { enc_width } else { row_width };
                if a.wq.cols() != in_width {
                    return Err(format!(
                        "query projection expects input {} but row has width {in_width}",
                        a.wq.cols()
                    ));
                }
                if a.wk.cols() != key_width || a.wv.cols() != key_width {
                    return Err(format!(
                        "key/value projections expect attended width {key_width}, got {} and {}",
                        a.wk.cols(),
                        a.wv.cols()
                    ));
                }
                if a.wk.rows() != a.wq.rows() || a.null_key.len() != a.wq.rows() {
                    return Err("score dimensions disagree".to_string());
                }
                if a.null_value.len() != a.wv.rows() {
                    return Err("null value length disagrees with value projection".to_string());
                }
                if a.merge.cols() != in_width + a.wv.rows() {
                    return Err(format!(
                        "merge expects {} columns, got {}",
                        in_width + a.wv.rows(),
                        a.merge.cols()
                    ));
                }
                Ok(a.merge.rows())
            }
        }
    }
}

/// A compiled network plus the bookkeeping needed to run and serialize it.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Architecture tag (`wcm21`, `ss95-4`, `ss95-1`).
    pub arch: String,
    /// Digest of the machine this network was compiled from.
    pub machine_digest: String,
    /// Row width at step boundaries.
    pub width: usize,
    /// Encoder row width (0 when the architecture has no encoder).
    pub enc_width: usize,
    pub layers: Vec<Layer>,
    /// Architecture-specific integers (position bits, step budget, base...).
    pub meta: BTreeMap<String, String>,
}

impl Network {
    /// Check that layer shapes chain together and map width back to width.
    pub fn check_shapes(&self) -> Result<(), NetworkError> {
        let mut cur = self.width;
        for (index, layer) in self.layers.iter().enumerate() {
            cur = layer
                .out_width(cur, self.enc_width, self.width)
                .map_err(|msg| NetworkError::Shape {
                    index,
                    name: layer.name().to_string(),
                    msg,
                })?;
        }
        if cur != self.width {
            return Err(NetworkError::Shape {
                index: self.layers.len(),
                name: "<end>".to_string(),
                msg: format!("step maps width {} to {}, must preserve width", self.width, cur),
            });
        }
        Ok(())
    }

    pub fn meta_usize(&self, key: &str) -> Option<usize> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }

    /// Run one full step on `x`. `history` carries the rows produced so far
    /// (self-attention attends over it, including the row currently being
    /// processed); `encoder` is the fixed input encoding for cross-attention.
    pub fn forward_step(
        &self,
        x: &[f64],
        history: &Matrix,
        encoder: &Matrix,
    ) -> Result<Vec<f64>, NetworkError> {
        let mut cur = x.to_vec();
        for (index, layer) in self.layers.iter().enumerate() {
            let wrap = |e: LinalgError| NetworkError::Shape {
                index,
                name: layer.name().to_string(),
                msg: e.to_string(),
            };
            cur = match layer {
                Layer::Linear(l) => l.apply(&cur).map_err(wrap)?,
                Layer::Attention(a) => {
                    let attended = if a.cross { encoder } else { history };
                    a.apply(&cur, attended).map_err(wrap)?
                }
            };
        }
        Ok(cur)
    }
}
