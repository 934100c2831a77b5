//! Compile Turing machines and stack machines into neural networks whose
//! forward pass simulates the machine exactly, step for step.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`] — a small deterministic dense-matrix kernel (fixed summation
//!   order, sharp softmax, pivoted-QR least squares).
//! * [`machine`] — machine descriptions, validation, and reference
//!   interpreters that serve as ground truth for everything else.
//! * [`network`] — the network container: linear and attention layers, the
//!   stepwise forward pass, and a plain-text weight format.
//! * [`circuits`] — ReLU realizations of boolean gates and binary adders,
//!   embedded at chosen coordinates of a wide state vector.
//! * [`wcm`] — the encoder–decoder transformer construction for Turing
//!   machines.
//! * [`ss`] — the recurrent (saturated-linear) constructions for stack
//!   machines, in four-layer and one-layer variants.
pub mod circuits;
pub mod linalg;
pub mod machine;
pub mod network;
pub mod ss;
pub mod wcm;

#[cfg(test)]
pub(crate) mod testutil;
