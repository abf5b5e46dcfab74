//! Subject-independent stress detection from wrist-worn EDA, BVP and skin temperature.
//!
//! Raw recordings are cut into labelled windows, each signal is cleaned and summarised
//! into a fixed statistical feature vector (36 EDA, 30 BVP, 6 ST, 72 fused), and a
//! multi-branch neural network or a random forest is evaluated leave-one-subject-out.

pub mod bvp;
pub mod data;
pub mod dictionary;
pub mod dsp;
pub mod eval;
pub mod eda;
pub mod forest;
pub mod metrics;
pub mod nn;
pub mod numfmt;
pub mod st;
pub mod synth;
pub mod windowing;
