//! Pairwise half-graph discrimination (PHD): a graph-level self-supervised
//! pre-training task for message-passing graph encoders.
//!
//! The crate covers the whole pipeline: graph primitives, a small
//! reverse-mode autodiff engine, PHD instance construction, a GIN-style
//! encoder with a collection node, pre-training, and downstream evaluation.

pub mod autodiff;
pub mod data;
pub mod downstream;
pub mod gnn;
pub mod graph;
pub mod phd;
pub mod pretrain;
pub mod seed;
