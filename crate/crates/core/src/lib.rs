//! Dual-agent model-based offline reinforcement learning for recommendation.
//!
//! A world-model ensemble fills the sparse feedback matrix; a *selector* agent
//! picks reference users whose estimates are averaged to keep refining that
//! matrix during training, and a *recommender* agent learns an item policy
//! against the refined rewards, penalised by a dynamic uncertainty term and a
//! behaviour-entropy term.

pub mod checkpoint;
pub mod dataset;
pub mod engine;
pub mod matrix;
pub mod nn;
pub mod recommender;
pub mod rewardmath;
pub mod selector;
pub mod worldmodel;

pub use matrix::DenseMatrix;
