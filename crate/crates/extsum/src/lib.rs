//! Extractive summarization as a contextual bandit.
//!
//! A document is the context, an ordered duplicate-free sequence of sentence
//! indices is the action, and the reward is the mean ROUGE-1/2/L F1 of the
//! induced summary against an abstractive reference. An affinity network
//! scores sentences, a sampling-without-replacement distribution turns
//! affinities into actions, and REINFORCE with a self-critical greedy
//! baseline trains the network to maximize expected reward.

pub mod error;
pub mod model;
pub mod policy;
pub mod rouge;
pub mod text;

pub use error::{Error, Result};
