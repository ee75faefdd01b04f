//! Churn prediction from positive and unlabeled users.
//!
//! A short observation window marks recently active users as positive and
//! leaves everybody else unlabeled. A logistic model of positive versus
//! unlabeled, together with an estimate of the label frequency `c`, weights
//! each unlabeled user as a partial positive and partial negative, and a
//! factorization machine is trained on the weighted set.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod pu;
pub mod sim;

pub use config::Config;
pub use error::{Error, Result};
