//! Prevalence of past infection from imperfect, correlated antibody tests in
//! a stratified cluster survey.
//!
//! The pipeline is: validate survey tables ([`domain`]), fit the latent-class
//! and multilevel regression model by MCMC ([`sampler`]), then poststratify
//! and summarize the draws ([`inference`]). [`simgen`] simulates surveys for
//! validation and [`cli`] wires everything to files.

pub mod cli;
pub mod domain;
pub mod inference;
pub mod prevmodel;
pub mod rng;
pub mod sampler;
pub mod simgen;
pub mod testmodel;

#[cfg(test)]
mod fixtures;
