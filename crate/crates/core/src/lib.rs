//! Multiplicative ergodicity of non-negative additive functionals of Markov
//! chains.
//!
//! For a chain `(X_n)` with kernel `P` and an observable `ξ ≥ 0`, the Laplace
//! transforms `L⁽ⁿ⁾(γ) = E[exp(−γ Σ_{k≤n} ξ(X_k))]` are governed by the tilted
//! kernels `P_γ(x, dy) = e^{−γξ(y)} P(x, dy)`: `L⁽ⁿ⁾(γ) ≈ A(γ) ρ(γ)ⁿ` with
//! `ρ(γ)` the Perron eigenvalue of `P_γ`. This crate discretizes `P_γ`,
//! extracts its Perron data, and cross-checks the result against Monte Carlo
//! and closed-form Laplace transforms.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`kernels`] | AR(1), Knudsen gas and finite-state models with observables |
//! | [`laplace`] | Monte Carlo and exact Laplace transforms, generating functions |
//! | [`operator`] | Nyström discretization of `P_γ`, Perron triple, `r′(γ)`, drift checks |
//! | [`ergodicity`] | `A(γ)`, `(M, θ)` fit, critical tilt `ν`, `C_ν`, Knudsen fixed point |
//! | [`cli`] | Configuration parsing and the `merg` subcommands |

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ergodicity;
pub mod error;
pub mod expr;
pub mod kernels;
pub mod laplace;
pub mod operator;
pub mod quadrature;

pub use error::{Error, Result};
