//! Controlled multiparticle chain on a line.
//!
//! A chain of `n` unit-mass particles interacts through a nearest-neighbour
//! potential (the Toda lattice `Φ(y) = e^y` by default) and is forced at its
//! ends: a control `u` pushes the first particle, a control `v` the last one.
//! The crate provides
//!
//! * the controlled Hamiltonian dynamics and fixed-step integrators
//!   ([`dynamics`]),
//! * an exact iterated-Lie-bracket engine built on nested dual numbers, with
//!   distribution-rank and involutivity tests ([`lie`]),
//! * the feedback-linearizing flat coordinates, normal-form verification and
//!   flatness-based two-point steering ([`linearize`]),
//! * the confining-feedback construction with compact energy sublevel sets
//!   and constrained steering demonstrations ([`confine`]),
//! * time-optimal bang-bang synthesis with Pontryagin certificates and
//!   switching-structure audits ([`mintime`]).
//!
//! The crate is `no_std` compatible (an allocator is required); all numeric
//! routines are deterministic given the caller-supplied seeds.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod confine;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod lie;
pub mod linearize;
pub mod math;
pub mod mintime;
pub mod numeric;
pub mod potential;
pub mod sample;
pub mod state;

pub use dynamics::{
    controlled_field, drift_field, simulate, total_energy, ControlAffineField, ControlLaw,
    ControlSignal, Trajectory,
};
pub use error::{ChainError, FieldError};
pub use potential::PotentialModel;
pub use state::{Channel, ChainState};
