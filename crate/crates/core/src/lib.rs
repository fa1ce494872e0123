//! Planning and simulation for adversarial reinforcement learning in tabular
//! environments: optimal online-manipulation attacks through the attacker's
//! meta-MDP, simulation of the attacked interaction, and robust defenses via
//! turn-based game solvers and weak-Stackelberg backward induction.

pub mod attack;
pub mod cli;
pub mod defense;
pub mod error;
pub mod gridworld;
pub mod linear;
pub mod mdp;
pub mod planner;
pub mod sim;

pub use error::{Error, Result};
