//! Petri games, control games and the translations between them.

pub mod automata;
pub mod cli;
pub mod distribution;
pub mod games;
pub mod nets;
pub mod traces;
pub mod translate;
pub mod verify;
pub mod unfolding;
