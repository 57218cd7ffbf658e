//! Minimum-cost Markov chains via the highest point of the Markov chain
//! polytope, with an instantiation for binary AIFV-m coding.

pub mod aifv;
pub mod chain;
pub mod gen;
pub mod io;
pub mod numerics;
pub mod polytope;
pub mod solvers;
