//! Core library for the desk-scale pushing stack: rigid-body world, task
//! environment, reward shaping, policy networks, PPO training, evaluation,
//! and replay/checkpoint serialization. Everything is deterministic given a
//! seed: fixed iteration order, explicit RNG streams, no threads.

pub mod ctrlrew;
pub mod env;
pub mod eval;
pub mod geom;
pub mod nn;
pub mod ppo;
pub mod world;
