//! Grid-world simulator and deep Q-learning trainer for autonomous
//! resource management over a project portfolio.
//!
//! Two task modes share one world model: coverage (sweep a line-of-sight
//! window over every target cell) and data harvesting (collect data from
//! stationary devices over a stochastic wireless channel). The agent sees
//! a dual-resolution egocentric observation — a full-resolution local crop
//! and an average-pooled global view — and is trained with a double deep
//! Q-network. Everything is seeded and deterministic.

pub mod checkpoint;
pub mod ddqn;
pub mod env;
pub mod eval;
pub mod los;
pub mod map;
pub mod net;
pub mod obs;
pub mod rng;
pub mod scenario;
