//! Agent-based simulation of wayfinding with signage.
//!
//! Agents render what they see, score each visible sign with a fused
//! attention map, recognise signs against per-agent thresholds, and walk
//! toward sign-derived goals with any-angle planning and social forces.

pub mod attention;
pub mod behavior;
pub mod cli;
pub mod engine;
pub mod environment;
pub mod geometry;
pub mod io;
pub mod movement;
pub mod perception;
pub mod scenario;
