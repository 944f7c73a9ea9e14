//! Klon Centaur emulation: a nodal/wave-digital circuit model and a neural
//! gain stage, sharing one signal chain.

pub mod analysis;
pub mod api;
pub mod circuits;
pub mod config;
pub mod linear;
pub mod pedal;
pub mod render;
pub mod rnn;
pub mod signal;
pub mod wav;
pub mod wdf;
