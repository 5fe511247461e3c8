//! Vehicular Floating Content simulation and anchor-zone dimensioning.
//!
//! A [`roadnet::RoadNet`] carries vehicles generated by [`mobility`]; the
//! [`fc_engine`] replays opportunistic content exchange restricted to an
//! anchor zone; [`features`] aggregates per-link statistics; [`cost`] and
//! [`optimizer`] score and search anchor-zone configurations; [`generate`]
//! produces labeled datasets stored through [`dataset`].

pub mod cost;
pub mod dataset;
pub mod fc_engine;
pub mod features;
pub mod generate;
pub mod mobility;
pub mod optimizer;
pub mod roadnet;
pub mod scenario;
