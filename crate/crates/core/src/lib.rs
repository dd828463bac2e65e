//! Simulated SDN-managed edge storage cluster.

pub mod chunkstore;
pub mod controller;
pub mod harness;
pub mod measurement;
pub mod netsim;
pub mod node_agent;
pub mod selection;
pub mod topology;
