//! Simulation and verification toolkit for three-dimensional loop-erased
//! random walk and the wired uniform spanning tree on dyadic lattices.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod io;
pub mod loop_erasure;
pub mod rng;
pub mod ust;
pub mod walk;

pub use error::{Error, Result};
pub use io::{decode_path, encode_path};
pub use geometry::{build_net, build_tube_partition, hausdorff_distance, Domain, Dyadic, LatticePoint, NetGrid, Site, TubePartition};
pub use loop_erasure::{cut_times, decompose_at_cut, erase_loops, sample_lerw};
pub use rng::RandomSource;
pub use walk::{sample_conditioned_walk, sample_walk, ConditionedWalkSpec, LatticePath, SimplePath, StopRule};
