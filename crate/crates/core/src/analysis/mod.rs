//! Path analysis: curve metrics, the modulus statistic, quasi-loops and the
//! tube, `V` and annulus event detectors.

pub mod annulus_scan;
pub mod curve;
pub mod quasi_loops;
pub mod tube;
pub mod vevents;

pub use curve::{modulus_statistic, parametrize, rho_distance, Modulus, ParametrizedCurve};
pub use quasi_loops::{detect_quasi_loops, find_quasi_loop, QuasiLoopRecord};
pub use tube::{detect_tube_events, local_nice_cut_times, nice_cut_times, verify_length_decomposition, TubeEventReport, TubeSampler};
pub use vevents::{detect_v_events, sample_v_walk, VEventReport, VGeometry};
pub use annulus_scan::{modulus_per_annulus, AnnulusRecord, AnnulusScan, AnnulusScanParams};
