//! Counting, locating and weighing point masses from Hermite moments.
//!
//! The pipeline takes finitely many Hermite moments of a measure
//! `sum_l a_l delta_{x_l}` (plus a perturbation), evaluates a filtered Hermite
//! expansion (the point-mass isolation operator) on a lattice, thresholds it,
//! clusters the super-level set and refines each cluster's maximizer on a finer
//! lattice. Amplitudes come from dividing the operator value by the kernel
//! diagonal at the recovered location.
//!
//! Moments can be given on the spatial side or on the Fourier side; Hermite
//! functions are eigenfunctions of the Fourier transform, so both carry the
//! same information up to a known unimodular-times-constant factor.

pub mod basis;
pub mod detect;
pub mod error;
pub mod extended;
pub mod filter;
pub mod group;
pub mod moments;
pub mod pio;
pub mod plot;
pub mod quadrature;
pub mod verify;

pub use basis::{MultiIndex, Point, Region};
pub use detect::{DetectConfig, DetectedSpike, DetectionResult, Threshold};
pub use error::{Error, Result};
pub use filter::{FilterKind, FilterSpec};
pub use group::{Group, GroupReport};
pub use moments::{MomentSet, PerturbationSpec, PointMass, Scenario, Side};
pub use pio::{GridEvaluation, GridOptions, PioConfig, Summation};

pub use num_complex::Complex64;
