//! Leafwise fixed points for compactly supported perturbations of n uncoupled
//! harmonic oscillators.
//!
//! The level manifold `N = {H₀ = c, G_j = c_j}` of
//! `H₀ = ½ Σ m_j (x_j² + y_j²)` is coisotropic of codimension k and carries a
//! k-parameter leaf foliation. For a perturbation `H₁` whose Hofer norm is
//! below the Floer–Hofer capacity of N, some point `x ∈ N` is mapped by
//! `Φ = φ⁻¹ ∘ ψ` back onto its own leaf. This crate builds N, certifies its
//! k-contact structure, computes the capacity threshold, integrates the
//! perturbed flow symplectically and searches for such points.

pub mod capacity;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod phase_space;
pub mod solver;

pub use capacity::{
    capacity_fh, capacity_reference, equivalent_radii, hofer_norm, perturbation_threshold, GridSpec, NormEstimate,
    ReferenceShape,
};
pub use dynamics::{flow_h0, Perturbation, PerturbationKind, PerturbedSystem, ProfileFn};
pub use error::{Error, Result};
pub use geometry::{ContactCheck, LeafParams, LevelManifold};
pub use harness::{load_config, run_single, run_sweep, ExperimentConfig, ReportRow};
pub use phase_space::{from_action_angle, symplectic_defect, to_action_angle, ActionAngle, PhasePoint};
pub use solver::{residual, solve, verify_return, ChartPoint, SearchResult, SolveOptions};
