//! Permutons, pattern densities, Gibbs permutation models, and the
//! free-energy variational problems they induce.
//!
//! The crate is organized around a single data model ([`Permuton`]) and the
//! layers built on it:
//!
//! * [`measures`] — grid / segment / mixture measures on the unit square,
//!   marginal CDFs, projections, divergences;
//! * [`patterns`] — permutations, pattern occurrence counting, and exact or
//!   Monte-Carlo pattern densities of measures;
//! * [`sampling`] — mu-random permutations, Gibbs MCMC over permutations,
//!   exact small-n Gibbs distributions, free-energy estimators;
//! * [`variational`] — the Euler–Lagrange fixed-point operator of the Gibbs
//!   free energy, damped fixed-point solvers, conditioned optimizers, and
//!   multi-start search;
//! * [`models`] — closed-form model families (diagonal-block measures,
//!   two-block segment measures, the Mallows family), conditional
//!   constancy tests, and phase-transition scans;
//! * [`spec`] — a JSON vocabulary for describing measures, used by the
//!   command-line tools.

pub mod error;
pub mod measures;
pub mod models;
pub mod patterns;
pub mod sampling;
pub mod spec;
pub mod variational;

pub use error::{Error, Result};
pub use measures::{mix, Grid, MarginalCdf, Permuton, Rect, Segment};
pub use models::{
    annotate_separation, cc_test_21, curie_weiss_root, dmat_check, mallows_density, mallows_grid,
    mallows_el_residual, mu_ell, phase_scan, phase_scan_row, rect_permuton, reflect_identity_check,
    sstar_check, sstar_inflate, substitution_square, support_diagnostics_21, xi,
    xi_conditional_optimizers, xi_gibbs_optimizers, xi11, xi22, CcReport, CcVerdict,
    ClusterSummary, DmatReport, FrontierFit, PhaseScanConfig, PhaseScanRow, ReflectIdentity,
    SupportDiagnostics, XiConditional,
};
pub use patterns::{McEstimate, Pattern, Permutation, Point, PointConfig};
pub use sampling::{ChainConfig, GibbsParams, GibbsRun, GibbsStats, PmfTable, Proposal};
pub use spec::{BuiltinParams, PermutonSpec, SegmentSpec};
pub use variational::{
    canonical_inits, conditional_optimizer, contraction_constant, el_operator, free_energy,
    free_energy_derivative_check, free_energy_multi, multi_start_optimize, solve_el, theta_c,
    theta_hat, ConditionalReport, DensityField, DerivativeCheck, FieldBase, FieldLayout, Init,
    MultiStartReport, OptimizerCluster, SolveConfig, SolveReport,
};
