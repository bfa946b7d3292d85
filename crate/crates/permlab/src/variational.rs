//! Euler–Lagrange fixed points of the Gibbs free-energy functional.
//!
//! The large-deviation analysis of the Gibbs permutation model reduces its
//! limit behaviour to the variational problem
//!
//! ```text
//!     F(sigma, mu, theta)  =  sup over nu  of  theta * t_sigma(nu) - D(nu | mu),
//! ```
//!
//! the supremum running over probability measures with a density `g` with
//! respect to `mu`. Maximizers satisfy the Euler–Lagrange fixed-point
//! equation `g = T_theta(g)` with
//!
//! ```text
//!     T_theta(g)(z)  =  exp( k * theta * W_g(z) ) / normalizer,
//!     W_g(z)         =  E[ h_sigma(z, Z_2, ..., Z_k) ],   Z_a iid from g*mu,
//! ```
//!
//! which for the inversion pattern `21` reads `W_g(x, y) =
//! nu_g([0,x] x [y,1]) + nu_g([x,1] x [0,y])`. Below the contraction
//! threshold [`theta_c`] the iteration provably contracts and the fixed
//! point is the unique optimizer; beyond it the solver still runs (damped)
//! and reports fixed points without any optimality certificate — multiple
//! starting points ([`multi_start_optimize`]) are the phase-multiplicity
//! detector.
//!
//! Density fields are discretized as piecewise-constant densities: per cell
//! on a refinement of a grid base measure, or per equal-length parameter bin
//! on each segment of a segment base. `W` is evaluated by exact prefix sums
//! (grids) or exact rectangle portions (segment bins) at slot centers; for
//! piecewise-constant fields this makes the reported `t_sigma` exact at
//! sizes 2 and 3, while the operator itself carries an `O(1/m)`
//! discretization bias relative to the continuum fixed point.

use crate::error::{Error, Result};
use crate::measures::{Permuton, Rect, Segment};
use crate::patterns::{t_sigma_measure_exact, Pattern, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Largest grid resolution for size-3 operator sweeps (`O(m^6)` per sweep).
const K3_GRID_CAP: usize = 16;

/// Contraction threshold: for `|theta| < theta_c(k)` the Euler–Lagrange
/// iteration is a strict contraction and its fixed point is the unique
/// free-energy maximizer.
pub fn theta_c(k: usize) -> f64 {
    let a = 4.0 * (k * k) as f64;
    (a / (a.exp() - 1.0)).min(1.0)
}

/// Lipschitz constant `C(k)` in the contraction bound
/// `|T_theta(u) - T_theta(v)|_1 <= C |theta| |u - v|_1`.
pub fn contraction_constant(k: usize) -> f64 {
    let a = 4.0 * (k * k) as f64;
    (a.exp() - 1.0) / a
}

/// Discretization of a base measure for density fields: a list of *slots*
/// (grid cells or segment parameter bins), each carrying a known base mass.
#[derive(Debug, PartialEq)]
pub struct FieldBase {
    kind: BaseKind,
}

#[derive(Debug, PartialEq)]
enum BaseKind {
    /// Cells of an `m x m` grid; `mass[ix * m + iy]` is the base measure of
    /// the cell.
    Grid { m: usize, mass: Vec<f64> },
    /// `bins` equal parameter bins on each segment; slot `i * bins + b` is
    /// bin `b` of segment `i`.
    SegmentBins {
        bins: usize,
        slot_segs: Vec<Segment>,
    },
}

/// Shape of a field base, for callers that lay out per-slot data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldLayout {
    Grid { m: usize },
    SegmentBins { n_segments: usize, bins: usize },
}

impl FieldBase {
    /// Discretize `mu`: grid-representable measures are refined to a
    /// resolution compatible with both the measure and the requested `m`;
    /// segment measures get `bins` parameter bins per segment. Measures
    /// mixing grids and segments are not solvable.
    pub fn for_measure(mu: &Permuton, grid_m: usize, bins: usize) -> Result<Arc<FieldBase>> {
        if grid_m == 0 || bins == 0 {
            return Err(Error::InvalidInput(
                "field resolution parameters must be positive".into(),
            ));
        }
        if let Some(grid) = mu.common_grid()? {
            let mb = grid.resolution();
            let m = lcm(mb, grid_m);
            if m > crate::measures::LCM_CAP {
                return Err(Error::Incompatible(format!(
                    "field resolution {m} exceeds the cap {}",
                    crate::measures::LCM_CAP
                )));
            }
            let k = m / mb;
            let mut mass = vec![0.0; m * m];
            for ix in 0..m {
                for iy in 0..m {
                    mass[ix * m + iy] = grid.cell_mass(ix / k, iy / k) / (k * k) as f64;
                }
            }
            return Ok(Arc::new(FieldBase {
                kind: BaseKind::Grid { m, mass },
            }));
        }
        let Some(segs) = mu.flatten_segments() else {
            return Err(Error::Unsupported(
                "density fields need an all-grid or all-segment base measure".into(),
            ));
        };
        let mut slot_segs = Vec::with_capacity(segs.len() * bins);
        for s in &segs {
            for b in 0..bins {
                let t0 = b as f64 / bins as f64;
                let t1 = (b + 1) as f64 / bins as f64;
                slot_segs.push(Segment {
                    from: s.point_at(t0),
                    to: s.point_at(t1),
                    weight: s.weight / bins as f64,
                });
            }
        }
        Ok(Arc::new(FieldBase {
            kind: BaseKind::SegmentBins { bins, slot_segs },
        }))
    }

    pub fn layout(&self) -> FieldLayout {
        match &self.kind {
            BaseKind::Grid { m, .. } => FieldLayout::Grid { m: *m },
            BaseKind::SegmentBins { bins, slot_segs } => FieldLayout::SegmentBins {
                n_segments: slot_segs.len() / bins,
                bins: *bins,
            },
        }
    }

    pub fn slot_count(&self) -> usize {
        match &self.kind {
            BaseKind::Grid { mass, .. } => mass.len(),
            BaseKind::SegmentBins { slot_segs, .. } => slot_segs.len(),
        }
    }

    /// Base-measure mass of one slot.
    pub fn slot_mass(&self, s: usize) -> f64 {
        match &self.kind {
            BaseKind::Grid { mass, .. } => mass[s],
            BaseKind::SegmentBins { slot_segs, .. } => slot_segs[s].weight,
        }
    }

    /// Representative point of one slot (cell center / bin midpoint).
    pub fn slot_center(&self, s: usize) -> Point {
        match &self.kind {
            BaseKind::Grid { m, .. } => {
                let (ix, iy) = (s / m, s % m);
                (
                    (ix as f64 + 0.5) / *m as f64,
                    (iy as f64 + 0.5) / *m as f64,
                )
            }
            BaseKind::SegmentBins { slot_segs, .. } => slot_segs[s].point_at(0.5),
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// A piecewise-constant probability density with respect to a base measure:
/// one nonnegative value per slot, integrating to 1 against the slot masses.
#[derive(Debug, Clone)]
pub struct DensityField {
    base: Arc<FieldBase>,
    g: Vec<f64>,
}

impl DensityField {
    /// The base density `g = 1`.
    pub fn uniform(base: Arc<FieldBase>) -> DensityField {
        let n = base.slot_count();
        DensityField {
            base,
            g: vec![1.0; n],
        }
    }

    /// Seed-deterministic random positive density.
    pub fn random(base: Arc<FieldBase>, seed: u64) -> DensityField {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..base.slot_count())
            .map(|_| 0.25 + 1.5 * rng.gen::<f64>())
            .collect();
        DensityField::from_values(base, values).expect("positive values")
    }

    /// Density tilted along the main diagonal: `g(z)` proportional to
    /// `exp(s * (x + y - 1))` at slot centers. Used to break block symmetry
    /// when hunting multiple optimizers.
    pub fn tilted(base: Arc<FieldBase>, s: f64) -> DensityField {
        let values: Vec<f64> = (0..base.slot_count())
            .map(|i| {
                let (x, y) = base.slot_center(i);
                (s * (x + y - 1.0)).exp()
            })
            .collect();
        DensityField::from_values(base, values).expect("positive values")
    }

    /// Build a field from per-slot values; they are normalized exactly so
    /// the density integrates to 1.
    pub fn from_values(base: Arc<FieldBase>, values: Vec<f64>) -> Result<DensityField> {
        if values.len() != base.slot_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} slot values, got {}",
                base.slot_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "density values must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = values
            .iter()
            .enumerate()
            .map(|(s, v)| v * base.slot_mass(s))
            .sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("density with zero total mass".into()));
        }
        let g = values.into_iter().map(|v| v / total).collect();
        Ok(DensityField { base, g })
    }

    pub fn base(&self) -> &Arc<FieldBase> {
        &self.base
    }

    pub fn values(&self) -> &[f64] {
        &self.g
    }

    /// `integral of g d(mu)`; 1 by construction, up to rounding.
    pub fn integral(&self) -> f64 {
        self.g
            .iter()
            .enumerate()
            .map(|(s, v)| v * self.base.slot_mass(s))
            .sum()
    }

    /// Relative entropy `D(g mu | mu) = integral of g log g d(mu)`.
    pub fn kl(&self) -> f64 {
        self.g
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(s, v)| self.base.slot_mass(s) * v * v.ln())
            .sum()
    }

    /// `L1(mu)` distance between two fields on the same base.
    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        if !Arc::ptr_eq(&self.base, &other.base) && self.base != other.base {
            return Err(Error::Incompatible(
                "cannot compare density fields over different bases".into(),
            ));
        }
        Ok(self
            .g
            .iter()
            .zip(&other.g)
            .enumerate()
            .map(|(s, (a, b))| self.base.slot_mass(s) * (a - b).abs())
            .sum())
    }

    /// The measure `g * mu` as a [`Permuton`].
    pub fn to_permuton(&self) -> Result<Permuton> {
        match &self.base.kind {
            BaseKind::Grid { m, mass } => {
                let masses: Vec<f64> = self
                    .g
                    .iter()
                    .zip(mass)
                    .map(|(g, m)| g * m)
                    .collect();
                Ok(Permuton::Grid(crate::measures::Grid::from_masses(
                    *m, masses,
                )?))
            }
            BaseKind::SegmentBins { slot_segs, .. } => {
                let total: f64 = self
                    .g
                    .iter()
                    .zip(slot_segs)
                    .map(|(g, s)| g * s.weight)
                    .sum();
                let segs: Vec<Segment> = self
                    .g
                    .iter()
                    .zip(slot_segs)
                    .map(|(g, s)| Segment {
                        weight: g * s.weight / total,
                        ..*s
                    })
                    .collect();
                Permuton::segments(segs)
            }
        }
    }

    /// Per-slot masses of `g * mu`.
    fn nu_masses(&self) -> Vec<f64> {
        self.g
            .iter()
            .enumerate()
            .map(|(s, v)| v * self.base.slot_mass(s))
            .collect()
    }
}

/// The pattern-weight field `W(z) = E[h_sigma(z, Z_2, ..., Z_k)]` with
/// `Z_a` iid from the field's measure, evaluated at every slot center.
///
/// For grids the evaluation is the exact slot average of the true `W`
/// (prefix sums; the half-strip and quarter-cell corrections account for the
/// center cuts); for segment bins it is the exact rectangle portion sum at
/// the bin midpoint.
pub fn weight_field(sigma: &Pattern, field: &DensityField) -> Result<Vec<f64>> {
    let nu = field.nu_masses();
    match (&field.base.kind, sigma.k()) {
        (BaseKind::Grid { m, .. }, 2) => Ok(w_k2_grid(sigma, *m, &nu)),
        (BaseKind::Grid { m, .. }, 3) => {
            if *m > K3_GRID_CAP {
                return Err(Error::Unsupported(format!(
                    "size-3 operator sweeps are limited to grid resolution {K3_GRID_CAP} (got {m})"
                )));
            }
            Ok(w_k3_grid(sigma, *m, &nu))
        }
        (BaseKind::SegmentBins { slot_segs, .. }, 2) => {
            Ok(w_k2_segments(sigma, slot_segs, &nu))
        }
        (BaseKind::SegmentBins { .. }, _) => Err(Error::Unsupported(
            "segment bases support only size-2 patterns".into(),
        )),
        (_, k) => Err(Error::Unsupported(format!(
            "no operator for pattern size {k}; supported sizes are 2 and 3"
        ))),
    }
}

/// Quadrant masses seen from every cell center, by 2-D prefix sums.
fn w_k2_grid(sigma: &Pattern, m: usize, nu: &[f64]) -> Vec<f64> {
    // p[(i, j)] = mass of cells with column < i and row < j
    let mut p = vec![0.0; (m + 1) * (m + 1)];
    for i in 0..m {
        for j in 0..m {
            p[(i + 1) * (m + 1) + (j + 1)] = nu[i * m + j] + p[i * (m + 1) + (j + 1)]
                + p[(i + 1) * (m + 1) + j]
                - p[i * (m + 1) + j];
        }
    }
    let at = |i: usize, j: usize| p[i * (m + 1) + j];
    let total = at(m, m);
    let inversion = sigma.is_21();
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let own = nu[i * m + j];
            let ll_full = at(i, j);
            let col_below = at(i + 1, j) - at(i, j); // column i, rows < j
            let row_left = at(i, j + 1) - at(i, j); // row j, columns < i
            let ul_full = at(i, m) - at(i, j + 1);
            let col_above = (at(i + 1, m) - at(i + 1, j + 1)) - ul_full;
            let lr_full = at(m, j) - at(i + 1, j);
            let row_right = (at(m, j + 1) - at(m, j)) - (at(i + 1, j + 1) - at(i + 1, j));
            let ur_full = total - at(i + 1, m) - at(m, j + 1) + at(i + 1, j + 1);
            w[i * m + j] = if inversion {
                // mass above-left plus below-right of the center
                (ul_full + 0.5 * col_above + 0.5 * row_left + 0.25 * own)
                    + (lr_full + 0.5 * col_below + 0.5 * row_right + 0.25 * own)
            } else {
                // mass below-left plus above-right of the center
                (ll_full + 0.5 * col_below + 0.5 * row_left + 0.25 * own)
                    + (ur_full + 0.5 * col_above + 0.5 * row_right + 0.25 * own)
            };
        }
    }
    w
}

/// Quadrant masses seen from every bin midpoint, by exact segment portions.
fn w_k2_segments(sigma: &Pattern, slot_segs: &[Segment], nu: &[f64]) -> Vec<f64> {
    let inversion = sigma.is_21();
    let mut w = vec![0.0; slot_segs.len()];
    for (s, seg) in slot_segs.iter().enumerate() {
        let (x, y) = seg.point_at(0.5);
        let (ra, rb) = if inversion {
            (
                Rect { x_lo: 0.0, x_hi: x, y_lo: y, y_hi: 1.0 },
                Rect { x_lo: x, x_hi: 1.0, y_lo: 0.0, y_hi: y },
            )
        } else {
            (
                Rect { x_lo: 0.0, x_hi: x, y_lo: 0.0, y_hi: y },
                Rect { x_lo: x, x_hi: 1.0, y_lo: y, y_hi: 1.0 },
            )
        };
        w[s] = slot_segs
            .iter()
            .zip(nu)
            .map(|(other, mass)| mass * (other.portion_in_rect(&ra) + other.portion_in_rect(&rb)))
            .sum();
    }
    w
}

/// Probability that three independent points, uniform on the cells indexed
/// `(a, b, c)`, come out in increasing order.
fn ordered3(a: usize, b: usize, c: usize) -> f64 {
    if !(a <= b && b <= c) {
        0.0
    } else if a == b && b == c {
        1.0 / 6.0
    } else if a == b || b == c {
        0.5
    } else {
        1.0
    }
}

/// Size-3 weight field on a grid: for each center cell, sum over ordered
/// pairs of companion cells of the probability that the three cells induce
/// `sigma` (`O(m^6)` per sweep, hence the resolution cap).
fn w_k3_grid(sigma: &Pattern, m: usize, nu: &[f64]) -> Vec<f64> {
    const PERMS3: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let tau = sigma.as_permutation().inverse();
    let tv = [tau.values()[0] - 1, tau.values()[1] - 1, tau.values()[2] - 1];
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for i2 in 0..m {
                for j2 in 0..m {
                    let m2 = nu[i2 * m + j2];
                    if m2 == 0.0 {
                        continue;
                    }
                    for i3 in 0..m {
                        for j3 in 0..m {
                            let m3 = nu[i3 * m + j3];
                            if m3 == 0.0 {
                                continue;
                            }
                            let cols = [i, i2, i3];
                            let rows = [j, j2, j3];
                            let mut p = 0.0;
                            for om in &PERMS3 {
                                let fx =
                                    ordered3(cols[om[0]], cols[om[1]], cols[om[2]]);
                                if fx == 0.0 {
                                    continue;
                                }
                                let fy = ordered3(
                                    rows[om[tv[0]]],
                                    rows[om[tv[1]]],
                                    rows[om[tv[2]]],
                                );
                                p += fx * fy;
                            }
                            acc += m2 * m3 * p;
                        }
                    }
                }
            }
            w[i * m + j] = acc;
        }
    }
    w
}

/// One application of the Euler–Lagrange operator:
/// `T_theta(g) = exp(k * theta * W_g) / normalizer`.
pub fn el_operator(sigma: &Pattern, theta: f64, field: &DensityField) -> Result<DensityField> {
    let w = weight_field(sigma, field)?;
    Ok(apply_exponent(sigma, theta, field, &w))
}

fn apply_exponent(
    sigma: &Pattern,
    theta: f64,
    field: &DensityField,
    w: &[f64],
) -> DensityField {
    let k = sigma.k() as f64;
    let exponents: Vec<f64> = w.iter().map(|wi| k * theta * wi).collect();
    let m = exponents
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut g: Vec<f64> = exponents.iter().map(|e| (e - m).exp()).collect();
    let z: f64 = g
        .iter()
        .enumerate()
        .map(|(s, v)| v * field.base.slot_mass(s))
        .sum();
    for v in &mut g {
        *v /= z;
    }
    DensityField {
        base: Arc::clone(&field.base),
        g,
    }
}

/// Initialization of the fixed-point iteration.
#[derive(Debug, Clone)]
pub enum Init {
    Uniform,
    Random(u64),
    Custom(DensityField),
}

/// Solver configuration. `damping` is the mixing weight `alpha` in
/// `g <- (1 - alpha) g + alpha T(g)`; the solver halves it automatically
/// after the residual rises twice in a row.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub tol: f64,
    pub max_iter: u64,
    pub damping: f64,
    pub init: Init,
    /// Target grid resolution for grid bases (raised to a common refinement
    /// with the base measure's own resolution).
    pub grid_m: usize,
    /// Parameter bins per segment for segment bases.
    pub bins: usize,
    /// Cluster radius for multi-start distinctness; defaults to `10 * tol`.
    pub cluster_radius: Option<f64>,
    /// Record the objective value after every iteration.
    pub record_trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol: 1e-10,
            max_iter: 100_000,
            damping: 1.0,
            init: Init::Uniform,
            grid_m: 64,
            bins: 64,
            cluster_radius: None,
            record_trace: false,
        }
    }
}

impl SolveConfig {
    pub fn cluster_radius(&self) -> f64 {
        self.cluster_radius.unwrap_or(10.0 * self.tol)
    }
}

/// Outcome of one fixed-point solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub theta: f64,
    pub iterations: u64,
    /// Final `L1(mu)` residual `|T(g) - g|`.
    pub residual: f64,
    /// `theta * t_sigma(g mu) - D(g mu | mu)` at the final field.
    pub free_energy: f64,
    /// Pattern density of the final field's measure.
    pub t_sigma: f64,
    pub converged: bool,
    /// True when `|theta| < theta_c(k)`, i.e. the fixed point is provably
    /// the unique maximizer.
    pub certified_unique: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_trace: Option<Vec<f64>>,
}

/// Exact pattern density of a field's measure. For `k = 2` this goes
/// through the closed-form measure integrals; for `k = 3` through the slot
/// quadrature `sum nu_s W_s`, which is exact for piecewise-constant fields.
fn t_sigma_field(sigma: &Pattern, field: &DensityField, w: &[f64]) -> Result<f64> {
    match sigma.k() {
        2 => t_sigma_measure_exact(sigma, &field.to_permuton()?),
        _ => Ok(field
            .nu_masses()
            .iter()
            .zip(w)
            .map(|(m, wi)| m * wi)
            .sum()),
    }
}

fn build_init(init: &Init, base: &Arc<FieldBase>) -> Result<DensityField> {
    match init {
        Init::Uniform => Ok(DensityField::uniform(Arc::clone(base))),
        Init::Random(seed) => Ok(DensityField::random(Arc::clone(base), *seed)),
        Init::Custom(f) => {
            if *f.base() != *base {
                return Err(Error::Incompatible(
                    "custom initialization lives on a different base".into(),
                ));
            }
            Ok(f.clone())
        }
    }
}

/// Smallest damping factor the automatic fallback will reach.
const MIN_DAMPING: f64 = 1.0 / 64.0;

/// Consecutive residual decreases required before a lowered damping factor
/// is allowed to double back toward its configured value. Without recovery
/// a factor lowered during a violent transient would slow the entire tail
/// of the iteration by the same multiple.
const DAMPING_RECOVERY_RUN: u32 = 50;

/// Damped fixed-point iteration for the Euler–Lagrange equation.
///
/// Non-convergence within `max_iter` is not an error: the report carries
/// `converged = false` and the caller decides.
pub fn solve_el(
    sigma: &Pattern,
    mu: &Permuton,
    theta: f64,
    cfg: &SolveConfig,
) -> Result<(DensityField, SolveReport)> {
    let base = FieldBase::for_measure(mu, cfg.grid_m, cfg.bins)?;
    let mut g = build_init(&cfg.init, &base)?;
    let alpha_max = cfg.damping.clamp(0.0, 1.0);
    let mut alpha = alpha_max;
    if alpha == 0.0 {
        return Err(Error::InvalidInput("damping must be positive".into()));
    }
    let mut calm = 0u32;
    let mut trace = if cfg.record_trace { Some(Vec::new()) } else { None };
    let mut prev_residual = f64::INFINITY;
    let mut two_back: Option<Vec<f64>> = None;
    let mut rises = 0u32;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut w = weight_field(sigma, &g)?;
    let mut converged = false;
    let l1_slots = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(s, (x, y))| base.slot_mass(s) * (x - y).abs())
            .sum()
    };
    while iterations < cfg.max_iter {
        iterations += 1;
        let tg = apply_exponent(sigma, theta, &g, &w);
        residual = tg.l1_distance(&g)?;
        let before = g.g.clone();
        if alpha >= 1.0 {
            g = tg;
        } else {
            for (gs, ts) in g.g.iter_mut().zip(&tg.g) {
                *gs = (1.0 - alpha) * *gs + alpha * ts;
            }
        }
        // Oscillation detection, two triggers: the residual failing to
        // decrease twice in a row, or the new state landing (relatively)
        // close to the state two steps back while the residual stays large
        // — the signature of an attracting period-2 cycle, whose residual
        // can decrease monotonically and so evade the first trigger.
        if residual >= prev_residual {
            rises += 1;
        } else {
            rises = 0;
        }
        let cycling = two_back
            .as_ref()
            .map(|p| l1_slots(&g.g, p) <= (1e-3 * residual).max(cfg.tol))
            .unwrap_or(false);
        if (rises >= 2 || cycling) && residual > cfg.tol {
            alpha = (0.5 * alpha).max(MIN_DAMPING);
            rises = 0;
            calm = 0;
        } else if residual < prev_residual {
            // Recover: once the iteration has settled, walk the damping
            // back up so the tail converges at full speed again.
            calm += 1;
            if calm >= DAMPING_RECOVERY_RUN && alpha < alpha_max {
                alpha = (2.0 * alpha).min(alpha_max);
                calm = 0;
            }
        } else {
            calm = 0;
        }
        two_back = Some(before);
        prev_residual = residual;
        w = weight_field(sigma, &g)?;
        if let Some(tr) = trace.as_mut() {
            let t_quad: f64 = g
                .nu_masses()
                .iter()
                .zip(&w)
                .map(|(m, wi)| m * wi)
                .sum();
            tr.push(theta * t_quad - g.kl());
        }
        if residual <= cfg.tol {
            converged = true;
            break;
        }
    }
    let t_sigma = t_sigma_field(sigma, &g, &w)?;
    let report = SolveReport {
        theta,
        iterations,
        residual,
        free_energy: theta * t_sigma - g.kl(),
        t_sigma,
        converged,
        certified_unique: theta.abs() < theta_c(sigma.k()),
        objective_trace: trace,
    };
    Ok((g, report))
}

/// Free energy along a single solve from the configured initialization.
pub fn free_energy(sigma: &Pattern, mu: &Permuton, theta: f64, cfg: &SolveConfig) -> Result<f64> {
    let (_, report) = solve_el(sigma, mu, theta, cfg)?;
    if !report.converged {
        return Err(Error::NonConvergence { theta });
    }
    Ok(report.free_energy)
}

/// The canonical initialization set for multi-start searches: the base
/// density plus two diagonal tilts that break block symmetry.
pub fn canonical_inits(base: &Arc<FieldBase>) -> Vec<DensityField> {
    vec![
        DensityField::uniform(Arc::clone(base)),
        DensityField::tilted(Arc::clone(base), 2.0),
        DensityField::tilted(Arc::clone(base), -2.0),
    ]
}

/// Free energy maximized over the canonical multi-start set (needed past
/// phase transitions, where the uniform start can sit on a symmetric
/// non-maximizing fixed point).
pub fn free_energy_multi(
    sigma: &Pattern,
    mu: &Permuton,
    theta: f64,
    cfg: &SolveConfig,
) -> Result<f64> {
    let base = FieldBase::for_measure(mu, cfg.grid_m, cfg.bins)?;
    let report = multi_start_optimize(sigma, mu, theta, canonical_inits(&base), cfg)?;
    report
        .clusters
        .first()
        .map(|c| c.report.free_energy)
        .ok_or(Error::NonConvergence { theta })
}

/// Output of [`free_energy_derivative_check`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeCheck {
    /// Centered difference `(F(theta + h) - F(theta - h)) / (2h)`.
    pub centered_difference: f64,
    /// `t_sigma` of the fixed point at `theta`.
    pub t_sigma: f64,
    /// Absolute gap between the two (the envelope identity
    /// `F'(theta) = t_sigma(nu_theta)` says it should vanish).
    pub gap: f64,
}

/// Check the envelope identity `F'(theta) = t_sigma(nu_theta)` by centered
/// finite differences, solving all three points from the same
/// initialization so one branch is followed consistently.
pub fn free_energy_derivative_check(
    sigma: &Pattern,
    mu: &Permuton,
    theta: f64,
    h: f64,
    cfg: &SolveConfig,
) -> Result<DerivativeCheck> {
    if h <= 0.0 {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    let f_plus = free_energy(sigma, mu, theta + h, cfg)?;
    let f_minus = free_energy(sigma, mu, theta - h, cfg)?;
    let (_, report) = solve_el(sigma, mu, theta, cfg)?;
    if !report.converged {
        return Err(Error::NonConvergence { theta });
    }
    let centered = (f_plus - f_minus) / (2.0 * h);
    Ok(DerivativeCheck {
        centered_difference: centered,
        t_sigma: report.t_sigma,
        gap: (centered - report.t_sigma).abs(),
    })
}

/// Best converged solve over the canonical initializations; used by the
/// conditioned problem, where the target density must be read off the
/// free-energy-maximizing branch.
fn best_solve(
    sigma: &Pattern,
    mu: &Permuton,
    theta: f64,
    cfg: &SolveConfig,
) -> Result<(DensityField, SolveReport)> {
    let base = FieldBase::for_measure(mu, cfg.grid_m, cfg.bins)?;
    let mut best: Option<(DensityField, SolveReport)> = None;
    for init in canonical_inits(&base) {
        let mut c = cfg.clone();
        c.init = Init::Custom(init);
        let (field, report) = solve_el(sigma, mu, theta, &c)?;
        if !report.converged {
            continue;
        }
        if best
            .as_ref()
            .map(|(_, b)| report.free_energy > b.free_energy)
            .unwrap_or(true)
        {
            best = Some((field, report));
        }
    }
    best.ok_or(Error::NonConvergence { theta })
}

/// Exponent bound for the bisection bracket on `theta_hat`.
const THETA_BRACKET_MAX: f64 = 64.0;

/// The tilt `theta_hat(delta)` whose Gibbs optimizer has pattern density
/// `delta`: bisection on the nondecreasing map `theta -> t_sigma(nu_theta)`
/// along the free-energy-maximizing branch. The bracket grows geometrically
/// from `[0, 1]` up to `|theta| = 64`; a `delta` outside the attainable
/// range errors out, reporting the bracket actually reached.
pub fn theta_hat(
    sigma: &Pattern,
    mu: &Permuton,
    delta: f64,
    delta_tol: f64,
    cfg: &SolveConfig,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!(
            "target density {delta} outside [0, 1]"
        )));
    }
    if delta_tol <= 0.0 {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let t_at = |theta: f64| -> Result<f64> { Ok(best_solve(sigma, mu, theta, cfg)?.1.t_sigma) };
    let t0 = t_at(0.0)?;
    if (delta - t0).abs() <= delta_tol {
        return Ok(0.0);
    }
    // geometric bracket growth in the relevant direction
    let (mut lo, mut hi);
    if delta > t0 {
        lo = 0.0;
        hi = 1.0;
        let mut t_hi = t_at(hi)?;
        while t_hi < delta && hi < THETA_BRACKET_MAX {
            lo = hi;
            hi = (hi * 2.0).min(THETA_BRACKET_MAX);
            t_hi = t_at(hi)?;
        }
        if t_hi < delta {
            return Err(Error::DeltaUnattainable {
                delta,
                theta_reached: hi,
                t_reached: t_hi,
            });
        }
    } else {
        hi = 0.0;
        lo = -1.0;
        let mut t_lo = t_at(lo)?;
        while t_lo > delta && lo > -THETA_BRACKET_MAX {
            hi = lo;
            lo = (lo * 2.0).max(-THETA_BRACKET_MAX);
            t_lo = t_at(lo)?;
        }
        if t_lo > delta {
            return Err(Error::DeltaUnattainable {
                delta,
                theta_reached: lo,
                t_reached: t_lo,
            });
        }
    }
    // bisection on t(theta)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let t_mid = t_at(mid)?;
        if (t_mid - delta).abs() <= delta_tol {
            return Ok(mid);
        }
        if t_mid < delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            return Ok(0.5 * (lo + hi));
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Output of [`conditional_optimizer`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalReport {
    pub theta_hat: f64,
    /// Rate value `G = D(nu | mu)` of the conditioned optimizer.
    pub g_value: f64,
    pub t_sigma: f64,
    pub solve: SolveReport,
}

/// The optimizer of the conditioned problem: the measure a mu-random
/// permutation concentrates on when conditioned to have pattern density
/// `delta`. It is the Gibbs optimizer at `theta_hat(delta)`, and its rate
/// value is `G = D(nu | mu)`.
pub fn conditional_optimizer(
    sigma: &Pattern,
    mu: &Permuton,
    delta: f64,
    delta_tol: f64,
    cfg: &SolveConfig,
) -> Result<(DensityField, ConditionalReport)> {
    let th = theta_hat(sigma, mu, delta, delta_tol, cfg)?;
    let (field, solve) = best_solve(sigma, mu, th, cfg)?;
    let g_value = field.kl();
    let report = ConditionalReport {
        theta_hat: th,
        g_value,
        t_sigma: solve.t_sigma,
        solve,
    };
    Ok((field, report))
}

/// One distinct fixed point found by [`multi_start_optimize`].
#[derive(Debug, Clone)]
pub struct OptimizerCluster {
    /// Representative field (the best-objective member).
    pub field: DensityField,
    pub report: SolveReport,
    /// Number of starts that landed in this cluster.
    pub multiplicity: usize,
    /// Diagonal-block separation flag, filled in by the models layer for
    /// the inversion pattern; `None` until then.
    pub separated: Option<bool>,
}

/// Output of [`multi_start_optimize`]: distinct converged fixed points,
/// sorted by objective value (best first).
#[derive(Debug, Clone)]
pub struct MultiStartReport {
    pub clusters: Vec<OptimizerCluster>,
    /// Number of starts that failed to converge.
    pub failed: usize,
}

/// Run the solver from every initialization and cluster the converged
/// results by `L1` distance (radius `cfg.cluster_radius()`), sorting
/// clusters by objective value.
pub fn multi_start_optimize(
    sigma: &Pattern,
    mu: &Permuton,
    theta: f64,
    inits: Vec<DensityField>,
    cfg: &SolveConfig,
) -> Result<MultiStartReport> {
    if inits.is_empty() {
        return Err(Error::InvalidInput(
            "multi-start needs at least one initialization".into(),
        ));
    }
    let radius = cfg.cluster_radius();
    let mut clusters: Vec<OptimizerCluster> = Vec::new();
    let mut failed = 0usize;
    for init in inits {
        let mut c = cfg.clone();
        c.init = Init::Custom(init);
        let (field, report) = solve_el(sigma, mu, theta, &c)?;
        if !report.converged {
            failed += 1;
            continue;
        }
        let mut placed = false;
        for cl in clusters.iter_mut() {
            if cl.field.l1_distance(&field)? <= radius {
                cl.multiplicity += 1;
                if report.free_energy > cl.report.free_energy {
                    cl.field = field.clone();
                    cl.report = report.clone();
                }
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push(OptimizerCluster {
                field,
                report,
                multiplicity: 1,
                separated: None,
            });
        }
    }
    clusters.sort_by(|a, b| {
        b.report
            .free_energy
            .partial_cmp(&a.report.free_energy)
            .unwrap()
    });
    Ok(MultiStartReport { clusters, failed })
}
