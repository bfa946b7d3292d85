//! Named measure families and structural diagnostics.
//!
//! This module collects the concrete models that the rest of the library is
//! exercised against, plus the structure tests used to classify optimizers:
//!
//! * builders for the broken anti-diagonal `xi`, its halves `xi11`/`xi22`,
//!   the two-block grids `mu_ell(l)`, the anti-diagonal rectangle family
//!   `rect_permuton(z)`, and inflations of square-free patterns;
//! * closed forms for the inversion-tilted Gibbs problem on `xi`
//!   (a scalar fixed point of `x = tanh(theta * x)`) and for its
//!   conditioned optimizers;
//! * the explicit Mallows density together with residual checks that it
//!   solves the Euler-Lagrange equation for the inversion pattern;
//! * the conditional-constancy test for pair weights, support diagnostics
//!   for anti-diagonal concentration, a compression identity for relative
//!   entropy against `mu_ell`, a quadrant-separation test, and a phase scan
//!   over `(l, delta)` grids.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{mix, Atom, Grid, Permuton, Rect, Segment};
use crate::patterns::{
    clip_halfplane, pair_weight_21, polygon_area, t_sigma_measure_exact, Pattern, Permutation,
    Point,
};
use crate::variational::{
    canonical_inits, multi_start_optimize, theta_hat, FieldBase, MultiStartReport, SolveConfig,
};

/// Mass threshold below which a point is treated as lying outside the
/// support when fitting the lower-left frontier.
const FRONTIER_EPS: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Named measures
// ---------------------------------------------------------------------------

/// Positive root of `x = tanh(theta * x)`.
///
/// Returns `0` for `theta <= 1` (the only fixed point); for `theta > 1` the
/// unique positive root, located by bisection to absolute accuracy `1e-15`.
pub fn curie_weiss_root(theta: f64) -> f64 {
    if !theta.is_finite() {
        return if theta > 0.0 { 1.0 } else { 0.0 };
    }
    if theta <= 1.0 {
        return 0.0;
    }
    // f(x) = tanh(theta x) - x is positive just right of 0 (slope theta - 1)
    // and negative at 1, with a single sign change on (0, 1].
    let f = |x: f64| (theta * x).tanh() - x;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Anti-diagonal segment of the lower-left quadrant: `(0, 1/2) -> (1/2, 0)`
/// with full weight.
pub fn xi11() -> Permuton {
    let seg = Segment::new((0.0, 0.5), (0.5, 0.0), 1.0).expect("valid segment");
    Permuton::segments(vec![seg]).expect("valid permuton")
}

/// Anti-diagonal segment of the upper-right quadrant: `(1/2, 1) -> (1, 1/2)`
/// with full weight.
pub fn xi22() -> Permuton {
    let seg = Segment::new((0.5, 1.0), (1.0, 0.5), 1.0).expect("valid segment");
    Permuton::segments(vec![seg]).expect("valid permuton")
}

/// The broken anti-diagonal: equal mixture of [`xi11`] and [`xi22`].
pub fn xi() -> Permuton {
    mix(vec![xi11(), xi22()], vec![0.5, 0.5]).expect("valid mixture")
}

/// Two-block grid on `{[0,1/2], [1/2,1]}^2` with density `1 + l` on the
/// diagonal blocks and `1 - l` off the diagonal. Requires `l` in `[0, 1]`.
pub fn mu_ell(ell: f64) -> Result<Permuton> {
    if !(0.0..=1.0).contains(&ell) || !ell.is_finite() {
        return Err(Error::InvalidInput(format!(
            "block parameter must lie in [0, 1], got {ell}"
        )));
    }
    Permuton::grid(vec![vec![1.0 + ell, 1.0 - ell], vec![1.0 - ell, 1.0 + ell]])
}

/// Global maximizers of `theta * t_21 - relative entropy against xi`.
///
/// For `theta <= 1` the unique maximizer is `xi` itself. For `theta > 1`
/// the symmetry between the two anti-diagonal halves breaks and the two
/// maximizers put masses `(1 + m)/2` and `(1 - m)/2` on the halves, where
/// `m = curie_weiss_root(theta)`; the first entry favors the lower-left
/// half and the second is its reflection.
pub fn xi_gibbs_optimizers(theta: f64) -> Vec<Permuton> {
    let m = curie_weiss_root(theta);
    if m == 0.0 {
        return vec![xi()];
    }
    let p = 0.5 * (1.0 + m);
    let lower = mix(vec![xi11(), xi22()], vec![p, 1.0 - p]).expect("valid mixture");
    let upper = mix(vec![xi11(), xi22()], vec![1.0 - p, p]).expect("valid mixture");
    vec![lower, upper]
}

/// Report for a conditioned optimizer over the `xi` family.
#[derive(Debug, Clone)]
pub struct XiConditional {
    /// Mass on the favored anti-diagonal half.
    pub p: f64,
    /// Inversion density of the optimizer, `p^2 + (1-p)^2 + ...` reduced to
    /// the requested `delta`.
    pub t_sigma: f64,
    /// Relative entropy of the optimizer against `xi`.
    pub g_value: f64,
    /// The two optimizers (reflections of each other).
    pub optimizers: Vec<Permuton>,
}

/// Optimizers of relative entropy against `xi` subject to an inversion
/// density of at least `delta`, for `delta` in `(1/2, 1)`.
///
/// Mixtures `p * xi11 + (1-p) * xi22` have inversion density
/// `p^2 + (1-p)^2 + 2p(1-p) * 1/2 = (1 + (2p-1)^2) / 2`, so hitting `delta`
/// requires `p = (1 + sqrt(2 delta - 1)) / 2`, and the entropy cost is
/// `p ln p + (1-p) ln (1-p) + ln 2`.
pub fn xi_conditional_optimizers(delta: f64) -> Result<XiConditional> {
    if !(delta > 0.5 && delta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "conditioned inversion density must lie in (1/2, 1), got {delta}"
        )));
    }
    let p = 0.5 * (1.0 + (2.0 * delta - 1.0).sqrt());
    let q = 1.0 - p;
    let g_value = p * p.ln() + q * q.ln() + LN_2;
    let lower = mix(vec![xi11(), xi22()], vec![p, q]).expect("valid mixture");
    let upper = mix(vec![xi11(), xi22()], vec![q, p]).expect("valid mixture");
    Ok(XiConditional {
        p,
        t_sigma: delta,
        g_value,
        optimizers: vec![lower, upper],
    })
}

// ---------------------------------------------------------------------------
// Mallows density
// ---------------------------------------------------------------------------

/// Closed-form limit density of Mallows permutations, tilted so that it
/// maximizes `theta * t_21 - relative entropy` over all permutons.
///
/// With `b = 2 theta`, the density at `(x, y)` is
/// `(b/2) sinh(b/2) / (exp(-b/4) cosh(b (x-y)/2) - exp(b/4) cosh(b (x+y-1)/2))^2`.
/// At `theta = 0` it degenerates to the uniform density `1`.
pub fn mallows_density(theta: f64, x: f64, y: f64) -> f64 {
    if theta == 0.0 {
        return 1.0;
    }
    let b = 2.0 * theta;
    let num = 0.5 * b * (0.5 * b).sinh();
    let den = (-0.25 * b).exp() * (0.5 * b * (x - y)).cosh()
        - (0.25 * b).exp() * (0.5 * b * (x + y - 1.0)).cosh();
    num / (den * den)
}

/// Grid discretization of [`mallows_density`] sampled at cell centers on an
/// `m x m` grid and renormalized to total mass one.
pub fn mallows_grid(theta: f64, m: usize) -> Result<Permuton> {
    if m == 0 {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    let mf = m as f64;
    let mut masses = Vec::with_capacity(m * m);
    for ix in 0..m {
        let x = (ix as f64 + 0.5) / mf;
        for iy in 0..m {
            let y = (iy as f64 + 0.5) / mf;
            masses.push(mallows_density(theta, x, y) / (mf * mf));
        }
    }
    // Center sampling is a quadrature, not an exact integral; renormalize so
    // the measure loads to one exactly.
    let total: f64 = masses.iter().sum();
    for v in &mut masses {
        *v /= total;
    }
    Ok(Permuton::Grid(Grid::from_masses(m, masses)?))
}

/// Maximum interior residual of the differential identity
/// `d^2/dxdy log rho = -4 theta rho` satisfied by [`mallows_density`].
///
/// The mixed second derivative is estimated by the centered finite
/// difference with step `h` on the interior lattice `{i/m : 0 < i < m}^2`.
/// Returns the largest absolute residual; exact zero at `theta = 0`.
pub fn mallows_el_residual(theta: f64, m: usize, h: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidInput("lattice resolution must be at least 2".into()));
    }
    if !h.is_finite() || h <= 0.0 || 2.0 * h >= 1.0 / m as f64 {
        return Err(Error::InvalidInput(format!(
            "difference step must satisfy 0 < 2h < 1/m, got h = {h}"
        )));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    let log_rho = |x: f64, y: f64| mallows_density(theta, x, y).ln();
    let mut worst = 0.0_f64;
    for i in 1..m {
        let x = i as f64 / m as f64;
        for j in 1..m {
            let y = j as f64 / m as f64;
            let mixed = (log_rho(x + h, y + h) - log_rho(x + h, y - h) - log_rho(x - h, y + h)
                + log_rho(x - h, y - h))
                / (4.0 * h * h);
            let residual = (mixed + 4.0 * theta * mallows_density(theta, x, y)).abs();
            worst = worst.max(residual);
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Rectangle family and pattern inflations
// ---------------------------------------------------------------------------

/// Permuton supported on the boundary of the rectangle with corners
/// `(0, z)`, `(z, 0)`, `(1, 1-z)`, `(1-z, 1)`, built from four slope
/// `+-1` segments with weights chosen to give uniform marginals.
///
/// Its pair weight for the inversion pattern is constant and equal to `z`
/// on the support. `z = 0` and `z = 1` degenerate to the main diagonal and
/// the full anti-diagonal respectively.
pub fn rect_permuton(z: f64) -> Result<Permuton> {
    if !(0.0..=1.0).contains(&z) || !z.is_finite() {
        return Err(Error::InvalidInput(format!(
            "rectangle parameter must lie in [0, 1], got {z}"
        )));
    }
    let a = (0.0, z);
    let b = (z, 0.0);
    let c = (1.0, 1.0 - z);
    let d = (1.0 - z, 1.0);
    let segs = vec![
        Segment::new(a, b, 0.5 * z)?,
        Segment::new(b, c, 0.5 * (1.0 - z))?,
        Segment::new(d, c, 0.5 * z)?,
        Segment::new(a, d, 0.5 * (1.0 - z))?,
    ];
    Permuton::segments(segs)
}

/// Inversion degree of each entry: positions `j` with `(j - i)` and
/// `(eta(j) - eta(i))` of opposite sign, counted for every `i`.
fn inversion_degrees(eta: &Permutation) -> Vec<usize> {
    let v = eta.values();
    let n = eta.n();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    j != i && ((j > i) != (v[j] > v[i]))
                })
                .count()
        })
        .collect()
}

/// Whether every entry of `eta` participates in the same number of
/// inversions. These are exactly the patterns whose inflations below have a
/// constant pair weight.
pub fn sstar_check(eta: &Permutation) -> bool {
    let degs = inversion_degrees(eta);
    degs.iter().all(|&d| d == degs[0])
}

/// Substitution square of `eta`: the permutation of size `n^2` whose value
/// at block `b`, offset `i` (both zero-based) is `(eta(b) - 1) n + eta(i)`.
///
/// Constant-inversion-degree patterns are closed under this operation.
pub fn substitution_square(eta: &Permutation) -> Permutation {
    let v = eta.values();
    let n = eta.n();
    let mut out = Vec::with_capacity(n * n);
    for b in 0..n {
        for i in 0..n {
            out.push((v[b] - 1) * n + v[i]);
        }
    }
    Permutation::new(out).expect("substitution square is a valid permutation")
}

/// Inflation of a constant-inversion-degree pattern by the rectangle family:
/// each point `(i, eta(i))` of `eta` is replaced by a copy of
/// [`rect_permuton`]`(z)` scaled into its `1/n x 1/n` cell, with weight `1/n`.
///
/// The result has a constant inversion pair weight `(k + z) / n`, where `k`
/// is the common inversion degree of `eta`.
pub fn sstar_inflate(eta: &Permutation, z: f64) -> Result<Permuton> {
    if !sstar_check(eta) {
        return Err(Error::InvalidInput(
            "inflation requires a constant-inversion-degree pattern".into(),
        ));
    }
    let cell = rect_permuton(z)?;
    let base = cell
        .flatten_segments()
        .expect("rectangle permuton is segment-supported");
    let n = eta.n();
    let nf = n as f64;
    let mut segs = Vec::with_capacity(base.len() * n);
    for (i, &val) in eta.values().iter().enumerate() {
        let (cx, cy) = (i as f64, (val - 1) as f64);
        for s in &base {
            segs.push(Segment::new(
                ((cx + s.from.0) / nf, (cy + s.from.1) / nf),
                ((cx + s.to.0) / nf, (cy + s.to.1) / nf),
                s.weight / nf,
            )?);
        }
    }
    Permuton::segments(segs)
}

// ---------------------------------------------------------------------------
// Conditional constancy of the pair weight
// ---------------------------------------------------------------------------

/// Outcome of [`cc_test_21`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CcVerdict {
    /// All sampled pair weights agree with their mean within tolerance.
    ConditionallyConstant {
        /// The common pair-weight value (support mean).
        constant: f64,
    },
    /// The pair weight varies over the support.
    NotConstant {
        /// Largest deviation of a sampled weight from the support mean.
        max_deviation: f64,
        /// Sample points achieving the extreme weights `(argmax, argmin)`.
        witnesses: Vec<Point>,
    },
}

/// Report from the conditional-constancy test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcReport {
    /// Number of support points sampled.
    pub samples: usize,
    /// Mean pair weight over the samples.
    pub mean: f64,
    /// Largest absolute deviation from the mean.
    pub max_deviation: f64,
    /// Classification at the requested tolerance.
    pub verdict: CcVerdict,
}

/// Deterministic support sample: cell atoms are subdivided to roughly
/// `resolution` cells per unit length and sampled at sub-cell centers;
/// segment atoms are sampled at `resolution` parameter midpoints.
fn support_samples(mu: &Permuton, resolution: usize) -> Vec<Point> {
    let mut pts = Vec::new();
    for atom in mu.atoms() {
        match atom {
            Atom::Cell { rect, .. } => {
                let w = rect.x_hi - rect.x_lo;
                let h = rect.y_hi - rect.y_lo;
                let nx = ((w * resolution as f64).ceil() as usize).max(1);
                let ny = ((h * resolution as f64).ceil() as usize).max(1);
                for i in 0..nx {
                    for j in 0..ny {
                        pts.push((
                            rect.x_lo + (i as f64 + 0.5) * w / nx as f64,
                            rect.y_lo + (j as f64 + 0.5) * h / ny as f64,
                        ));
                    }
                }
            }
            Atom::Seg(s) => {
                for i in 0..resolution {
                    pts.push(s.point_at((i as f64 + 0.5) / resolution as f64));
                }
            }
        }
    }
    pts
}

/// Test whether the inversion pair weight is constant over the support
/// of `mu`.
///
/// Samples the support deterministically at the given resolution, evaluates
/// the pair weight at each sample, and classifies the measure as
/// conditionally constant when every sample agrees with the support mean
/// within `tol`.
pub fn cc_test_21(mu: &Permuton, tol: f64, resolution: usize) -> Result<CcReport> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if resolution == 0 {
        return Err(Error::InvalidInput("resolution must be positive".into()));
    }
    let pts = support_samples(mu, resolution);
    if pts.is_empty() {
        return Err(Error::InvalidInput("measure has no support atoms".into()));
    }
    let weights: Vec<f64> = pts.iter().map(|&p| pair_weight_21(mu, p)).collect();
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    let mut max_deviation = 0.0_f64;
    let (mut hi_idx, mut lo_idx) = (0_usize, 0_usize);
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[hi_idx] {
            hi_idx = i;
        }
        if w < weights[lo_idx] {
            lo_idx = i;
        }
        max_deviation = max_deviation.max((w - mean).abs());
    }
    let verdict = if max_deviation <= tol {
        CcVerdict::ConditionallyConstant { constant: mean }
    } else {
        CcVerdict::NotConstant {
            max_deviation,
            witnesses: vec![pts[hi_idx], pts[lo_idx]],
        }
    };
    Ok(CcReport {
        samples: pts.len(),
        mean,
        max_deviation,
        verdict,
    })
}

// ---------------------------------------------------------------------------
// Support diagnostics
// ---------------------------------------------------------------------------

/// Least-squares fit of the lower-left support frontier to a line
/// `x + y = b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierFit {
    /// Fitted intercept `b` (mean of `x + y` over frontier samples).
    pub intercept: f64,
    /// Root-mean-square residual of `x + y - b` over frontier samples.
    pub rms_residual: f64,
    /// Number of support samples classified as frontier points.
    pub samples: usize,
}

/// Geometry diagnostics for anti-diagonal support structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportDiagnostics {
    /// Whether the raster of the measure contains a `2 x 2` block of
    /// positive cells, i.e. evidence of two-dimensional support.
    pub has_interior_mass: bool,
    /// Fit of the support points with vanishing lower-left mass to a
    /// slope `-1` line, when any such points exist.
    pub frontier: Option<FrontierFit>,
    /// Exact mass of the open region `{x + y < b}` below the fitted
    /// frontier; zero when no frontier was fitted.
    pub mass_below_frontier: f64,
}

/// Exact mass of the open half-plane `{(x, y) : x + y < b}` under `mu`.
fn mass_below_line(mu: &Permuton, b: f64) -> f64 {
    let mut acc = 0.0;
    for atom in mu.atoms() {
        match atom {
            Atom::Cell { rect, mass } => {
                let poly = vec![
                    (rect.x_lo, rect.y_lo),
                    (rect.x_hi, rect.y_lo),
                    (rect.x_hi, rect.y_hi),
                    (rect.x_lo, rect.y_hi),
                ];
                let clipped = clip_halfplane(&poly, 1.0, 1.0, b);
                let area = (rect.x_hi - rect.x_lo) * (rect.y_hi - rect.y_lo);
                if area > 0.0 {
                    acc += mass * polygon_area(&clipped) / area;
                }
            }
            Atom::Seg(s) => {
                let s0 = s.from.0 + s.from.1;
                let ds = s.dx() + s.dy();
                if ds.abs() <= 1e-9 {
                    // The segment is parallel to the line: all or nothing,
                    // and mass exactly on the line does not count as below.
                    if s0 < b - 1e-12 {
                        acc += s.weight;
                    }
                } else {
                    let t_star = ((b - s0) / ds).clamp(0.0, 1.0);
                    // ds > 0 along the canonical orientation, so the portion
                    // below the line is the prefix [0, t_star).
                    acc += s.weight * t_star;
                }
            }
        }
    }
    acc
}

/// Diagnose whether `mu` concentrates on an anti-diagonal frontier.
///
/// Rasterizes at `resolution` to detect interior (two-dimensional) mass,
/// collects support samples whose lower-left box mass is below `1e-6`,
/// fits them to a line `x + y = b`, and reports the exact mass strictly
/// below the fitted line (zero for a measure supported on or above it).
pub fn support_diagnostics_21(mu: &Permuton, resolution: usize) -> Result<SupportDiagnostics> {
    if resolution == 0 {
        return Err(Error::InvalidInput("resolution must be positive".into()));
    }
    let raster = mu.rasterize(resolution);
    let m = resolution;
    let mut has_interior_mass = false;
    'outer: for ix in 0..m.saturating_sub(1) {
        for iy in 0..m.saturating_sub(1) {
            if raster.density(ix, iy) > 0.0
                && raster.density(ix + 1, iy) > 0.0
                && raster.density(ix, iy + 1) > 0.0
                && raster.density(ix + 1, iy + 1) > 0.0
            {
                has_interior_mass = true;
                break 'outer;
            }
        }
    }

    let frontier_pts: Vec<Point> = support_samples(mu, resolution)
        .into_iter()
        .filter(|&(x, y)| {
            mu.box_mass(&Rect {
                x_lo: 0.0,
                x_hi: x,
                y_lo: 0.0,
                y_hi: y,
            }) <= FRONTIER_EPS
        })
        .collect();
    let frontier = if frontier_pts.is_empty() {
        None
    } else {
        let n = frontier_pts.len() as f64;
        let intercept = frontier_pts.iter().map(|&(x, y)| x + y).sum::<f64>() / n;
        let rms = (frontier_pts
            .iter()
            .map(|&(x, y)| (x + y - intercept).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        Some(FrontierFit {
            intercept,
            rms_residual: rms,
            samples: frontier_pts.len(),
        })
    };
    let mass_below_frontier = frontier
        .as_ref()
        .map(|f| mass_below_line(mu, f.intercept))
        .unwrap_or(0.0);
    Ok(SupportDiagnostics {
        has_interior_mass,
        frontier,
        mass_below_frontier,
    })
}

// ---------------------------------------------------------------------------
// Compression identity for relative entropy against mu_ell
// ---------------------------------------------------------------------------

/// Both sides of the compression identity evaluated by
/// [`reflect_identity_check`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectIdentity {
    /// `D(nu | mu_l) - D(nu~ | mu_l)` where `nu~` compresses `nu` into the
    /// lower-left quadrant.
    pub lhs: f64,
    /// `nu(off-diagonal blocks) * (ln(1+l) - ln(1-l)) - ln 4`.
    pub rhs: f64,
    /// `|lhs - rhs|`.
    pub gap: f64,
    /// Inversion density of `nu` (equal to that of the compression).
    pub t_before: f64,
    /// Inversion density of the compressed measure.
    pub t_after: f64,
}

/// Verify the entropy-compression identity for a grid-supported `nu`
/// against the two-block base `mu_ell(l)`, `l` in `[0, 1)`.
///
/// The compression pushes `nu` forward under `(x, y) -> (x/2, y/2)`,
/// doubling the grid resolution and moving all mass into the lower-left
/// quadrant. It changes the relative entropy by exactly
/// `nu(off-diagonal) * (ln(1+l) - ln(1-l)) - ln 4` and preserves every
/// pattern density.
pub fn reflect_identity_check(nu: &Permuton, ell: f64) -> Result<ReflectIdentity> {
    if !(0.0..1.0).contains(&ell) {
        return Err(Error::InvalidInput(format!(
            "block parameter must lie in [0, 1) for a finite identity, got {ell}"
        )));
    }
    let grid = nu.common_grid()?.ok_or_else(|| {
        Error::InvalidInput("compression identity requires a grid-supported measure".into())
    })?;
    // Work at an even resolution so quadrant boundaries align with cells.
    let grid = if grid.resolution() % 2 == 0 {
        grid
    } else {
        grid.refine(2 * grid.resolution())
    };
    let m = grid.resolution();
    let nu_even = Permuton::Grid(grid.clone());

    // Compressed measure on a 2m-grid: cell (i, j) of nu lands in (i, j) of
    // the refined lower-left quadrant with its full mass.
    let m2 = 2 * m;
    let mut masses = vec![0.0; m2 * m2];
    for i in 0..m {
        for j in 0..m {
            masses[i * m2 + j] = grid.cell_mass(i, j);
        }
    }
    let compressed = Permuton::Grid(Grid::from_masses(m2, masses)?);

    let base = mu_ell(ell)?;
    let lhs = nu_even.kl_divergence(&base)? - compressed.kl_divergence(&base)?;
    let off = nu_even.box_mass(&Rect::upper_left()) + nu_even.box_mass(&Rect::lower_right());
    let rhs = off * ((1.0 + ell).ln() - (1.0 - ell).ln()) - (4.0_f64).ln();
    let sigma = Pattern::parse("21").expect("valid pattern");
    let t_before = t_sigma_measure_exact(&sigma, &nu_even)?;
    let t_after = t_sigma_measure_exact(&sigma, &compressed)?;
    Ok(ReflectIdentity {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        t_before,
        t_after,
    })
}

// ---------------------------------------------------------------------------
// Quadrant separation
// ---------------------------------------------------------------------------

/// Quadrant masses and the separation test derived from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmatReport {
    /// Mass of the lower-left quadrant `[0, 1/2]^2`.
    pub d11: f64,
    /// Mass of the upper-right quadrant `[1/2, 1]^2`.
    pub d22: f64,
    /// Combined mass of the two off-diagonal quadrants.
    pub offdiag: f64,
    /// Mass that the uniform projection assigns to the band
    /// `([0, x] x [x, 1]) u ([x, 1] x [0, x])` at `x = d11`.
    pub band_mass: f64,
    /// Whether `band_mass <= 4 * offdiag` holds within the projection's
    /// resolution slack.
    pub band_bound_holds: bool,
    /// Whether `|d11 - d22| > 8 * offdiag`, the certificate that the measure
    /// favors one diagonal quadrant.
    pub separated: bool,
}

/// Quadrant-separation test at the given projection resolution.
///
/// Projects `nu` to the nearest permuton with exactly uniform marginals,
/// measures the band around the quadrant split, and checks the two
/// inequalities that certify a dominant diagonal block.
pub fn dmat_check(nu: &Permuton, resolution: usize) -> Result<DmatReport> {
    if resolution < 2 {
        return Err(Error::InvalidInput("resolution must be at least 2".into()));
    }
    let d11 = nu.box_mass(&Rect::lower_left());
    let d22 = nu.box_mass(&Rect::upper_right());
    let offdiag = nu.box_mass(&Rect::upper_left()) + nu.box_mass(&Rect::lower_right());
    let gamma = nu.project_uniform(resolution)?;
    let x = d11;
    let band_mass = gamma.box_mass(&Rect {
        x_lo: 0.0,
        x_hi: x,
        y_lo: x,
        y_hi: 1.0,
    }) + gamma.box_mass(&Rect {
        x_lo: x,
        x_hi: 1.0,
        y_lo: 0.0,
        y_hi: x,
    });
    let slack = 4.0 / resolution as f64;
    Ok(DmatReport {
        d11,
        d22,
        offdiag,
        band_mass,
        band_bound_holds: band_mass <= 4.0 * offdiag + slack,
        separated: (d11 - d22).abs() > 8.0 * offdiag,
    })
}

/// Fill in the `separated` flag of every cluster in a multi-start report
/// using [`dmat_check`] at the given resolution.
pub fn annotate_separation(report: &mut MultiStartReport, resolution: usize) -> Result<()> {
    for cluster in &mut report.clusters {
        let nu = cluster.field.to_permuton()?;
        let check = dmat_check(&nu, resolution)?;
        cluster.separated = Some(check.separated);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Phase scan
// ---------------------------------------------------------------------------

/// Configuration for [`phase_scan`].
#[derive(Debug, Clone)]
pub struct PhaseScanConfig {
    /// Solver settings shared by every row. The default widens the cluster
    /// radius to `1e-5`: distinct starts converge to the same optimizer only
    /// up to the solver's stopping error, which near a transition sits a few
    /// orders of magnitude above the fixed-point tolerance.
    pub solve: SolveConfig,
    /// Tolerance passed to the tilt calibration for each `delta`.
    pub delta_tol: f64,
    /// Projection resolution for the separation test.
    pub dmat_resolution: usize,
}

impl Default for PhaseScanConfig {
    fn default() -> Self {
        PhaseScanConfig {
            solve: SolveConfig {
                cluster_radius: Some(1e-5),
                ..SolveConfig::default()
            },
            delta_tol: 1e-6,
            dmat_resolution: 256,
        }
    }
}

/// Summary of one optimizer cluster in a scan row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Pattern density achieved by the cluster representative.
    pub t_sigma: f64,
    /// Relative entropy of the representative against the row's base.
    pub g_value: f64,
    /// Free energy of the representative.
    pub free_energy: f64,
    /// Number of starts that converged into this cluster.
    pub multiplicity: usize,
    /// Lower-left quadrant mass.
    pub d11: f64,
    /// Upper-right quadrant mass.
    pub d22: f64,
    /// Off-diagonal quadrant mass.
    pub offdiag: f64,
    /// Quadrant-separation verdict for the representative.
    pub separated: bool,
}

/// One `(l, delta)` row of a phase scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseScanRow {
    /// Block parameter of the base measure `mu_ell(l)`.
    pub ell: f64,
    /// Conditioned inversion density.
    pub delta: f64,
    /// Whether the calibration reached `delta` within tolerance. When it did
    /// not, the remaining fields describe the optimizers at the edge of the
    /// searched tilt bracket.
    pub attainable: bool,
    /// Calibrated tilt (or the bracket edge if unattainable).
    pub theta: f64,
    /// Pattern density actually achieved at `theta`.
    pub t_achieved: f64,
    /// Rate value: relative entropy of the best optimizer against the base.
    pub g_value: f64,
    /// Number of distinct optimizer clusters found by multi-start.
    pub clusters: usize,
    /// Whether the best optimizer passes quadrant separation.
    pub separated: bool,
    /// Upper bound on off-diagonal mass implied by the compression identity;
    /// `None` when `l = 0` (no constraint).
    pub offdiag_bound: Option<f64>,
    /// Upper bound `sqrt((1 - delta) / 2)` on the smaller diagonal block.
    pub min_block_bound: f64,
    /// Whether every cluster satisfies both bounds (within `1e-9`).
    pub bounds_hold: bool,
    /// Per-cluster details, sorted by decreasing free energy.
    pub cluster_summaries: Vec<ClusterSummary>,
}

/// Compute a single row of the phase scan; see [`phase_scan`].
pub fn phase_scan_row(ell: f64, delta: f64, cfg: &PhaseScanConfig) -> Result<PhaseScanRow> {
    if !(0.0..=1.0).contains(&ell) {
        return Err(Error::InvalidInput(format!(
            "block parameter must lie in [0, 1], got {ell}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "conditioned density must lie in (0, 1), got {delta}"
        )));
    }
    let mu = mu_ell(ell)?;
    let sigma = Pattern::parse("21").expect("valid pattern");
    let (theta, attainable) = match theta_hat(&sigma, &mu, delta, cfg.delta_tol, &cfg.solve) {
        Ok(theta) => (theta, true),
        Err(Error::DeltaUnattainable { theta_reached, .. }) => (theta_reached, false),
        Err(e) => return Err(e),
    };
    let base = FieldBase::for_measure(&mu, cfg.solve.grid_m, cfg.solve.bins)?;
    let mut multi = multi_start_optimize(&sigma, &mu, theta, canonical_inits(&base), &cfg.solve)?;
    if multi.clusters.is_empty() {
        return Err(Error::NonConvergence { theta });
    }
    annotate_separation(&mut multi, cfg.dmat_resolution)?;

    let offdiag_bound = if ell > 0.0 {
        Some((4.0_f64).ln() / ((1.0 + ell).ln() - (1.0 - ell).ln()))
    } else {
        None
    };
    let min_block_bound = (0.5 * (1.0 - delta)).sqrt();
    let mut bounds_hold = true;
    let mut summaries = Vec::with_capacity(multi.clusters.len());
    for cluster in &multi.clusters {
        let nu = cluster.field.to_permuton()?;
        let d11 = nu.box_mass(&Rect::lower_left());
        let d22 = nu.box_mass(&Rect::upper_right());
        let offdiag = nu.box_mass(&Rect::upper_left()) + nu.box_mass(&Rect::lower_right());
        let off_ok = offdiag_bound.is_none_or(|b| offdiag <= b + 1e-9);
        let block_ok = d11.min(d22) <= min_block_bound + 1e-9;
        bounds_hold &= off_ok && block_ok;
        summaries.push(ClusterSummary {
            t_sigma: cluster.report.t_sigma,
            g_value: cluster.field.kl(),
            free_energy: cluster.report.free_energy,
            multiplicity: cluster.multiplicity,
            d11,
            d22,
            offdiag,
            separated: cluster.separated.unwrap_or(false),
        });
    }
    let best = &summaries[0];
    Ok(PhaseScanRow {
        ell,
        delta,
        attainable,
        theta,
        t_achieved: best.t_sigma,
        g_value: best.g_value,
        clusters: summaries.len(),
        separated: best.separated,
        offdiag_bound,
        min_block_bound,
        bounds_hold,
        cluster_summaries: summaries,
    })
}

/// Scan the `(l, delta)` grid: calibrate the tilt for each pair, run the
/// multi-start optimizer at the calibrated tilt, and report cluster counts,
/// separation verdicts, and the structural bounds for every row.
///
/// Rows whose `delta` cannot be reached inside the searched tilt bracket
/// are marked unattainable and report the optimizers at the bracket edge
/// instead of failing the scan.
pub fn phase_scan(ells: &[f64], deltas: &[f64], cfg: &PhaseScanConfig) -> Result<Vec<PhaseScanRow>> {
    let mut rows = Vec::with_capacity(ells.len() * deltas.len());
    for &ell in ells {
        for &delta in deltas {
            rows.push(phase_scan_row(ell, delta, cfg)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::LCM_CAP;
    use crate::patterns::t_21_measure_exact;
    use crate::variational::{free_energy, solve_el, Init};
    use std::sync::Arc;

    const M2: f64 = 0.9575040240772688;

    fn pat(s: &str) -> Pattern {
        Pattern::parse(s).unwrap()
    }

    fn perm(v: &[usize]) -> Permutation {
        Permutation::new(v.to_vec()).unwrap()
    }

    #[test]
    fn curie_weiss_root_solves_the_scalar_fixed_point() {
        assert_eq!(curie_weiss_root(0.3), 0.0);
        assert_eq!(curie_weiss_root(1.0), 0.0);
        for theta in [1.1, 1.5, 2.0, 5.0, 10.0] {
            let m = curie_weiss_root(theta);
            assert!(m > 0.0 && m < 1.0);
            assert!(
                ((theta * m).tanh() - m).abs() <= 1e-12,
                "fixed point residual too large at theta = {theta}"
            );
        }
        assert!((curie_weiss_root(2.0) - M2).abs() <= 1e-12);
        assert!(curie_weiss_root(10.0) > 0.9999);
    }

    #[test]
    fn xi_is_the_even_mixture_of_its_halves() {
        let xi = xi();
        assert!((t_21_measure_exact(&xi).unwrap() - 0.5).abs() <= 1e-12);
        let again = mix(vec![xi11(), xi22()], vec![0.5, 0.5]).unwrap();
        assert_eq!(xi.tv_distance(&again).unwrap(), 0.0);
        // Each half carries half the mass, concentrated in one quadrant.
        assert!((xi.box_mass(&Rect::lower_left()) - 0.5).abs() <= 1e-12);
        assert!((xi.box_mass(&Rect::upper_right()) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn mu_ell_interpolates_between_uniform_and_diagonal_blocks() {
        assert_eq!(
            mu_ell(0.0).unwrap().tv_distance(&Permuton::lebesgue()).unwrap(),
            0.0
        );
        for ell in [0.0, 0.3, 0.5, 1.0] {
            let mu = mu_ell(ell).unwrap();
            let t = t_21_measure_exact(&mu).unwrap();
            assert!(
                (t - (2.0 - ell) / 4.0).abs() <= 1e-12,
                "inversion density off at ell = {ell}"
            );
        }
        assert!(mu_ell(-0.1).is_err());
        assert!(mu_ell(1.2).is_err());
    }

    #[test]
    fn xi_gibbs_optimizers_match_the_scalar_reduction() {
        // Below the transition there is a single optimizer: xi itself.
        let low = xi_gibbs_optimizers(0.5);
        assert_eq!(low.len(), 1);
        assert_eq!(low[0].tv_distance(&xi()).unwrap(), 0.0);

        // Above it, the two optimizers weight the halves by (1 +- m)/2.
        let high = xi_gibbs_optimizers(2.0);
        assert_eq!(high.len(), 2);
        let p = 0.5 * (1.0 + M2);
        assert!((high[0].box_mass(&Rect::lower_left()) - p).abs() <= 1e-12);
        assert!((high[1].box_mass(&Rect::upper_right()) - p).abs() <= 1e-12);
        // They are reflections of each other.
        assert!(high[0].reflect().tv_distance(&high[1]).unwrap() <= 1e-12);
        // Inversion density matches (1 + m^2)/2.
        let t = t_21_measure_exact(&high[0]).unwrap();
        assert!((t - 0.5 * (1.0 + M2 * M2)).abs() <= 1e-12);
    }

    #[test]
    fn xi_conditional_optimizers_hit_the_requested_density() {
        let report = xi_conditional_optimizers(0.625).unwrap();
        assert!((report.p - 0.75).abs() <= 1e-12);
        let expect_g = 0.75 * 0.75_f64.ln() + 0.25 * 0.25_f64.ln() + LN_2;
        assert!((report.g_value - expect_g).abs() <= 1e-12);
        for opt in &report.optimizers {
            let t = t_21_measure_exact(opt).unwrap();
            assert!((t - 0.625).abs() <= 1e-12);
        }
        // Just above 1/2 the cost vanishes continuously.
        let near = xi_conditional_optimizers(0.5001).unwrap();
        assert!(near.g_value < 1e-3);
        assert!((near.p - 0.5).abs() < 0.02);
        assert!(xi_conditional_optimizers(0.5).is_err());
        assert!(xi_conditional_optimizers(1.0).is_err());
    }

    #[test]
    fn mallows_density_integrates_to_one_with_uniform_marginals() {
        let m = 1000;
        let mf = m as f64;
        for theta in [0.5, 1.0, -1.0, 2.0] {
            let mut total = 0.0;
            let mut row_max_err = 0.0_f64;
            for ix in 0..m {
                let x = (ix as f64 + 0.5) / mf;
                let mut row = 0.0;
                for iy in 0..m {
                    let y = (iy as f64 + 0.5) / mf;
                    row += mallows_density(theta, x, y) / mf;
                }
                total += row / mf;
                row_max_err = row_max_err.max((row - 1.0).abs());
            }
            assert!(
                (total - 1.0).abs() <= 1e-5,
                "normalization off at theta = {theta}: {total}"
            );
            assert!(
                row_max_err <= 1e-4,
                "marginal off at theta = {theta}: {row_max_err}"
            );
        }
    }

    #[test]
    fn mallows_density_degenerates_to_uniform_at_zero_tilt() {
        assert_eq!(mallows_density(0.0, 0.3, 0.9), 1.0);
        for &(x, y) in &[(0.1, 0.2), (0.5, 0.5), (0.9, 0.3)] {
            assert!((mallows_density(1e-8, x, y) - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn mallows_grid_loads_to_one_and_tilts_the_inversion_density() {
        let up = mallows_grid(1.0, 64).unwrap();
        let t_up = t_21_measure_exact(&up).unwrap();
        assert!(t_up > 0.5);
        let down = mallows_grid(-1.0, 64).unwrap();
        let t_down = t_21_measure_exact(&down).unwrap();
        assert!(t_down < 0.5);
        // Reflection symmetry of the closed form: x -> 1 - x swaps the tilt.
        assert!((t_up + t_down - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn mallows_differential_identity_residual_is_small() {
        // The closed form satisfies d^2/dxdy log(rho) = -4 theta rho; the
        // finite-difference residual is O(h^2).
        let rho_max = mallows_density(1.0, 0.0, 1.0);
        let scale = 4.0 * rho_max;
        let res = mallows_el_residual(1.0, 64, 1e-3).unwrap();
        assert!(
            res / scale <= 1e-4,
            "relative residual {} too large",
            res / scale
        );
        assert_eq!(mallows_el_residual(0.0, 64, 1e-3).unwrap(), 0.0);
        // Quadratic decay in the step size.
        let coarse = mallows_el_residual(1.0, 16, 4e-3).unwrap();
        let fine = mallows_el_residual(1.0, 16, 2e-3).unwrap();
        let ratio = coarse / fine;
        assert!(
            (3.0..5.0).contains(&ratio),
            "expected O(h^2) decay, got ratio {ratio}"
        );
    }

    #[test]
    fn mallows_grid_is_near_fixed_under_the_field_operator() {
        use crate::variational::{el_operator, DensityField};
        let m = 32;
        let theta = 1.0;
        let mu = mallows_grid(theta, m).unwrap();
        let base = FieldBase::for_measure(&Permuton::lebesgue(), m, m).unwrap();
        let grid = mu.common_grid().unwrap().unwrap();
        let field = DensityField::from_values(Arc::clone(&base), grid.densities().to_vec()).unwrap();
        let image = el_operator(&pat("21"), theta, &field).unwrap();
        let drift = field.l1_distance(&image).unwrap();
        assert!(
            drift <= 5.0 / m as f64,
            "operator moves the closed form by {drift}"
        );
    }

    #[test]
    fn rect_permuton_has_uniform_marginals_and_constant_weight() {
        for z in [0.25, 0.8] {
            let mu = rect_permuton(z).unwrap();
            let (fx, fy) = mu.marginal_cdfs();
            assert!(fx.max_deviation_from_identity() <= 1e-12);
            assert!(fy.max_deviation_from_identity() <= 1e-12);
            let report = cc_test_21(&mu, 1e-9, 64).unwrap();
            match report.verdict {
                CcVerdict::ConditionallyConstant { constant } => {
                    assert!(
                        (constant - z).abs() <= 1e-9,
                        "constant {constant} != z = {z}"
                    );
                }
                CcVerdict::NotConstant { max_deviation, .. } => {
                    panic!("rectangle family must be conditionally constant, dev {max_deviation}")
                }
            }
        }
        assert!(rect_permuton(-0.1).is_err());
    }

    #[test]
    fn rect_permuton_degenerates_at_the_endpoints() {
        let diag = rect_permuton(0.0).unwrap();
        assert!((t_21_measure_exact(&diag).unwrap() - 0.0).abs() <= 1e-12);
        let anti = rect_permuton(1.0).unwrap();
        assert!((t_21_measure_exact(&anti).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn constant_inversion_degree_patterns_are_recognized() {
        for v in [vec![1, 2, 3], vec![3, 2, 1], vec![2, 1, 4, 3], vec![3, 4, 1, 2]] {
            assert!(sstar_check(&perm(&v)), "{v:?} should pass");
        }
        for v in [vec![2, 3, 1], vec![1, 3, 2], vec![2, 1, 3]] {
            assert!(!sstar_check(&perm(&v)), "{v:?} should fail");
        }
    }

    #[test]
    fn substitution_square_inflates_patterns() {
        let sq12 = substitution_square(&perm(&[1, 2]));
        assert_eq!(sq12.values(), &[1, 2, 3, 4]);
        let sq21 = substitution_square(&perm(&[2, 1]));
        assert_eq!(sq21.values(), &[4, 3, 2, 1]);
        // Closure: squares of constant-degree patterns stay constant-degree.
        for v in [vec![2, 1, 4, 3], vec![3, 4, 1, 2]] {
            assert!(sstar_check(&substitution_square(&perm(&v))));
        }
    }

    #[test]
    fn inflations_have_the_predicted_constant_weight() {
        // 2143 has common inversion degree 1; the inflation's pair weight is
        // (1 + z) / 4.
        let eta = perm(&[2, 1, 4, 3]);
        for z in [0.0, 0.5, 1.0] {
            let mu = sstar_inflate(&eta, z).unwrap();
            let (fx, fy) = mu.marginal_cdfs();
            assert!(fx.max_deviation_from_identity() <= 1e-12);
            assert!(fy.max_deviation_from_identity() <= 1e-12);
            let report = cc_test_21(&mu, 1e-9, 32).unwrap();
            match report.verdict {
                CcVerdict::ConditionallyConstant { constant } => {
                    assert!((constant - (1.0 + z) / 4.0).abs() <= 1e-9);
                }
                CcVerdict::NotConstant { max_deviation, .. } => {
                    panic!("inflation must be conditionally constant, dev {max_deviation}")
                }
            }
        }
        assert!(sstar_inflate(&perm(&[2, 3, 1]), 0.5).is_err());
    }

    #[test]
    fn cc_test_classifies_the_named_measures() {
        let report = cc_test_21(&xi(), 1e-9, 64).unwrap();
        assert!(matches!(
            report.verdict,
            CcVerdict::ConditionallyConstant { constant } if (constant - 0.5).abs() <= 1e-9
        ));

        let lam = cc_test_21(&Permuton::lebesgue(), 1e-6, 64).unwrap();
        match lam.verdict {
            CcVerdict::NotConstant { max_deviation, ref witnesses } => {
                assert!(max_deviation >= 0.4, "uniform deviation {max_deviation}");
                assert_eq!(witnesses.len(), 2);
            }
            CcVerdict::ConditionallyConstant { .. } => {
                panic!("the uniform measure is not conditionally constant")
            }
        }

        for ell in [0.5, 1.0] {
            let report = cc_test_21(&mu_ell(ell).unwrap(), 1e-6, 32).unwrap();
            assert!(
                matches!(report.verdict, CcVerdict::NotConstant { .. }),
                "two-block measure at ell = {ell} must vary"
            );
        }
    }

    #[test]
    fn support_diagnostics_recognize_frontier_measures() {
        let xi_diag = support_diagnostics_21(&xi(), 64).unwrap();
        assert!(!xi_diag.has_interior_mass);
        let fit = xi_diag.frontier.expect("xi has a frontier");
        assert!((fit.intercept - 0.5).abs() <= 1e-9);
        assert!(fit.rms_residual <= 1e-9);
        assert!(xi_diag.mass_below_frontier <= 1e-12);

        let rect = support_diagnostics_21(&rect_permuton(0.8).unwrap(), 64).unwrap();
        assert!(!rect.has_interior_mass);
        let fit = rect.frontier.expect("rectangle has a frontier");
        assert!((fit.intercept - 0.8).abs() <= 1e-9);
        assert!(rect.mass_below_frontier <= 1e-12);

        let lam = support_diagnostics_21(&Permuton::lebesgue(), 64).unwrap();
        assert!(lam.has_interior_mass);
        assert!(lam.frontier.is_none());
        assert_eq!(lam.mass_below_frontier, 0.0);
    }

    #[test]
    fn compression_identity_holds_for_the_uniform_measure() {
        let nu = Permuton::lebesgue();
        let check = reflect_identity_check(&nu, 0.5).unwrap();
        // Closed forms: D(lambda | mu_1/2) = ln 4 - (3/2) ln 3 + ln 2 ... the
        // difference collapses to (1/2) ln 3 - ln 4.
        let expect = 0.5 * 3.0_f64.ln() - 4.0_f64.ln();
        assert!((check.lhs - expect).abs() <= 1e-12, "lhs = {}", check.lhs);
        assert!((check.rhs - expect).abs() <= 1e-12, "rhs = {}", check.rhs);
        assert!(check.gap <= 1e-12);
        assert!((check.t_before - check.t_after).abs() <= 1e-12);
        assert!((check.t_before - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn compression_identity_reduces_to_minus_ln4_inside_the_quadrant() {
        // All mass already in the lower-left quadrant: the off-diagonal term
        // vanishes and the identity reads -ln 4.
        let nu = Permuton::grid(vec![vec![4.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let check = reflect_identity_check(&nu, 0.5).unwrap();
        assert!((check.rhs + 4.0_f64.ln()).abs() <= 1e-12);
        assert!(check.gap <= 1e-12);
    }

    #[test]
    fn compression_identity_holds_on_an_uneven_grid() {
        let nu = Permuton::grid(vec![
            vec![2.0, 0.5, 0.5, 1.0],
            vec![0.5, 2.0, 1.0, 0.5],
            vec![0.5, 1.0, 2.0, 0.5],
            vec![1.0, 0.5, 0.5, 2.0],
        ])
        .unwrap();
        for ell in [0.2, 0.7] {
            let check = reflect_identity_check(&nu, ell).unwrap();
            assert!(check.gap <= 1e-12, "gap {} at ell = {ell}", check.gap);
            assert!((check.t_before - check.t_after).abs() <= 1e-12);
        }
        assert!(reflect_identity_check(&nu, 1.0).is_err());
    }

    #[test]
    fn compression_identity_refines_odd_grids() {
        let nu = Permuton::grid(vec![
            vec![1.5, 0.75, 0.75],
            vec![0.75, 1.5, 0.75],
            vec![0.75, 0.75, 1.5],
        ])
        .unwrap();
        let check = reflect_identity_check(&nu, 0.4).unwrap();
        assert!(check.gap <= 1e-12);
        let _ = LCM_CAP; // refinement stays well inside the shared-grid cap
    }

    #[test]
    fn quadrant_separation_flags_dominant_blocks() {
        // Heavy lower-left block: separated.
        let heavy = Permuton::grid(vec![vec![3.6, 0.2], vec![0.2, 0.0]]).unwrap();
        let report = dmat_check(&heavy, 256).unwrap();
        assert!((report.d11 - 0.9).abs() <= 1e-12);
        assert!(report.separated);
        assert!(report.band_bound_holds);

        // Uniform: balanced, not separated.
        let lam = dmat_check(&Permuton::lebesgue(), 256).unwrap();
        assert!(!lam.separated);
        assert!(lam.band_bound_holds);

        // Broken-symmetry optimizers over xi at theta = 2: both separated.
        for opt in xi_gibbs_optimizers(2.0) {
            let report = dmat_check(&opt, 256).unwrap();
            assert!(report.separated);
            assert!(report.band_bound_holds);
        }
    }

    #[test]
    fn annotate_separation_fills_cluster_flags() {
        let mu = xi();
        let sigma = pat("21");
        let base = FieldBase::for_measure(&mu, 64, 64).unwrap();
        let cfg = SolveConfig {
            cluster_radius: Some(1e-5),
            ..SolveConfig::default()
        };
        let mut multi =
            multi_start_optimize(&sigma, &mu, 2.0, canonical_inits(&base), &cfg).unwrap();
        assert!(multi.clusters.len() >= 2);
        annotate_separation(&mut multi, 128).unwrap();
        // Every cluster gets a verdict; the maximizing clusters (the two
        // broken-symmetry optimizers) must pass separation, while a start on
        // the symmetric saddle may legitimately fail it.
        let best_f = multi.clusters[0].report.free_energy;
        for cluster in &multi.clusters {
            assert!(cluster.separated.is_some());
            if (cluster.report.free_energy - best_f).abs() <= 1e-6 {
                assert_eq!(cluster.separated, Some(true));
            }
        }
    }

    #[test]
    fn phase_scan_row_in_the_unique_regime() {
        let cfg = PhaseScanConfig {
            solve: SolveConfig {
                grid_m: 16,
                bins: 16,
                cluster_radius: Some(1e-5),
                ..SolveConfig::default()
            },
            delta_tol: 1e-6,
            dmat_resolution: 64,
        };
        let row = phase_scan_row(0.0, 0.55, &cfg).unwrap();
        assert!(row.attainable);
        assert_eq!(row.clusters, 1);
        assert!((row.t_achieved - 0.55).abs() <= 1e-4);
        assert!(row.theta > 0.0);
        assert!(!row.separated);
        assert!(row.bounds_hold);
        assert!(row.offdiag_bound.is_none());
    }

    #[test]
    fn phase_scan_marks_unattainable_rows() {
        // On an 8-cell grid the inversion density cannot exceed 1 - 1/16,
        // so delta = 0.995 is out of reach at any tilt.
        let cfg = PhaseScanConfig {
            solve: SolveConfig {
                grid_m: 8,
                bins: 8,
                cluster_radius: Some(1e-5),
                ..SolveConfig::default()
            },
            delta_tol: 1e-6,
            dmat_resolution: 64,
        };
        let row = phase_scan_row(0.0, 0.995, &cfg).unwrap();
        assert!(!row.attainable);
        assert!(row.theta >= 32.0);
        assert!(row.t_achieved < 0.995);
        assert!(row.t_achieved > 0.9);
        assert!(!row.cluster_summaries.is_empty());
    }

    #[test]
    fn phase_scan_iterates_the_grid() {
        let cfg = PhaseScanConfig {
            solve: SolveConfig {
                grid_m: 8,
                bins: 8,
                cluster_radius: Some(1e-5),
                ..SolveConfig::default()
            },
            delta_tol: 1e-4,
            dmat_resolution: 32,
        };
        let rows = phase_scan(&[0.0, 0.5], &[0.55, 0.6], &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert!(row.attainable);
            assert!((row.t_achieved - row.delta).abs() <= 1e-2);
        }
        assert!(phase_scan(&[1.5], &[0.6], &cfg).is_err());
        assert!(phase_scan(&[0.0], &[1.0], &cfg).is_err());
    }

    #[test]
    fn conditioned_xi_matches_the_variational_solver() {
        // The scalar closed form and the field solver must agree on the
        // conditioned optimizer for the xi base.
        let sigma = pat("21");
        let mu = xi();
        let cfg = SolveConfig::default();
        let (_, report) =
            crate::variational::conditional_optimizer(&sigma, &mu, 0.625, 1e-6, &cfg).unwrap();
        let closed = xi_conditional_optimizers(0.625).unwrap();
        assert!((report.t_sigma - 0.625).abs() <= 1e-5);
        assert!((report.g_value - closed.g_value).abs() <= 1e-5);
    }

    #[test]
    fn gibbs_free_energy_on_xi_matches_the_scalar_reduction() {
        // F(theta) from the field solver equals the value of the scalar
        // functional at the Curie-Weiss root.
        let sigma = pat("21");
        let mu = xi();
        let cfg = SolveConfig::default();
        let theta = 2.0;
        let m = curie_weiss_root(theta);
        let p = 0.5 * (1.0 + m);
        let q = 1.0 - p;
        let expect = theta * 0.5 * (1.0 + m * m) - (p * p.ln() + q * q.ln() + LN_2);
        let f = crate::variational::free_energy_multi(&sigma, &mu, theta, &cfg).unwrap();
        assert!((f - expect).abs() <= 1e-6, "F = {f}, expected {expect}");
        // And the solve started from a tilted field lands on one of the two
        // broken-symmetry optimizers.
        let base = FieldBase::for_measure(&mu, 64, 64).unwrap();
        let tilted = canonical_inits(&base).swap_remove(1);
        let tilted_cfg = SolveConfig {
            init: Init::Custom(tilted),
            ..SolveConfig::default()
        };
        let (_, report) = solve_el(&sigma, &mu, theta, &tilted_cfg).unwrap();
        assert!(report.converged);
        let t_opt = 0.5 * (1.0 + m * m);
        assert!((report.t_sigma - t_opt).abs() <= 1e-6);
        assert!(free_energy(&sigma, &mu, 0.0, &cfg).unwrap().abs() <= 1e-12);
    }
}
