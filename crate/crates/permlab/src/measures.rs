//! Permuton data model and measure-theoretic primitives.
//!
//! A *permuton* is a probability measure on the unit square `[0,1]^2` with
//! uniform marginals; it is the scaling limit of large permutations. This
//! module handles the slightly larger class of probability measures with
//! *continuous* marginals, in three representations:
//!
//! * [`Permuton::Grid`] — piecewise-constant density on an `m x m` grid of
//!   equal square cells (the density is constant on each cell);
//! * [`Permuton::Segments`] — one-dimensional mass supported on line
//!   segments of slope `±1`, with each segment's mass spread uniformly along
//!   its x-projection;
//! * [`Permuton::Mixture`] — a convex combination of other measures.
//!
//! Restricting segments to slope `±1` keeps both marginals continuous and
//! makes every 1-D computation an exact affine parameterization.
//!
//! Operations: rectangle masses, marginal CDFs, pushforward onto uniform
//! marginals (the projection taking any continuous-marginal measure to a
//! permuton), Kullback–Leibler divergence, total-variation distance,
//! reflection through the centre `(x,y) -> (1-x,1-y)`, and mixtures.

use crate::error::{Error, Result};
use rand::Rng;

/// Cap on the least-common-multiple grid refinement used when two grids of
/// different resolutions must be compared cellwise.
pub const LCM_CAP: usize = 4096;

/// Tolerance accepted on input masses/weights before exact renormalization.
const LOAD_TOL: f64 = 1e-9;

/// Axis-aligned closed rectangle inside the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    /// Well-ordered rectangle with all corners in `[0,1]^2`.
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&x_lo)
            && (0.0..=1.0).contains(&x_hi)
            && (0.0..=1.0).contains(&y_lo)
            && (0.0..=1.0).contains(&y_hi)
            && x_lo <= x_hi
            && y_lo <= y_hi;
        if !ok {
            return Err(Error::InvalidInput(format!(
                "bad rectangle [{x_lo},{x_hi}]x[{y_lo},{y_hi}]"
            )));
        }
        Ok(Rect { x_lo, x_hi, y_lo, y_hi })
    }

    /// Lower-left quadrant block `[0,1/2]^2`.
    pub fn lower_left() -> Self {
        Rect { x_lo: 0.0, x_hi: 0.5, y_lo: 0.0, y_hi: 0.5 }
    }

    /// Upper-right quadrant block `[1/2,1]^2`.
    pub fn upper_right() -> Self {
        Rect { x_lo: 0.5, x_hi: 1.0, y_lo: 0.5, y_hi: 1.0 }
    }

    /// Upper-left quadrant block `[0,1/2]x[1/2,1]`.
    pub fn upper_left() -> Self {
        Rect { x_lo: 0.0, x_hi: 0.5, y_lo: 0.5, y_hi: 1.0 }
    }

    /// Lower-right quadrant block `[1/2,1]x[0,1/2]`.
    pub fn lower_right() -> Self {
        Rect { x_lo: 0.5, x_hi: 1.0, y_lo: 0.0, y_hi: 0.5 }
    }
}

/// Slope-`±1` segment carrying 1-D uniform mass.
///
/// The segment's `weight` is spread so that any sub-segment receives
/// `weight * (x-projection length of the sub-segment) / (x-projection length
/// of the whole segment)`; equivalently, mass is uniform in the affine
/// parameter `t` of `from + t*(to-from)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub from: (f64, f64),
    pub to: (f64, f64),
    pub weight: f64,
}

impl Segment {
    pub fn new(from: (f64, f64), to: (f64, f64), weight: f64) -> Result<Self> {
        let seg = Segment { from, to, weight }.canonical();
        let (dx, dy) = (seg.dx(), seg.dy());
        let in_unit = |v: f64| (-1e-12..=1.0 + 1e-12).contains(&v);
        if !(in_unit(from.0) && in_unit(from.1) && in_unit(to.0) && in_unit(to.1)) {
            return Err(Error::InvalidInput(format!(
                "segment endpoints outside the unit square: {from:?} -> {to:?}"
            )));
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::InvalidInput(format!("bad segment weight {weight}")));
        }
        if (dx.abs() - dy.abs()).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "segment is not slope +/-1: {from:?} -> {to:?}"
            )));
        }
        if dx.abs() <= 1e-12 && weight > 0.0 {
            return Err(Error::InvalidInput(format!(
                "zero-length segment with positive weight: {from:?}"
            )));
        }
        Ok(seg)
    }

    /// Orientation-normalized copy (`from` lexicographically smallest); the
    /// measure itself is orientation-free.
    fn canonical(mut self) -> Self {
        if self.to < self.from {
            std::mem::swap(&mut self.from, &mut self.to);
        }
        self
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.to.0 - self.from.0
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.to.1 - self.from.1
    }

    /// Sign of the slope: `+1` or `-1`.
    #[inline]
    pub fn slope_sign(&self) -> i8 {
        if self.dx() * self.dy() >= 0.0 {
            1
        } else {
            -1
        }
    }

    /// Intercept `c` of the carrying line `y = s*x + c`.
    #[inline]
    pub fn line_offset(&self) -> f64 {
        self.from.1 - f64::from(self.slope_sign()) * self.from.0
    }

    /// x-projection as an ordered interval.
    #[inline]
    pub fn x_interval(&self) -> (f64, f64) {
        let (a, b) = (self.from.0, self.to.0);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Point at affine parameter `t` in `[0,1]`.
    #[inline]
    pub fn point_at(&self, t: f64) -> (f64, f64) {
        (self.from.0 + t * self.dx(), self.from.1 + t * self.dy())
    }

    /// Length (in `t`) of the part of the segment inside the closed
    /// rectangle; because mass is uniform in `t`, the rectangle mass of the
    /// segment is `weight * portion`.
    pub fn portion_in_rect(&self, r: &Rect) -> f64 {
        let solve_axis = |p0: f64, d: f64, lo: f64, hi: f64| -> (f64, f64) {
            // t-interval where p0 + t*d lies in [lo, hi]
            if d.abs() <= f64::EPSILON {
                if p0 >= lo && p0 <= hi {
                    (0.0, 1.0)
                } else {
                    (1.0, 0.0)
                }
            } else {
                let (a, b) = ((lo - p0) / d, (hi - p0) / d);
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            }
        };
        let (tx0, tx1) = solve_axis(self.from.0, self.dx(), r.x_lo, r.x_hi);
        let (ty0, ty1) = solve_axis(self.from.1, self.dy(), r.y_lo, r.y_hi);
        let t0 = tx0.max(ty0).max(0.0);
        let t1 = tx1.min(ty1).min(1.0);
        (t1 - t0).max(0.0)
    }
}

/// Piecewise-constant density on an `m x m` grid of equal cells.
///
/// `density[ix * m + iy]` is the density (w.r.t. Lebesgue measure) on the
/// cell `[ix/m, (ix+1)/m] x [iy/m, (iy+1)/m]`; the mass of that cell is
/// `density / m^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    m: usize,
    density: Vec<f64>,
}

impl Grid {
    pub fn new(m: usize, density: Vec<f64>) -> Result<Self> {
        if m == 0 || density.len() != m * m {
            return Err(Error::InvalidInput(format!(
                "grid density length {} does not match resolution {m}",
                density.len()
            )));
        }
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidInput("grid density must be finite and >= 0".into()));
        }
        let total: f64 = density.iter().sum::<f64>() / (m * m) as f64;
        if (total - 1.0).abs() > LOAD_TOL {
            return Err(Error::InvalidInput(format!(
                "grid total mass {total} is not 1"
            )));
        }
        let density = density.iter().map(|d| d / total).collect();
        Ok(Grid { m, density })
    }

    /// Build from per-cell masses (they are rescaled to total mass 1).
    pub fn from_masses(m: usize, masses: Vec<f64>) -> Result<Self> {
        let scale = (m * m) as f64;
        Grid::new(m, masses.into_iter().map(|v| v * scale).collect())
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn density(&self, ix: usize, iy: usize) -> f64 {
        self.density[ix * self.m + iy]
    }

    #[inline]
    pub fn cell_mass(&self, ix: usize, iy: usize) -> f64 {
        self.density(ix, iy) / (self.m * self.m) as f64
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    /// Exact refinement to resolution `l` (requires `m | l`).
    pub(crate) fn refine(&self, l: usize) -> Grid {
        debug_assert!(l.is_multiple_of(self.m));
        let k = l / self.m;
        let mut density = vec![0.0; l * l];
        for ix in 0..l {
            for iy in 0..l {
                density[ix * l + iy] = self.density(ix / k, iy / k);
            }
        }
        Grid { m: l, density }
    }
}

/// A probability measure on `[0,1]^2` with continuous marginals.
#[derive(Debug, Clone, PartialEq)]
pub enum Permuton {
    Grid(Grid),
    Segments(Vec<Segment>),
    Mixture(Vec<(f64, Permuton)>),
}

/// Convex combination of measures; validates and normalizes the weights.
pub fn mix(components: Vec<Permuton>, weights: Vec<f64>) -> Result<Permuton> {
    Permuton::mixture(weights.into_iter().zip(components).collect())
}

impl Permuton {
    /// The uniform (Lebesgue) measure on the unit square.
    pub fn lebesgue() -> Permuton {
        Permuton::Grid(Grid { m: 1, density: vec![1.0] })
    }

    /// Grid measure from nested rows `density[ix][iy]` (`ix` indexes the
    /// x-cell, `iy` the y-cell).
    pub fn grid(density: Vec<Vec<f64>>) -> Result<Permuton> {
        let m = density.len();
        if density.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidInput("grid density must be square".into()));
        }
        Permuton::grid_flat(m, density.into_iter().flatten().collect())
    }

    /// Grid measure from a flat density vector `density[ix*m + iy]`.
    pub fn grid_flat(m: usize, density: Vec<f64>) -> Result<Permuton> {
        Ok(Permuton::Grid(Grid::new(m, density)?))
    }

    /// Segment measure; zero-weight segments are dropped, identical segments
    /// merged, weights normalized to total 1.
    pub fn segments(segs: Vec<Segment>) -> Result<Permuton> {
        let mut kept: Vec<Segment> = Vec::new();
        for s in segs {
            let s = Segment::new(s.from, s.to, s.weight)?;
            if s.weight == 0.0 {
                continue;
            }
            // merge exact duplicates (canonical orientation makes this well defined)
            if let Some(prev) = kept.iter_mut().find(|p| p.from == s.from && p.to == s.to) {
                prev.weight += s.weight;
            } else {
                kept.push(s);
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidInput("segment measure with no mass".into()));
        }
        let total: f64 = kept.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > LOAD_TOL {
            return Err(Error::InvalidInput(format!(
                "segment weights sum to {total}, expected 1"
            )));
        }
        for s in &mut kept {
            s.weight /= total;
        }
        Ok(Permuton::Segments(kept))
    }

    /// Mixture from `(weight, component)` pairs; singleton mixtures unwrap to
    /// the component itself.
    pub fn mixture(parts: Vec<(f64, Permuton)>) -> Result<Permuton> {
        let mut kept: Vec<(f64, Permuton)> = Vec::new();
        for (w, c) in parts {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidInput(format!("bad mixture weight {w}")));
            }
            if w > 0.0 {
                kept.push((w, c));
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidInput("mixture with no mass".into()));
        }
        let total: f64 = kept.iter().map(|(w, _)| *w).sum();
        if (total - 1.0).abs() > LOAD_TOL {
            return Err(Error::InvalidInput(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        for (w, _) in &mut kept {
            *w /= total;
        }
        if kept.len() == 1 {
            return Ok(kept.pop().unwrap().1);
        }
        Ok(Permuton::Mixture(kept))
    }

    /// Exact measure of a closed rectangle.
    pub fn box_mass(&self, r: &Rect) -> f64 {
        match self {
            Permuton::Grid(g) => {
                let m = g.m;
                let mf = m as f64;
                let lo_ix = ((r.x_lo * mf).floor() as usize).min(m.saturating_sub(1));
                let hi_ix = ((r.x_hi * mf).ceil() as usize).min(m);
                let lo_iy = ((r.y_lo * mf).floor() as usize).min(m.saturating_sub(1));
                let hi_iy = ((r.y_hi * mf).ceil() as usize).min(m);
                let mut acc = 0.0;
                for ix in lo_ix..hi_ix {
                    let cx0 = ix as f64 / mf;
                    let cx1 = (ix + 1) as f64 / mf;
                    let ox = (r.x_hi.min(cx1) - r.x_lo.max(cx0)).max(0.0);
                    if ox == 0.0 {
                        continue;
                    }
                    for iy in lo_iy..hi_iy {
                        let cy0 = iy as f64 / mf;
                        let cy1 = (iy + 1) as f64 / mf;
                        let oy = (r.y_hi.min(cy1) - r.y_lo.max(cy0)).max(0.0);
                        if oy > 0.0 {
                            acc += g.density(ix, iy) * ox * oy;
                        }
                    }
                }
                acc
            }
            Permuton::Segments(segs) => segs
                .iter()
                .map(|s| s.weight * s.portion_in_rect(r))
                .sum(),
            Permuton::Mixture(parts) => parts
                .iter()
                .map(|(w, c)| w * c.box_mass(r))
                .sum(),
        }
    }

    /// Both marginal CDFs `(F1, F2)` with `F1(x) = mass([0,x] x [0,1])`.
    pub fn marginal_cdfs(&self) -> (MarginalCdf, MarginalCdf) {
        (self.marginal_cdf(Axis::X), self.marginal_cdf(Axis::Y))
    }

    fn marginal_cdf(&self, axis: Axis) -> MarginalCdf {
        match self {
            Permuton::Grid(g) => {
                let m = g.m;
                let mut pts = Vec::with_capacity(m + 1);
                pts.push((0.0, 0.0));
                let mut acc = 0.0;
                for i in 0..m {
                    let band: f64 = (0..m)
                        .map(|j| match axis {
                            Axis::X => g.cell_mass(i, j),
                            Axis::Y => g.cell_mass(j, i),
                        })
                        .sum();
                    acc += band;
                    pts.push(((i + 1) as f64 / m as f64, acc));
                }
                MarginalCdf::from_points(pts)
            }
            Permuton::Segments(segs) => {
                // each segment has uniform 1-D density weight/len over its
                // projected interval on the chosen axis
                let mut xs: Vec<f64> = vec![0.0, 1.0];
                let intervals: Vec<(f64, f64, f64)> = segs
                    .iter()
                    .map(|s| {
                        let (a, b) = match axis {
                            Axis::X => s.x_interval(),
                            Axis::Y => {
                                let (p, q) = (s.from.1, s.to.1);
                                if p <= q {
                                    (p, q)
                                } else {
                                    (q, p)
                                }
                            }
                        };
                        (a, b, s.weight / (b - a))
                    })
                    .collect();
                for (a, b, _) in &intervals {
                    xs.push(*a);
                    xs.push(*b);
                }
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                xs.dedup();
                let mut pts = Vec::with_capacity(xs.len());
                let mut acc = 0.0;
                pts.push((xs[0], 0.0));
                for w in xs.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let mid = 0.5 * (a + b);
                    let rho: f64 = intervals
                        .iter()
                        .filter(|(lo, hi, _)| mid >= *lo && mid <= *hi)
                        .map(|(_, _, r)| r)
                        .sum();
                    acc += rho * (b - a);
                    pts.push((b, acc));
                }
                MarginalCdf::from_points(pts)
            }
            Permuton::Mixture(parts) => {
                let children: Vec<(f64, MarginalCdf)> = parts
                    .iter()
                    .map(|(w, c)| (*w, c.marginal_cdf(axis)))
                    .collect();
                let mut xs: Vec<f64> = children
                    .iter()
                    .flat_map(|(_, c)| c.points().iter().map(|p| p.0))
                    .collect();
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                xs.dedup();
                let pts = xs
                    .into_iter()
                    .map(|x| {
                        let f: f64 = children.iter().map(|(w, c)| w * c.eval(x)).sum();
                        (x, f)
                    })
                    .collect();
                MarginalCdf::from_points(pts)
            }
        }
    }

    /// Projection onto uniform marginals: the pushforward of the measure
    /// under `(x, y) -> (F1(x), F2(y))`.
    ///
    /// If the marginals are already uniform (checked exactly on the CDF
    /// breakpoints) the measure is returned unchanged. Otherwise:
    ///
    /// * grid-representable inputs are refined to a common grid and remapped
    ///   exactly — each source cell maps to a rectangle in CDF coordinates
    ///   and its (constant-density) mass is split over the `m_out` target
    ///   grid by exact area overlap;
    /// * inputs containing segments are first rasterized onto an `m_out`
    ///   grid (the CDF image of a slope-`±1` segment is generally not a
    ///   segment, so an exact segment output is not attempted).
    pub fn project_uniform(&self, m_out: usize) -> Result<Permuton> {
        if m_out == 0 {
            return Err(Error::InvalidInput("m_out must be positive".into()));
        }
        let (f1, f2) = self.marginal_cdfs();
        if f1.is_identity(1e-12) && f2.is_identity(1e-12) {
            return Ok(self.clone());
        }
        let grid = match self.common_grid()? {
            Some(g) => g,
            None => self.rasterize(m_out),
        };
        Ok(Permuton::Grid(pushforward_grid(&grid, m_out)))
    }

    /// Kullback–Leibler divergence `D(self | mu)`, finite iff `self` is
    /// absolutely continuous w.r.t. `mu` within the representable families.
    ///
    /// Grid pairs are refined to a common resolution (LCM-capped); segment
    /// pairs are compared line by line through their 1-D projected
    /// densities. `+inf` is returned when mass sits where `mu` has none;
    /// structurally incomparable representations (grid vs segments) are an
    /// error.
    pub fn kl_divergence(&self, mu: &Permuton) -> Result<f64> {
        match common_family(self, mu)? {
            FamilyPair::Grids(a, b) => {
                let mut acc = 0.0;
                for i in 0..a.density.len() {
                    let (dn, dm) = (a.density[i], b.density[i]);
                    if dn > 0.0 {
                        if dm <= 0.0 {
                            return Ok(f64::INFINITY);
                        }
                        let mass = dn / (a.m * a.m) as f64;
                        acc += mass * (dn / dm).ln();
                    }
                }
                Ok(acc)
            }
            FamilyPair::Segments(a, b) => {
                let (kl, _tv) = compare_segment_lines(&a, &b);
                Ok(kl)
            }
        }
    }

    /// Total-variation distance: half the L1 distance of densities w.r.t. a
    /// common dominating measure. Same compatibility rules as
    /// [`Permuton::kl_divergence`].
    pub fn tv_distance(&self, mu: &Permuton) -> Result<f64> {
        match common_family(self, mu)? {
            FamilyPair::Grids(a, b) => {
                let cell = 1.0 / (a.m * a.m) as f64;
                Ok(0.5
                    * cell
                    * a.density
                        .iter()
                        .zip(&b.density)
                        .map(|(x, y)| (x - y).abs())
                        .sum::<f64>())
            }
            FamilyPair::Segments(a, b) => {
                let (_kl, tv) = compare_segment_lines(&a, &b);
                Ok(tv)
            }
        }
    }

    /// Pushforward under the point reflection `T(x,y) = (1-x, 1-y)`.
    pub fn reflect(&self) -> Permuton {
        match self {
            Permuton::Grid(g) => {
                let m = g.m;
                let mut density = vec![0.0; m * m];
                for ix in 0..m {
                    for iy in 0..m {
                        density[ix * m + iy] = g.density(m - 1 - ix, m - 1 - iy);
                    }
                }
                Permuton::Grid(Grid { m, density })
            }
            Permuton::Segments(segs) => {
                let refl = segs
                    .iter()
                    .map(|s| {
                        Segment {
                            from: (1.0 - s.from.0, 1.0 - s.from.1),
                            to: (1.0 - s.to.0, 1.0 - s.to.1),
                            weight: s.weight,
                        }
                        .canonical()
                    })
                    .collect();
                Permuton::Segments(refl)
            }
            Permuton::Mixture(parts) => Permuton::Mixture(
                parts.iter().map(|(w, c)| (*w, c.reflect())).collect(),
            ),
        }
    }

    /// Flatten to a single grid if every leaf is a grid; `Ok(None)` when the
    /// measure has a segment component, error when grid resolutions cannot
    /// be refined to a common resolution within [`LCM_CAP`].
    pub fn common_grid(&self) -> Result<Option<Grid>> {
        let mut leaves: Vec<(f64, &Grid)> = Vec::new();
        if !collect_grid_leaves(self, 1.0, &mut leaves) {
            return Ok(None);
        }
        let mut l = 1usize;
        for (_, g) in &leaves {
            l = lcm(l, g.m);
            if l > LCM_CAP {
                return Err(Error::Incompatible(format!(
                    "common grid resolution exceeds the cap {LCM_CAP}"
                )));
            }
        }
        let mut density = vec![0.0; l * l];
        for (w, g) in leaves {
            let k = l / g.m;
            for ix in 0..l {
                for iy in 0..l {
                    density[ix * l + iy] += w * g.density(ix / k, iy / k);
                }
            }
        }
        Ok(Some(Grid { m: l, density }))
    }

    /// Flatten to a single segment list if every leaf is a segment measure.
    pub fn flatten_segments(&self) -> Option<Vec<Segment>> {
        fn go(p: &Permuton, w: f64, out: &mut Vec<Segment>) -> bool {
            match p {
                Permuton::Grid(_) => false,
                Permuton::Segments(segs) => {
                    out.extend(segs.iter().map(|s| Segment { weight: w * s.weight, ..*s }));
                    true
                }
                Permuton::Mixture(parts) => {
                    parts.iter().all(|(pw, c)| go(c, w * pw, out))
                }
            }
        }
        let mut out = Vec::new();
        if go(self, 1.0, &mut out) {
            Some(out)
        } else {
            None
        }
    }

    /// Exact per-cell masses of the measure on an `m x m` grid (within-cell
    /// placement becomes uniform; this is the rasterization step used before
    /// CDF pushforward of singular measures).
    pub fn rasterize(&self, m: usize) -> Grid {
        let mut masses = vec![0.0; m * m];
        accumulate_raster(self, 1.0, m, &mut masses);
        let total: f64 = masses.iter().sum();
        let scale = (m * m) as f64 / total;
        Grid { m, density: masses.into_iter().map(|v| v * scale).collect() }
    }

    /// True when the measure is exactly the Lebesgue measure (all-grid
    /// representation with constant density 1).
    pub fn is_lebesgue(&self) -> bool {
        match self.common_grid() {
            Ok(Some(g)) => g.density.iter().all(|d| (d - 1.0).abs() <= 1e-12),
            _ => false,
        }
    }

    /// Flatten into weighted atomic pieces (cells / segments) for generic
    /// pairwise integration.
    pub(crate) fn atoms(&self) -> Vec<Atom> {
        fn go(p: &Permuton, w: f64, out: &mut Vec<Atom>) {
            match p {
                Permuton::Grid(g) => {
                    let m = g.m;
                    let mf = m as f64;
                    for ix in 0..m {
                        for iy in 0..m {
                            let mass = w * g.cell_mass(ix, iy);
                            if mass > 0.0 {
                                out.push(Atom::Cell {
                                    rect: Rect {
                                        x_lo: ix as f64 / mf,
                                        x_hi: (ix + 1) as f64 / mf,
                                        y_lo: iy as f64 / mf,
                                        y_hi: (iy + 1) as f64 / mf,
                                    },
                                    mass,
                                });
                            }
                        }
                    }
                }
                Permuton::Segments(segs) => {
                    for s in segs {
                        if s.weight > 0.0 {
                            out.push(Atom::Seg(Segment { weight: w * s.weight, ..*s }));
                        }
                    }
                }
                Permuton::Mixture(parts) => {
                    for (pw, c) in parts {
                        go(c, w * pw, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(self, 1.0, &mut out);
        out
    }

    /// Draw one point from the measure (no collision handling here — see the
    /// sampling module for point configurations).
    pub fn draw_point<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            Permuton::Grid(g) => {
                let u: f64 = rng.gen();
                let m = g.m;
                let cell_scale = 1.0 / (m * m) as f64;
                let mut acc = 0.0;
                let mut pick = g.density.len() - 1;
                for (idx, d) in g.density.iter().enumerate() {
                    acc += d * cell_scale;
                    if u < acc {
                        pick = idx;
                        break;
                    }
                }
                let (ix, iy) = (pick / m, pick % m);
                let px: f64 = rng.gen();
                let py: f64 = rng.gen();
                ((ix as f64 + px) / m as f64, (iy as f64 + py) / m as f64)
            }
            Permuton::Segments(segs) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = segs.len() - 1;
                for (idx, s) in segs.iter().enumerate() {
                    acc += s.weight;
                    if u < acc {
                        pick = idx;
                        break;
                    }
                }
                segs[pick].point_at(rng.gen())
            }
            Permuton::Mixture(parts) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = parts.len() - 1;
                for (idx, (w, _)) in parts.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = idx;
                        break;
                    }
                }
                parts[pick].1.draw_point(rng)
            }
        }
    }
}

/// Weighted atomic piece of a flattened measure.
#[derive(Debug, Clone)]
pub(crate) enum Atom {
    Cell { rect: Rect, mass: f64 },
    Seg(Segment),
}

impl Atom {
    pub(crate) fn mass(&self) -> f64 {
        match self {
            Atom::Cell { mass, .. } => *mass,
            Atom::Seg(s) => s.weight,
        }
    }
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

/// Piecewise-linear nondecreasing CDF on `[0,1]` with `F(0)=0`, `F(1)=1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCdf {
    pts: Vec<(f64, f64)>,
}

impl MarginalCdf {
    fn from_points(mut pts: Vec<(f64, f64)>) -> MarginalCdf {
        debug_assert!(!pts.is_empty());
        // pin the endpoints exactly; interior drift stays within float noise
        if pts.first().unwrap().0 > 0.0 {
            pts.insert(0, (0.0, 0.0));
        }
        if pts.last().unwrap().0 < 1.0 {
            pts.push((1.0, pts.last().unwrap().1));
        }
        pts.first_mut().unwrap().1 = 0.0;
        let last = pts.last_mut().unwrap();
        debug_assert!((last.1 - 1.0).abs() < 1e-6, "cdf ends at {}", last.1);
        last.1 = 1.0;
        for i in 1..pts.len() {
            if pts[i].1 < pts[i - 1].1 {
                pts[i].1 = pts[i - 1].1; // clamp monotone against rounding
            }
        }
        MarginalCdf { pts }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.pts
    }

    /// Evaluate by linear interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let idx = self.pts.partition_point(|p| p.0 <= x);
        let (x1, f1) = self.pts[idx - 1];
        let (x2, f2) = self.pts[idx.min(self.pts.len() - 1)];
        if x2 <= x1 {
            return f1;
        }
        f1 + (f2 - f1) * (x - x1) / (x2 - x1)
    }

    /// Largest deviation `|F(x) - x|` over the breakpoints (a piecewise
    /// linear function equals the identity iff it does on its breakpoints).
    pub fn max_deviation_from_identity(&self) -> f64 {
        self.pts
            .iter()
            .map(|(x, f)| (f - x).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.max_deviation_from_identity() <= tol
    }
}

fn collect_grid_leaves<'a>(p: &'a Permuton, w: f64, out: &mut Vec<(f64, &'a Grid)>) -> bool {
    match p {
        Permuton::Grid(g) => {
            out.push((w, g));
            true
        }
        Permuton::Segments(_) => false,
        Permuton::Mixture(parts) => parts.iter().all(|(pw, c)| collect_grid_leaves(c, w * pw, out)),
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

enum FamilyPair {
    Grids(Grid, Grid),
    Segments(Vec<Segment>, Vec<Segment>),
}

/// Bring two measures into a common representable family, or fail
/// structurally.
fn common_family(nu: &Permuton, mu: &Permuton) -> Result<FamilyPair> {
    if let (Some(a), Some(b)) = (nu.common_grid()?, mu.common_grid()?) {
        let l = lcm(a.m, b.m);
        if l > LCM_CAP {
            return Err(Error::Incompatible(format!(
                "common grid resolution exceeds the cap {LCM_CAP}"
            )));
        }
        return Ok(FamilyPair::Grids(a.refine(l), b.refine(l)));
    }
    if let (Some(a), Some(b)) = (nu.flatten_segments(), mu.flatten_segments()) {
        return Ok(FamilyPair::Segments(a, b));
    }
    Err(Error::Incompatible(
        "cannot compare a grid measure with a segment measure".into(),
    ))
}

/// Pieces `(x_lo, x_hi, density)` of one carrying line, keyed by the
/// line's `(slope sign, offset)`.
type LinePieces = ((i8, f64), Vec<(f64, f64, f64)>);

/// 1-D pieces of a segment family grouped by carrying line.
///
/// Two slope-`±1` segments interact (for divergences) only when they lie on
/// the same line `y = s*x + c`; on each line the measure reduces to a
/// piecewise-constant 1-D density over the x-projection.
fn segment_lines(segs: &[Segment]) -> Vec<LinePieces> {
    let mut keyed: Vec<(i8, f64, (f64, f64, f64))> = segs
        .iter()
        .filter(|s| s.weight > 0.0)
        .map(|s| {
            let (a, b) = s.x_interval();
            (s.slope_sign(), s.line_offset(), (a, b, s.weight / (b - a)))
        })
        .collect();
    keyed.sort_by(|p, q| {
        p.0.cmp(&q.0)
            .then(p.1.partial_cmp(&q.1).unwrap())
            .then(p.2 .0.partial_cmp(&q.2 .0).unwrap())
    });
    let mut out: Vec<LinePieces> = Vec::new();
    for (sign, off, piece) in keyed {
        match out.last_mut() {
            Some(((s, o), pieces)) if *s == sign && (off - *o).abs() <= 1e-9 => {
                pieces.push(piece)
            }
            _ => out.push(((sign, off), vec![piece])),
        }
    }
    out
}

/// KL divergence and TV distance of two segment families in one pass over
/// their shared line decomposition.
fn compare_segment_lines(nu: &[Segment], mu: &[Segment]) -> (f64, f64) {
    let ln = segment_lines(nu);
    let lm = segment_lines(mu);
    let mut kl = 0.0;
    let mut tv = 0.0;
    let same_line = |a: &(i8, f64), b: &(i8, f64)| a.0 == b.0 && (a.1 - b.1).abs() <= 1e-9;
    let line_mass = |pieces: &[(f64, f64, f64)]| -> f64 {
        pieces.iter().map(|(a, b, r)| r * (b - a)).sum()
    };
    let (mut i, mut j) = (0, 0);
    let before = |a: &(i8, f64), b: &(i8, f64)| (a.0, a.1) < (b.0, b.1);
    while i < ln.len() || j < lm.len() {
        if j >= lm.len() || (i < ln.len() && !same_line(&ln[i].0, &lm[j].0) && before(&ln[i].0, &lm[j].0)) {
            // line carries nu-mass but no mu-mass
            kl = f64::INFINITY;
            tv += 0.5 * line_mass(&ln[i].1);
            i += 1;
        } else if i >= ln.len() || (!same_line(&ln[i].0, &lm[j].0)) {
            tv += 0.5 * line_mass(&lm[j].1);
            j += 1;
        } else {
            let (np, mp) = (&ln[i].1, &lm[j].1);
            let mut xs: Vec<f64> = np
                .iter()
                .chain(mp.iter())
                .flat_map(|(a, b, _)| [*a, *b])
                .collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup();
            for w in xs.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b <= a {
                    continue;
                }
                let mid = 0.5 * (a + b);
                let rn: f64 = np
                    .iter()
                    .filter(|(lo, hi, _)| mid >= *lo && mid <= *hi)
                    .map(|(_, _, r)| r)
                    .sum();
                let rm: f64 = mp
                    .iter()
                    .filter(|(lo, hi, _)| mid >= *lo && mid <= *hi)
                    .map(|(_, _, r)| r)
                    .sum();
                tv += 0.5 * (rn - rm).abs() * (b - a);
                if rn > 0.0 {
                    if rm <= 0.0 {
                        kl = f64::INFINITY;
                    } else if kl.is_finite() {
                        kl += rn * (rn / rm).ln() * (b - a);
                    }
                }
            }
            i += 1;
            j += 1;
        }
    }
    (kl, tv)
}

fn accumulate_raster(p: &Permuton, w: f64, m: usize, out: &mut [f64]) {
    match p {
        Permuton::Grid(g) => {
            // exact area-overlap split of each source cell over target cells
            let (ms, mf, lf) = (g.m, m as f64, g.m as f64);
            for ix in 0..ms {
                for iy in 0..ms {
                    let mass = w * g.cell_mass(ix, iy);
                    if mass == 0.0 {
                        continue;
                    }
                    let (x0, x1) = (ix as f64 / lf, (ix + 1) as f64 / lf);
                    let (y0, y1) = (iy as f64 / lf, (iy + 1) as f64 / lf);
                    scatter_rect_mass(out, m, x0, x1, y0, y1, mass);
                    let _ = mf;
                }
            }
        }
        Permuton::Segments(segs) => {
            for s in segs {
                if s.weight == 0.0 {
                    continue;
                }
                // split the parameter range at every gridline crossing and
                // charge each sub-interval to the cell containing it
                let mut ts = vec![0.0, 1.0];
                for axis in 0..2 {
                    let (p0, d) = if axis == 0 {
                        (s.from.0, s.dx())
                    } else {
                        (s.from.1, s.dy())
                    };
                    for k in 0..=m {
                        let t = (k as f64 / m as f64 - p0) / d;
                        if t > 0.0 && t < 1.0 {
                            ts.push(t);
                        }
                    }
                }
                ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                ts.dedup();
                for wdw in ts.windows(2) {
                    let (t0, t1) = (wdw[0], wdw[1]);
                    if t1 <= t0 {
                        continue;
                    }
                    let (px, py) = s.point_at(0.5 * (t0 + t1));
                    let ix = ((px * m as f64).floor() as usize).min(m - 1);
                    let iy = ((py * m as f64).floor() as usize).min(m - 1);
                    out[ix * m + iy] += s.weight * (t1 - t0) * w;
                }
            }
        }
        Permuton::Mixture(parts) => {
            for (pw, c) in parts {
                accumulate_raster(c, w * pw, m, out);
            }
        }
    }
}

/// Spread `mass` uniformly over the rectangle `[x0,x1] x [y0,y1]` and
/// accumulate it into per-cell masses of an `m x m` grid by exact overlap.
fn scatter_rect_mass(out: &mut [f64], m: usize, x0: f64, x1: f64, y0: f64, y1: f64, mass: f64) {
    let area = (x1 - x0) * (y1 - y0);
    if area <= 0.0 {
        // degenerate image: put the mass in the containing cell
        let ix = ((x0 * m as f64).floor() as usize).min(m - 1);
        let iy = ((y0 * m as f64).floor() as usize).min(m - 1);
        out[ix * m + iy] += mass;
        return;
    }
    let mf = m as f64;
    let ix0 = ((x0 * mf).floor() as usize).min(m - 1);
    let ix1 = ((x1 * mf).ceil() as usize).min(m);
    let iy0 = ((y0 * mf).floor() as usize).min(m - 1);
    let iy1 = ((y1 * mf).ceil() as usize).min(m);
    for ix in ix0..ix1 {
        let ox = (x1.min((ix + 1) as f64 / mf) - x0.max(ix as f64 / mf)).max(0.0);
        if ox == 0.0 {
            continue;
        }
        for iy in iy0..iy1 {
            let oy = (y1.min((iy + 1) as f64 / mf) - y0.max(iy as f64 / mf)).max(0.0);
            if oy > 0.0 {
                out[ix * m + iy] += mass * ox * oy / area;
            }
        }
    }
}

/// Exact CDF pushforward of a grid measure onto an `m_out` grid.
///
/// The marginal CDFs of a grid are linear on each source cell band, so each
/// source cell maps to an axis-aligned rectangle in CDF coordinates with its
/// mass still uniformly spread; splitting that rectangle over the target
/// grid by area overlap is exact.
fn pushforward_grid(g: &Grid, m_out: usize) -> Grid {
    let m = g.m;
    let mut col_cum = vec![0.0; m + 1];
    let mut row_cum = vec![0.0; m + 1];
    for i in 0..m {
        let col: f64 = (0..m).map(|j| g.cell_mass(i, j)).sum();
        let row: f64 = (0..m).map(|j| g.cell_mass(j, i)).sum();
        col_cum[i + 1] = col_cum[i] + col;
        row_cum[i + 1] = row_cum[i] + row;
    }
    col_cum[m] = 1.0;
    row_cum[m] = 1.0;
    let mut masses = vec![0.0; m_out * m_out];
    for ix in 0..m {
        for iy in 0..m {
            let mass = g.cell_mass(ix, iy);
            if mass == 0.0 {
                continue;
            }
            scatter_rect_mass(
                &mut masses,
                m_out,
                col_cum[ix],
                col_cum[ix + 1],
                row_cum[iy],
                row_cum[iy + 1],
                mass,
            );
        }
    }
    let total: f64 = masses.iter().sum();
    let scale = (m_out * m_out) as f64 / total;
    Grid {
        m: m_out,
        density: masses.into_iter().map(|v| v * scale).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn box_mass_uniform_quadrant() {
        let lam = Permuton::lebesgue();
        assert!((lam.box_mass(&Rect::lower_left()) - 0.25).abs() < 1e-15);
        assert!((lam.box_mass(&unit()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_partition_masses_sum_to_one() {
        let g = Permuton::grid(vec![vec![1.0, 0.5], vec![1.5, 1.0]]).unwrap();
        let mut total = 0.0;
        let m = 8;
        for i in 0..m {
            for j in 0..m {
                total += g.box_mass(
                    &Rect::new(
                        i as f64 / m as f64,
                        (i + 1) as f64 / m as f64,
                        j as f64 / m as f64,
                        (j + 1) as f64 / m as f64,
                    )
                    .unwrap(),
                );
            }
        }
        assert!((total - 1.0).abs() < 1e-12, "partition sum {total}");
    }

    #[test]
    fn segment_measure_box_mass() {
        // single anti-diagonal of the lower-left block
        let seg = Segment::new((0.0, 0.5), (0.5, 0.0), 1.0).unwrap();
        let nu = Permuton::segments(vec![seg]).unwrap();
        // left half of the segment: x in [0, 0.25]
        let r = Rect::new(0.0, 0.25, 0.0, 1.0).unwrap();
        assert!((nu.box_mass(&r) - 0.5).abs() < 1e-15);
        // box below the line: zero mass
        let below = Rect::new(0.0, 0.2, 0.0, 0.2).unwrap();
        assert!(nu.box_mass(&below).abs() < 1e-15);
    }

    #[test]
    fn marginal_cdf_grid_identity() {
        let lam = Permuton::lebesgue();
        let (f1, f2) = lam.marginal_cdfs();
        assert!(f1.is_identity(0.0));
        assert!(f2.is_identity(0.0));
    }

    #[test]
    fn marginal_cdf_segment_doubling() {
        // all mass on the lower-left anti-diagonal: F1(x) = min(2x, 1)
        let seg = Segment::new((0.0, 0.5), (0.5, 0.0), 1.0).unwrap();
        let nu = Permuton::segments(vec![seg]).unwrap();
        let (f1, _) = nu.marginal_cdfs();
        for x in [0.1, 0.25, 0.4, 0.5, 0.7, 1.0] {
            assert!(
                (f1.eval(x) - (2.0 * x).min(1.0)).abs() < 1e-12,
                "F1({x}) = {}",
                f1.eval(x)
            );
        }
    }

    #[test]
    fn mixture_of_antidiagonals_is_uniform_marginal() {
        let s1 = Segment::new((0.0, 0.5), (0.5, 0.0), 1.0).unwrap();
        let s2 = Segment::new((0.5, 1.0), (1.0, 0.5), 1.0).unwrap();
        let xi = mix(
            vec![
                Permuton::segments(vec![s1]).unwrap(),
                Permuton::segments(vec![s2]).unwrap(),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        let (f1, f2) = xi.marginal_cdfs();
        assert!(f1.is_identity(1e-15));
        assert!(f2.is_identity(1e-15));
        assert!((xi.box_mass(&Rect::lower_left()) - 0.5).abs() < 1e-15);
        assert!(xi.box_mass(&Rect::upper_left()).abs() < 1e-15);
    }

    #[test]
    fn project_uniform_identity_passthrough() {
        let lam = Permuton::lebesgue();
        let p = lam.project_uniform(64).unwrap();
        assert_eq!(p, lam);
    }

    #[test]
    fn project_uniform_two_block_example() {
        // density 1 on [0,1/2]^2, 3 on [1/2,1]^2: pushes forward to mass 1/4
        // uniform on [0,1/4]^2 and 3/4 uniform on [1/4,1]^2
        let nu = Permuton::grid(vec![vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let gamma = nu.project_uniform(64).unwrap();
        let q1 = Rect::new(0.0, 0.25, 0.0, 0.25).unwrap();
        let q2 = Rect::new(0.25, 1.0, 0.25, 1.0).unwrap();
        assert!((gamma.box_mass(&q1) - 0.25).abs() < 1e-12);
        assert!((gamma.box_mass(&q2) - 0.75).abs() < 1e-12);
        // off-diagonal rectangles carry no mass
        let off = Rect::new(0.0, 0.25, 0.25, 1.0).unwrap();
        assert!(gamma.box_mass(&off).abs() < 1e-12);
        // uniform marginals within 1e-9 per band
        let m = 64;
        for i in 0..m {
            let band = Rect::new(i as f64 / m as f64, (i + 1) as f64 / m as f64, 0.0, 1.0).unwrap();
            assert!((gamma.box_mass(&band) - 1.0 / m as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_grid_examples() {
        let lam = Permuton::lebesgue();
        assert_eq!(lam.kl_divergence(&lam).unwrap(), 0.0);
        // two-level density: D(lambda | mu_l) = -0.5*ln(1 - l^2)
        for ell in [0.25, 0.5, 0.9] {
            let mu = Permuton::grid(vec![
                vec![1.0 + ell, 1.0 - ell],
                vec![1.0 - ell, 1.0 + ell],
            ])
            .unwrap();
            let kl = lam.kl_divergence(&mu).unwrap();
            let expect = -0.5 * (1.0 - ell * ell).ln();
            assert!((kl - expect).abs() < 1e-12, "ell={ell}: {kl} vs {expect}");
        }
    }

    #[test]
    fn kl_infinite_when_support_escapes() {
        // gamma has mass on the off-diagonal blocks where mu_1 vanishes
        let gamma = {
            let mut d = vec![0.0; 16];
            for ix in 0..4 {
                for iy in 0..4 {
                    d[ix * 4 + iy] = if ix == 0 && iy == 0 {
                        4.0
                    } else if ix >= 1 && iy >= 1 {
                        4.0 / 3.0
                    } else {
                        0.0
                    };
                }
            }
            Permuton::grid_flat(4, d).unwrap()
        };
        let mu1 = Permuton::grid(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert!(gamma.kl_divergence(&mu1).unwrap().is_infinite());
        // while the pre-projection two-block measure has finite divergence
        let nu = Permuton::grid(vec![vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let kl = nu.kl_divergence(&mu1).unwrap();
        assert!(kl.is_finite());
        let expect = 0.25 * (1.0f64 / 2.0).ln() + 0.75 * (3.0f64 / 2.0).ln();
        assert!((kl - expect).abs() < 1e-12);
    }

    #[test]
    fn kl_segments_componentwise() {
        let s1 = Segment::new((0.0, 0.5), (0.5, 0.0), 1.0).unwrap();
        let s2 = Segment::new((0.5, 1.0), (1.0, 0.5), 1.0).unwrap();
        let xi11 = Permuton::segments(vec![s1]).unwrap();
        let xi22 = Permuton::segments(vec![s2]).unwrap();
        let xi = mix(vec![xi11.clone(), xi22.clone()], vec![0.5, 0.5]).unwrap();
        let nu = mix(vec![xi11, xi22], vec![0.75, 0.25]).unwrap();
        let kl = nu.kl_divergence(&xi).unwrap();
        let expect = 0.75 * (0.75f64 / 0.5).ln() + 0.25 * (0.25f64 / 0.5).ln();
        assert!((kl - expect).abs() < 1e-12);
        // reflect preserves KL against the reflected base
        let kl_r = nu
            .reflect()
            .kl_divergence(&xi.reflect())
            .unwrap();
        assert!((kl - kl_r).abs() < 1e-12);
    }

    #[test]
    fn kl_cross_family_is_structural_error() {
        let seg = Permuton::segments(vec![Segment::new((0.0, 0.0), (1.0, 1.0), 1.0).unwrap()])
            .unwrap();
        let lam = Permuton::lebesgue();
        assert!(matches!(
            seg.kl_divergence(&lam),
            Err(Error::Incompatible(_))
        ));
        assert!(matches!(lam.tv_distance(&seg), Err(Error::Incompatible(_))));
    }

    #[test]
    fn tv_examples() {
        let lam = Permuton::lebesgue();
        let mu1 = Permuton::grid(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(lam.tv_distance(&lam).unwrap(), 0.0);
        let tv = lam.tv_distance(&mu1).unwrap();
        assert!((tv - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reflect_involution_and_symmetry() {
        let mu = Permuton::grid(vec![
            vec![1.5, 0.5, 1.0],
            vec![0.25, 1.75, 1.0],
            vec![1.25, 0.75, 1.0],
        ])
        .unwrap();
        assert_eq!(mu.reflect().reflect(), mu);
        let mu_ell = Permuton::grid(vec![vec![1.5, 0.5], vec![0.5, 1.5]]).unwrap();
        assert_eq!(mu_ell.reflect(), mu_ell);
    }

    #[test]
    fn mixture_unwraps_singleton() {
        let lam = Permuton::lebesgue();
        let m = mix(vec![lam.clone()], vec![1.0]).unwrap();
        assert_eq!(m, lam);
    }

    #[test]
    fn rejects_axis_aligned_segment() {
        assert!(Segment::new((0.0, 0.5), (1.0, 0.5), 1.0).is_err());
    }

    #[test]
    fn rejects_bad_masses() {
        assert!(Permuton::grid(vec![vec![1.0, 1.0], vec![1.0, 2.0]]).is_err());
        assert!(Permuton::grid(vec![vec![-1.0, 2.0], vec![2.0, 1.0]]).is_err());
    }

    #[test]
    fn lcm_cap_enforced() {
        let a = Permuton::grid_flat(3, vec![1.0; 9]).unwrap();
        let b = Permuton::grid_flat(2048, vec![1.0; 2048 * 2048]).unwrap();
        assert!(matches!(a.kl_divergence(&b), Err(Error::Incompatible(_))));
    }

    #[test]
    fn draw_point_deterministic() {
        use rand::SeedableRng;
        let mu = Permuton::grid(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let mut r1 = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let mut r2 = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_eq!(mu.draw_point(&mut r1), mu.draw_point(&mut r2));
        }
    }
}
