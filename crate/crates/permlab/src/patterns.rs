//! Permutations, patterns, and pattern densities.
//!
//! The *pattern density* `t_sigma` measures how often a pattern `sigma` of
//! size `k` occurs: in a permutation `pi` it is `k! * occ(sigma, pi) / n^k`
//! (occurrences of `sigma` among all `k`-subsets of positions, normalized so
//! densities over all patterns of one size sum to `1 + O(1/n)`); in a
//! measure `mu` on the unit square it is the probability that `k`
//! independent `mu`-points induce `sigma` when sorted by their
//! x-coordinates. For measures with continuous marginals the map
//! `pi -> t_sigma(pi)` converges to `mu -> t_sigma(mu)` along mu-random
//! permutations, which is what makes these densities the right "observables"
//! for limits of permutation models.
//!
//! Exact densities are available for every representable measure at `k = 2`
//! (closed forms for cell and segment pairs) and for grid-representable
//! measures at `k = 3`; everything else falls back to the Monte-Carlo
//! estimator [`t_sigma_measure_mc`].

use crate::error::{Error, Result};
use crate::measures::{Atom, Permuton, Rect};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Largest supported pattern size.
pub const K_MAX: usize = 4;

/// Atom-pair budget for the generic exact density of segment-containing
/// measures (all-grid measures use an `O(m^2)` prefix-sum path instead).
const ATOM_PAIR_CAP: usize = 4000;

/// A permutation of `{1, ..., n}` in one-line notation: `values()[i]` is the
/// image of position `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    v: Vec<usize>,
}

impl Permutation {
    pub fn new(v: Vec<usize>) -> Result<Self> {
        let n = v.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty permutation".into()));
        }
        let mut seen = vec![false; n + 1];
        for &x in &v {
            if x == 0 || x > n || seen[x] {
                return Err(Error::InvalidInput(format!(
                    "not a permutation of 1..={n}: {v:?}"
                )));
            }
            seen[x] = true;
        }
        Ok(Permutation { v })
    }

    /// The identity on `{1, ..., n}`.
    pub fn identity(n: usize) -> Result<Self> {
        Permutation::new((1..=n).collect())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.v.len()
    }

    #[inline]
    pub fn values(&self) -> &[usize] {
        &self.v
    }

    /// Inverse permutation: `inverse()[v - 1] = position of value v`.
    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0usize; self.v.len()];
        for (pos, &val) in self.v.iter().enumerate() {
            inv[val - 1] = pos + 1;
        }
        Permutation { v: inv }
    }

    /// All permutations of `{1, ..., n}` in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur = (1..=n).collect::<Vec<_>>();
        loop {
            out.push(Permutation { v: cur.clone() });
            // next lexicographic permutation
            let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
                break;
            };
            let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
            cur.swap(i, j);
            cur[i + 1..].reverse();
        }
        out
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.v.len() <= 9 {
            for x in &self.v {
                write!(f, "{x}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.v.iter().map(|x| x.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl FromStr for Permutation {
    type Err = Error;

    /// Parses either the compact digit form (`"321"`, sizes up to 9) or the
    /// comma-separated one-line form (`"3,2,1"`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidInput("empty permutation string".into()));
        }
        let v: Vec<usize> = if s.contains(',') {
            s.split(',')
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidInput(format!("bad entry {p:?} in {s:?}")))
                })
                .collect::<Result<_>>()?
        } else {
            s.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::InvalidInput(format!("bad character {c:?} in {s:?}")))
                })
                .collect::<Result<_>>()?
        };
        Permutation::new(v)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Vec<usize> {
        p.v
    }
}

/// A pattern: a permutation of size at most [`K_MAX`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Permutation", into = "Permutation")]
pub struct Pattern {
    perm: Permutation,
}

impl Pattern {
    pub fn new(perm: Permutation) -> Result<Self> {
        if perm.n() > K_MAX {
            return Err(Error::InvalidInput(format!(
                "pattern size {} exceeds the supported maximum {K_MAX}",
                perm.n()
            )));
        }
        Ok(Pattern { perm })
    }

    /// Parse from the compact digit form, e.g. `"21"` or `"132"`.
    pub fn parse(s: &str) -> Result<Self> {
        Pattern::new(s.parse()?)
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.perm.n()
    }

    #[inline]
    pub fn values(&self) -> &[usize] {
        self.perm.values()
    }

    pub fn as_permutation(&self) -> &Permutation {
        &self.perm
    }

    /// True for the inversion pattern `21`.
    pub fn is_21(&self) -> bool {
        self.values() == [2, 1]
    }

    /// True for the ascent pattern `12`.
    pub fn is_12(&self) -> bool {
        self.values() == [1, 2]
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.perm.fmt(f)
    }
}

impl FromStr for Pattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Pattern::parse(s)
    }
}

impl TryFrom<Permutation> for Pattern {
    type Error = Error;
    fn try_from(p: Permutation) -> Result<Self> {
        Pattern::new(p)
    }
}

impl From<Pattern> for Permutation {
    fn from(p: Pattern) -> Permutation {
        p.perm
    }
}

/// A point of the unit square.
pub type Point = (f64, f64);

/// A configuration of points with pairwise-distinct x- and y-coordinates
/// (the configurations that induce a permutation unambiguously).
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    points: Vec<Point>,
}

impl PointConfig {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        check_distinct(&points)?;
        Ok(PointConfig { points })
    }

    #[inline]
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The permutation induced by the configuration (cannot fail: the
    /// constructor already rejected tied coordinates).
    pub fn induced(&self) -> Permutation {
        induced_permutation(&self.points).expect("validated configuration")
    }
}

fn check_distinct(points: &[Point]) -> Result<()> {
    let n = points.len();
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN coordinate"));
    ys.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN coordinate"));
    for i in 1..n {
        if xs[i] == xs[i - 1] || ys[i] == ys[i - 1] {
            return Err(Error::TiedCoordinates);
        }
    }
    Ok(())
}

/// The permutation induced by a point configuration: sort the points by
/// x-coordinate and read off the ranks of their y-coordinates. Tied
/// coordinates are an error (`O(n log n)`).
pub fn induced_permutation(points: &[Point]) -> Result<Permutation> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty point configuration".into()));
    }
    check_distinct(points)?;
    let mut by_x: Vec<usize> = (0..n).collect();
    by_x.sort_by(|&a, &b| points[a].0.partial_cmp(&points[b].0).unwrap());
    // rank the y-values of the x-sorted sequence
    let mut by_y: Vec<usize> = (0..n).collect();
    by_y.sort_by(|&a, &b| points[by_x[a]].1.partial_cmp(&points[by_x[b]].1).unwrap());
    let mut v = vec![0usize; n];
    for (rank, &pos) in by_y.iter().enumerate() {
        v[pos] = rank + 1;
    }
    Ok(Permutation { v })
}

/// Pattern indicator: `1.0` when the points induce exactly `sigma`, `0.0`
/// otherwise — including on tied coordinates, so that it is a well-defined
/// (measurable, symmetric) function of arbitrary point tuples.
pub fn h_sigma(sigma: &Pattern, points: &[Point]) -> f64 {
    if points.len() != sigma.k() {
        return 0.0;
    }
    match induced_permutation(points) {
        Ok(p) if p.values() == sigma.values() => 1.0,
        _ => 0.0,
    }
}

/// Number of inversions (occurrences of `21`) via a Fenwick tree,
/// `O(n log n)`.
pub fn inversion_count(pi: &Permutation) -> u64 {
    let n = pi.n();
    let mut tree = vec![0u64; n + 1];
    let add = |tree: &mut [u64], mut i: usize| {
        while i <= n {
            tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    };
    let query = |tree: &[u64], mut i: usize| -> u64 {
        let mut s = 0;
        while i > 0 {
            s += tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    };
    let mut inv = 0u64;
    for (seen, &val) in pi.values().iter().enumerate() {
        // values already placed that are larger than val
        inv += seen as u64 - query(&tree, val);
        add(&mut tree, val);
    }
    inv
}

/// Number of `k`-subsets of positions whose values form the pattern `sigma`.
/// Fast paths: `21` (inversions) and `12` (co-inversions); otherwise pruned
/// subset enumeration.
pub fn occurrences(sigma: &Pattern, pi: &Permutation) -> u64 {
    let (k, n) = (sigma.k(), pi.n());
    if k > n {
        return 0;
    }
    if k == 1 {
        return n as u64;
    }
    if sigma.is_21() {
        return inversion_count(pi);
    }
    if sigma.is_12() {
        let pairs = (n as u64) * (n as u64 - 1) / 2;
        return pairs - inversion_count(pi);
    }
    occurrences_brute(sigma, pi)
}

/// Reference implementation: enumerate position subsets in increasing order,
/// pruning any prefix whose relative ranks already disagree with `sigma`.
pub fn occurrences_brute(sigma: &Pattern, pi: &Permutation) -> u64 {
    let (k, n) = (sigma.k(), pi.n());
    if k > n {
        return 0;
    }
    let sig = sigma.values();
    let vals = pi.values();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut count = 0u64;

    fn prefix_matches(chosen: &[usize], sig: &[usize]) -> bool {
        let j = chosen.len();
        for a in 0..j {
            for b in a + 1..j {
                if (chosen[a] < chosen[b]) != (sig[a] < sig[b]) {
                    return false;
                }
            }
        }
        true
    }

    fn rec(
        vals: &[usize],
        sig: &[usize],
        start: usize,
        chosen: &mut Vec<usize>,
        count: &mut u64,
    ) {
        if chosen.len() == sig.len() {
            *count += 1;
            return;
        }
        // not enough positions left to finish the pattern
        let need = sig.len() - chosen.len();
        for i in start..=vals.len().saturating_sub(need) {
            chosen.push(vals[i]);
            // only the pairs involving the newest entry can newly disagree
            let j = chosen.len() - 1;
            let ok = (0..j).all(|a| (chosen[a] < chosen[j]) == (sig[a] < sig[j]));
            if ok {
                rec(vals, sig, i + 1, chosen, count);
            }
            chosen.pop();
        }
    }

    debug_assert!(prefix_matches(&chosen, sig));
    rec(vals, sig, 0, &mut chosen, &mut count);
    count
}

/// Pattern density of a permutation: `k! * occ(sigma, pi) / n^k`.
pub fn t_sigma_perm(sigma: &Pattern, pi: &Permutation) -> f64 {
    let k = sigma.k();
    let n = pi.n() as f64;
    let kfact: f64 = (1..=k).product::<usize>() as f64;
    kfact * occurrences(sigma, pi) as f64 / n.powi(k as i32)
}

/// Inversion density of a permutation: `2 * inv(pi) / n^2`, the `sigma = 21`
/// case of [`t_sigma_perm`].
pub fn t_21_perm(pi: &Permutation) -> f64 {
    let n = pi.n() as f64;
    2.0 * inversion_count(pi) as f64 / (n * n)
}

/// Exact pattern density of a measure.
///
/// Supported: `k = 1` (trivially 1); `k = 2` for every representable
/// measure; `k = 3` for grid-representable measures of common resolution at
/// most 16. Larger cases are directed to [`t_sigma_measure_mc`].
pub fn t_sigma_measure_exact(sigma: &Pattern, mu: &Permuton) -> Result<f64> {
    match sigma.k() {
        1 => Ok(1.0),
        2 => {
            let t21 = t_21_measure_exact(mu)?;
            Ok(if sigma.is_21() { t21 } else { 1.0 - t21 })
        }
        3 => {
            let grid = mu.common_grid()?.ok_or_else(|| {
                Error::Unsupported(
                    "exact size-3 densities need a grid-representable measure; \
                     use the Monte-Carlo estimator for segment measures"
                        .into(),
                )
            })?;
            if grid.resolution() > 16 {
                return Err(Error::Unsupported(format!(
                    "exact size-3 densities are limited to grid resolution 16 \
                     (got {}); use the Monte-Carlo estimator",
                    grid.resolution()
                )));
            }
            Ok(t_k3_grid(sigma, &grid))
        }
        _ => Err(Error::Unsupported(
            "exact densities are implemented for sizes 1-3; \
             use the Monte-Carlo estimator for size 4"
                .into(),
        )),
    }
}

/// Exact inversion density `t_21` of a measure:
/// `2 * P(x_1 < x_2, y_1 > y_2)` for two independent points.
pub fn t_21_measure_exact(mu: &Permuton) -> Result<f64> {
    if let Some(grid) = mu.common_grid()? {
        return Ok(t_21_grid(&grid));
    }
    let atoms = mu.atoms();
    if atoms.len() > ATOM_PAIR_CAP {
        return Err(Error::Unsupported(format!(
            "too many mass atoms ({}) for the exact pair integral; \
             use the Monte-Carlo estimator",
            atoms.len()
        )));
    }
    let mut p = 0.0;
    for a in &atoms {
        for b in &atoms {
            p += a.mass() * b.mass() * pair_prob_lt_gt(a, b);
        }
    }
    Ok(2.0 * p)
}

/// `t_21` of a single grid by 2-D suffix sums, `O(m^2)`.
///
/// For an ordered pair of independent points in cells `c, c'` the
/// probability of `x < x', y > y'` is 1 when `c'` is strictly right of and
/// strictly below `c`, `1/2` when the cells share exactly one of
/// column/row on the correct side, and `1/4` within one cell.
fn t_21_grid(grid: &crate::measures::Grid) -> f64 {
    let m = grid.resolution();
    let mass = |i: usize, j: usize| grid.cell_mass(i, j);
    // below[i][j] = sum of masses in column i strictly below row j
    // right_below[i][j] = sum over columns > i, rows < j
    let mut below = vec![0.0; m * m];
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..m {
            below[i * m + j] = acc;
            acc += mass(i, j);
        }
    }
    let mut right = vec![0.0; m * m]; // same row, columns strictly right
    for j in 0..m {
        let mut acc = 0.0;
        for i in (0..m).rev() {
            right[i * m + j] = acc;
            acc += mass(i, j);
        }
    }
    let mut right_below = vec![0.0; m * m];
    for i in (0..m).rev() {
        for j in 0..m {
            let col_right = if i + 1 < m { right_below[(i + 1) * m + j] + below[(i + 1) * m + j] } else { 0.0 };
            // right_below(i,j) = below-part of column i+1 plus everything right of it
            right_below[i * m + j] = col_right;
        }
    }
    let mut p = 0.0;
    for i in 0..m {
        for j in 0..m {
            let mc = mass(i, j);
            if mc == 0.0 {
                continue;
            }
            p += mc
                * (right_below[i * m + j]
                    + 0.5 * below[i * m + j]
                    + 0.5 * right[i * m + j]
                    + 0.25 * mc);
        }
    }
    2.0 * p
}

/// `P(x_A < x_B, y_A > y_B)` for independent points `A`, `B` drawn from two
/// normalized mass atoms.
fn pair_prob_lt_gt(a: &Atom, b: &Atom) -> f64 {
    match (a, b) {
        (Atom::Cell { rect: ra, .. }, Atom::Cell { rect: rb, .. }) => {
            // independent coordinates on both sides: the probability factors
            let px = prob_uniform_lt(ra.x_lo, ra.x_hi, rb.x_lo, rb.x_hi);
            let py = prob_uniform_lt(rb.y_lo, rb.y_hi, ra.y_lo, ra.y_hi);
            px * py
        }
        (Atom::Cell { rect, .. }, Atom::Seg(s)) => {
            // average over the segment parameter u of
            // P(x_A < x_B(u)) * P(y_A > y_B(u))
            let lx = affine_over(rect.x_lo, rect.x_hi, s.from.0, s.dx(), false);
            let ly = affine_over(rect.y_lo, rect.y_hi, s.from.1, s.dy(), true);
            integral_clamped_product(lx, ly)
        }
        (Atom::Seg(s), Atom::Cell { rect, .. }) => {
            let lx = affine_over(rect.x_lo, rect.x_hi, s.from.0, s.dx(), true);
            let ly = affine_over(rect.y_lo, rect.y_hi, s.from.1, s.dy(), false);
            integral_clamped_product(lx, ly)
        }
        (Atom::Seg(sa), Atom::Seg(sb)) => {
            // area in the (t, u) parameter square of two linear inequalities
            let poly = vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
            // x_A < x_B: dxa*t - dxb*u <= pb - pa
            let poly = clip_halfplane(&poly, sa.dx(), -sb.dx(), sb.from.0 - sa.from.0);
            // y_A > y_B: -dya*t + dyb*u <= qa - qb
            let poly = clip_halfplane(&poly, -sa.dy(), sb.dy(), sa.from.1 - sb.from.1);
            polygon_area(&poly)
        }
    }
}

/// `P(U < V)` for `U ~ U[a0,a1]`, `V ~ U[b0,b1]` (closed form via the
/// clamped-linear integral; degenerate intervals behave as point masses).
fn prob_uniform_lt(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    // parameterize V = b0 + u (b1 - b0); P(U < v) = clamp((v - a0)/(a1 - a0))
    let width_a = a1 - a0;
    if width_a <= 0.0 {
        // U is a point mass at a0
        let width_b = b1 - b0;
        if width_b <= 0.0 {
            return if a0 < b0 { 1.0 } else { 0.0 };
        }
        return ((b1 - a0) / width_b).clamp(0.0, 1.0);
    }
    let l = ((b0 - a0) / width_a, (b1 - b0) / width_a);
    integral_clamped_product(l, (1.0, 0.0))
}

/// Affine form of `P(coordinate of the cell side beats p0 + u*d)` as a
/// function of `u`, before clamping to `[0, 1]`.
///
/// With `flip = false`: `P(U < p0 + u d)` for `U ~ U[lo, hi]`;
/// with `flip = true`: `P(U > p0 + u d)`.
fn affine_over(lo: f64, hi: f64, p0: f64, d: f64, flip: bool) -> (f64, f64) {
    let w = hi - lo;
    if flip {
        ((hi - p0) / w, -d / w)
    } else {
        ((p0 - lo) / w, d / w)
    }
}

/// `∫_0^1 clamp01(a1 + b1 u) * clamp01(a2 + b2 u) du`, exactly.
///
/// Between saturation breakpoints both factors are linear, so the product is
/// quadratic and Simpson's rule on each piece is exact.
fn integral_clamped_product(l1: (f64, f64), l2: (f64, f64)) -> f64 {
    let mut brk = vec![0.0, 1.0];
    for (a, b) in [l1, l2] {
        if b != 0.0 {
            for target in [0.0, 1.0] {
                let u = (target - a) / b;
                if u > 0.0 && u < 1.0 {
                    brk.push(u);
                }
            }
        }
    }
    brk.sort_by(|a, b| a.partial_cmp(b).unwrap());
    brk.dedup();
    let f = |u: f64| {
        (l1.0 + l1.1 * u).clamp(0.0, 1.0) * (l2.0 + l2.1 * u).clamp(0.0, 1.0)
    };
    let mut acc = 0.0;
    for w in brk.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        if h > 0.0 {
            acc += h / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        }
    }
    acc
}

/// Sutherland–Hodgman clip of a convex polygon by the half-plane
/// `a x + b y <= c`.
pub(crate) fn clip_halfplane(poly: &[(f64, f64)], a: f64, b: f64, c: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    let inside = |p: (f64, f64)| a * p.0 + b * p.1 <= c;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (pin, qin) = (inside(p), inside(q));
        if pin {
            out.push(p);
        }
        if pin != qin {
            let denom = a * (q.0 - p.0) + b * (q.1 - p.1);
            let t = (c - a * p.0 - b * p.1) / denom;
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

/// Shoelace area of a simple polygon.
pub(crate) fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        s += p.0 * q.1 - q.0 * p.1;
    }
    0.5 * s.abs()
}

/// Probability that values uniform on the cells indexed by `(a, b, c)` come
/// out in increasing order: zero unless the indices are nondecreasing,
/// otherwise `1 / prod(group size!)` over runs of equal indices.
fn ordered_factor(a: usize, b: usize, c: usize) -> f64 {
    if !(a <= b && b <= c) {
        return 0.0;
    }
    if a == b && b == c {
        1.0 / 6.0
    } else if a == b || b == c {
        0.5
    } else {
        1.0
    }
}

/// Exact `t_sigma` for `k = 3` on a grid: sum over ordered cell triples of
/// the product of masses and the two ordering factors (columns in the order
/// of the points, rows in the order prescribed by `sigma`), `O(m^6)`.
fn t_k3_grid(sigma: &Pattern, grid: &crate::measures::Grid) -> f64 {
    let m = grid.resolution();
    let tau = sigma.as_permutation().inverse();
    let tv = tau.values();
    let mut acc = 0.0;
    for i1 in 0..m {
        for i2 in i1..m {
            for i3 in i2..m {
                let fx = ordered_factor(i1, i2, i3);
                for j1 in 0..m {
                    let m1 = grid.cell_mass(i1, j1);
                    if m1 == 0.0 {
                        continue;
                    }
                    for j2 in 0..m {
                        let m2 = grid.cell_mass(i2, j2);
                        if m2 == 0.0 {
                            continue;
                        }
                        for j3 in 0..m {
                            let m3 = grid.cell_mass(i3, j3);
                            if m3 == 0.0 {
                                continue;
                            }
                            let rows = [j1, j2, j3];
                            let fy = ordered_factor(
                                rows[tv[0] - 1],
                                rows[tv[1] - 1],
                                rows[tv[2] - 1],
                            );
                            acc += m1 * m2 * m3 * fx * fy;
                        }
                    }
                }
            }
        }
    }
    // column triples with i1 <= i2 <= i3 are the only nonzero terms, and the
    // free row loops still enumerate every ordered assignment among them
    6.0 * acc
}

/// Monte-Carlo pattern density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Sample mean of the pattern indicator.
    pub value: f64,
    /// Standard error of the mean (sample variance based).
    pub stderr: f64,
    /// Number of independent samples.
    pub n_samples: u64,
    /// RNG seed the estimate was produced with.
    pub seed: u64,
}

/// Monte-Carlo `t_sigma(mu)`: average of the pattern indicator over
/// `n_samples` independent `k`-point draws; deterministic for a given seed.
pub fn t_sigma_measure_mc(
    sigma: &Pattern,
    mu: &Permuton,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 samples for a standard error".into(),
        ));
    }
    let k = sigma.k();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    let mut pts = vec![(0.0, 0.0); k];
    for _ in 0..n_samples {
        for p in pts.iter_mut() {
            *p = mu.draw_point(&mut rng);
        }
        if h_sigma(sigma, &pts) == 1.0 {
            hits += 1;
        }
    }
    let n = n_samples as f64;
    let mean = hits as f64 / n;
    let stderr = (mean * (1.0 - mean) / (n - 1.0)).sqrt();
    Ok(McEstimate {
        value: mean,
        stderr,
        n_samples,
        seed,
    })
}

/// Inversion pair weight of a measure at a point:
/// `mu([0,x] x [y,1]) + mu([x,1] x [0,y])` — the mass of the set of points
/// forming an inversion with `(x, y)`.
pub fn pair_weight_21(mu: &Permuton, point: Point) -> f64 {
    let (x, y) = point;
    let upper_left = Rect {
        x_lo: 0.0,
        x_hi: x,
        y_lo: y,
        y_hi: 1.0,
    };
    let lower_right = Rect {
        x_lo: x,
        x_hi: 1.0,
        y_lo: 0.0,
        y_hi: y,
    };
    mu.box_mass(&upper_left) + mu.box_mass(&lower_right)
}
