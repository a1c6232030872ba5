//! Closed convex feasible sets with Euclidean projection, membership,
//! tangent-cone projection, and inward shrinking.
//!
//! Supported geometries: whole space, boxes (bounds may be infinite), balls,
//! the nonnegative orthant, halfspace intersections (polytopes, `Ax <= b`),
//! and finite products of the above. Projection onto a polytope uses an
//! active-set solve with a cycling guard, falling back to Dykstra's
//! alternating projections when the active-set iteration stalls.

use crate::linalg::{dist, dot, max_abs, norm, solve_dense, sub};
use thiserror::Error;

/// Absolute slack absorbed by membership tests, chosen to cover projection
/// round-off.
pub const MEMBER_SLACK: f64 = 1e-9;

/// Iteration cap shared by the feasibility search and the Dykstra fallback.
const PROJECTION_ITER_CAP: usize = 10_000;

/// Residual tolerance for the Dykstra fallback and feasibility searches.
const PROJECTION_RESIDUAL_TOL: f64 = 1e-10;

/// Active-constraint identification scale factor.
const ACTIVITY_TOL_FACTOR: f64 = 1e-8;

/// Largest active-constraint count handled by exact subset enumeration when
/// projecting onto a polyhedral tangent cone.
const CONE_ENUMERATION_LIMIT: usize = 10;

#[derive(Debug, Error)]
pub enum SetError {
    #[error("box has lower bound {lower} > upper bound {upper} in coordinate {index}")]
    EmptyBox { index: usize, lower: f64, upper: f64 },
    #[error("ball radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("polytope rows and right-hand side lengths differ ({rows} vs {rhs})")]
    ShapeMismatch { rows: usize, rhs: usize },
    #[error("no feasible point found for the polytope (max violation {violation:.3e})")]
    InfeasiblePolytope { violation: f64 },
    #[error("supplied point violates the polytope by {violation:.3e}")]
    InfeasibleSeedPoint { violation: f64 },
    #[error("shrink margin must be nonnegative, got {0}")]
    NegativeMargin(f64),
    #[error("shrinking by {margin} empties the set")]
    EmptyShrunkSet { margin: f64 },
    #[error("point lies {distance:.3e} outside the set (tolerance {tolerance:.1e}); tangent cone undefined")]
    NotInSet { distance: f64, tolerance: f64 },
    #[error("dimension mismatch: set has dimension {expected}, vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A nonempty closed convex subset of R^n.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    /// All of R^n.
    WholeSpace { dim: usize },
    /// Axis-aligned box; entries may be `-inf`/`+inf`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Euclidean ball. Radius zero only arises from shrinking.
    Ball { center: Vec<f64>, radius: f64 },
    /// Nonnegative orthant `x >= 0`.
    Orthant { dim: usize },
    /// Halfspace intersection `{ x : a_i . x <= b_i }` with a known feasible
    /// point stored at construction.
    Polytope {
        rows: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        feasible_point: Vec<f64>,
    },
    /// Cartesian product of factors.
    Product { factors: Vec<FeasibleSet> },
}

impl FeasibleSet {
    pub fn whole_space(dim: usize) -> Self {
        FeasibleSet::WholeSpace { dim }
    }

    pub fn hyper_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SetError> {
        assert_eq!(lower.len(), upper.len());
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo > hi {
                return Err(SetError::EmptyBox { index: i, lower: *lo, upper: *hi });
            }
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, SetError> {
        if !(radius > 0.0) {
            return Err(SetError::BadRadius(radius));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    pub fn orthant(dim: usize) -> Self {
        FeasibleSet::Orthant { dim }
    }

    /// Halfspace intersection. A feasible point is located by alternating
    /// projections from the origin; failure to find one is a construction
    /// error, never a projection error.
    pub fn polytope(rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self, SetError> {
        if rows.len() != rhs.len() {
            return Err(SetError::ShapeMismatch { rows: rows.len(), rhs: rhs.len() });
        }
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let seed = vec![0.0; dim];
        match find_feasible_point(&rows, &rhs, &seed) {
            Ok(point) => Ok(FeasibleSet::Polytope { rows, rhs, feasible_point: point }),
            Err(violation) => Err(SetError::InfeasiblePolytope { violation }),
        }
    }

    /// Halfspace intersection with a caller-supplied feasible point.
    pub fn polytope_with_point(
        rows: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        point: Vec<f64>,
    ) -> Result<Self, SetError> {
        if rows.len() != rhs.len() {
            return Err(SetError::ShapeMismatch { rows: rows.len(), rhs: rhs.len() });
        }
        let violation = max_violation(&rows, &rhs, &point);
        if violation > MEMBER_SLACK {
            return Err(SetError::InfeasibleSeedPoint { violation });
        }
        Ok(FeasibleSet::Polytope { rows, rhs, feasible_point: point })
    }

    pub fn product(factors: Vec<FeasibleSet>) -> Self {
        FeasibleSet::Product { factors }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::WholeSpace { dim } | FeasibleSet::Orthant { dim } => *dim,
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::Polytope { feasible_point, .. } => feasible_point.len(),
            FeasibleSet::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), SetError> {
        if v.len() != self.dim() {
            return Err(SetError::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    /// Euclidean projection: the unique nearest point of the set.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            FeasibleSet::WholeSpace { .. } => v.to_vec(),
            FeasibleSet::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
                .collect(),
            FeasibleSet::Ball { center, radius } => {
                let u = sub(v, center);
                let d = norm(&u);
                if d <= *radius {
                    v.to_vec()
                } else {
                    let s = radius / d;
                    center.iter().zip(&u).map(|(c, ui)| c + s * ui).collect()
                }
            }
            FeasibleSet::Orthant { .. } => v.iter().map(|x| x.max(0.0)).collect(),
            FeasibleSet::Polytope { rows, rhs, feasible_point } => {
                project_halfspaces(rows, rhs, v, feasible_point)
            }
            FeasibleSet::Product { factors } => {
                let mut out = Vec::with_capacity(v.len());
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    out.extend(f.project(&v[offset..offset + d]));
                    offset += d;
                }
                out
            }
        }
    }

    /// Euclidean distance from `v` to the set.
    pub fn distance(&self, v: &[f64]) -> f64 {
        match self {
            FeasibleSet::WholeSpace { .. } => 0.0,
            FeasibleSet::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(x, (lo, hi))| {
                    let d = if x < lo { lo - x } else if x > hi { x - hi } else { 0.0 };
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            FeasibleSet::Ball { center, radius } => (dist(v, center) - radius).max(0.0),
            FeasibleSet::Orthant { .. } => v
                .iter()
                .map(|x| x.min(0.0))
                .map(|d| d * d)
                .sum::<f64>()
                .sqrt(),
            FeasibleSet::Polytope { .. } => dist(v, &self.project(v)),
            FeasibleSet::Product { factors } => {
                let mut acc = 0.0;
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    let fd = f.distance(&v[offset..offset + d]);
                    acc += fd * fd;
                    offset += d;
                }
                acc.sqrt()
            }
        }
    }

    /// True when `v` lies within distance `tol` of the set, up to the fixed
    /// numerical slack of [`MEMBER_SLACK`].
    pub fn member(&self, v: &[f64], tol: f64) -> bool {
        debug_assert!(tol >= 0.0);
        self.distance(v) <= tol + MEMBER_SLACK
    }

    /// Projection of `v` onto the tangent cone of the set at `x`.
    ///
    /// At interior points this is the identity. `x` must belong to the set
    /// within [`MEMBER_SLACK`].
    pub fn tangent_project(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, SetError> {
        self.check_dim(x)?;
        self.check_dim(v)?;
        let d = self.distance(x);
        if d > MEMBER_SLACK {
            return Err(SetError::NotInSet { distance: d, tolerance: MEMBER_SLACK });
        }
        Ok(self.tangent_project_inner(x, v))
    }

    fn tangent_project_inner(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            FeasibleSet::WholeSpace { .. } => v.to_vec(),
            FeasibleSet::Box { lower, upper } => {
                let scale = lower
                    .iter()
                    .chain(upper.iter())
                    .filter(|b| b.is_finite())
                    .fold(0.0_f64, |m, b| m.max(b.abs()));
                let act = ACTIVITY_TOL_FACTOR * (1.0 + scale);
                x.iter()
                    .zip(v)
                    .zip(lower.iter().zip(upper))
                    .map(|((xi, vi), (lo, hi))| {
                        let at_lo = xi - lo <= act;
                        let at_hi = hi - xi <= act;
                        match (at_lo, at_hi) {
                            (true, true) => 0.0,
                            (true, false) => vi.max(0.0),
                            (false, true) => vi.min(0.0),
                            (false, false) => *vi,
                        }
                    })
                    .collect()
            }
            FeasibleSet::Ball { center, radius } => {
                let u = sub(x, center);
                let act = ACTIVITY_TOL_FACTOR * (1.0 + radius);
                if radius - norm(&u) > act {
                    return v.to_vec();
                }
                // Boundary: remove the outward radial component if present.
                let s = dot(v, &u);
                if s <= 0.0 {
                    v.to_vec()
                } else {
                    let uu = dot(&u, &u);
                    v.iter().zip(&u).map(|(vi, ui)| vi - s / uu * ui).collect()
                }
            }
            FeasibleSet::Orthant { .. } => x
                .iter()
                .zip(v)
                .map(|(xi, vi)| if *xi <= ACTIVITY_TOL_FACTOR { vi.max(0.0) } else { *vi })
                .collect(),
            FeasibleSet::Polytope { rows, rhs, .. } => {
                let act = ACTIVITY_TOL_FACTOR * (1.0 + max_abs(rhs));
                let active: Vec<usize> = (0..rows.len())
                    .filter(|&i| dot(&rows[i], x) >= rhs[i] - act)
                    .collect();
                if active.is_empty() {
                    return v.to_vec();
                }
                let active_rows: Vec<&[f64]> = active.iter().map(|&i| rows[i].as_slice()).collect();
                project_polyhedral_cone(&active_rows, v)
            }
            FeasibleSet::Product { factors } => {
                let mut out = Vec::with_capacity(v.len());
                let mut offset = 0;
                for f in factors {
                    let d = f.dim();
                    out.extend(f.tangent_project_inner(&x[offset..offset + d], &v[offset..offset + d]));
                    offset += d;
                }
                out
            }
        }
    }

    /// Inward shrink: the returned set `S` satisfies `S + margin*B` contained
    /// in the original set. Margin zero returns an identical set.
    pub fn shrink(&self, margin: f64) -> Result<FeasibleSet, SetError> {
        if margin < 0.0 {
            return Err(SetError::NegativeMargin(margin));
        }
        if margin == 0.0 {
            return Ok(self.clone());
        }
        match self {
            FeasibleSet::WholeSpace { dim } => Ok(FeasibleSet::WholeSpace { dim: *dim }),
            FeasibleSet::Box { lower, upper } => {
                let lo: Vec<f64> = lower.iter().map(|l| l + margin).collect();
                let hi: Vec<f64> = upper.iter().map(|u| u - margin).collect();
                if lo.iter().zip(&hi).any(|(l, h)| l > h) {
                    return Err(SetError::EmptyShrunkSet { margin });
                }
                Ok(FeasibleSet::Box { lower: lo, upper: hi })
            }
            FeasibleSet::Ball { center, radius } => {
                let r = radius - margin;
                if r < 0.0 {
                    return Err(SetError::EmptyShrunkSet { margin });
                }
                Ok(FeasibleSet::Ball { center: center.clone(), radius: r })
            }
            FeasibleSet::Orthant { dim } => Ok(FeasibleSet::Box {
                lower: vec![margin; *dim],
                upper: vec![f64::INFINITY; *dim],
            }),
            FeasibleSet::Polytope { rows, rhs, feasible_point } => {
                let shrunk_rhs: Vec<f64> = rows
                    .iter()
                    .zip(rhs)
                    .map(|(row, b)| b - margin * norm(row))
                    .collect();
                match find_feasible_point(rows, &shrunk_rhs, feasible_point) {
                    Ok(point) => Ok(FeasibleSet::Polytope {
                        rows: rows.clone(),
                        rhs: shrunk_rhs,
                        feasible_point: point,
                    }),
                    Err(_) => Err(SetError::EmptyShrunkSet { margin }),
                }
            }
            FeasibleSet::Product { factors } => {
                let shrunk = factors
                    .iter()
                    .map(|f| f.shrink(margin))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(FeasibleSet::Product { factors: shrunk })
            }
        }
    }

    /// A point guaranteed to lie in the set; used for validation and seeding.
    pub fn interior_point(&self) -> Vec<f64> {
        match self {
            FeasibleSet::WholeSpace { dim } => vec![0.0; *dim],
            FeasibleSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (true, false) => *lo,
                    (false, true) => *hi,
                    (false, false) => 0.0,
                })
                .collect(),
            FeasibleSet::Ball { center, .. } => center.clone(),
            FeasibleSet::Orthant { dim } => vec![0.0; *dim],
            FeasibleSet::Polytope { feasible_point, .. } => feasible_point.clone(),
            FeasibleSet::Product { factors } => {
                factors.iter().flat_map(|f| f.interior_point()).collect()
            }
        }
    }
}

fn max_violation(rows: &[Vec<f64>], rhs: &[f64], point: &[f64]) -> f64 {
    rows.iter()
        .zip(rhs)
        .map(|(row, b)| dot(row, point) - b)
        .fold(0.0_f64, f64::max)
}

/// Cyclic projection onto each halfspace until all constraints hold. Returns
/// the found point or the residual violation after the iteration cap.
fn find_feasible_point(rows: &[Vec<f64>], rhs: &[f64], seed: &[f64]) -> Result<Vec<f64>, f64> {
    let mut y = seed.to_vec();
    for _ in 0..PROJECTION_ITER_CAP {
        let violation = max_violation(rows, rhs, &y);
        if violation <= PROJECTION_RESIDUAL_TOL {
            return Ok(y);
        }
        for (row, b) in rows.iter().zip(rhs) {
            let excess = dot(row, &y) - b;
            if excess > 0.0 {
                let nn = dot(row, row);
                if nn > 0.0 {
                    let s = excess / nn;
                    for (yi, ai) in y.iter_mut().zip(row) {
                        *yi -= s * ai;
                    }
                }
            }
        }
    }
    Err(max_violation(rows, rhs, &y))
}

/// Exact projection onto `{ y : rows . y <= rhs }` by an active-set solve
/// with a cycling guard; Dykstra's alternating projections as fallback.
fn project_halfspaces(rows: &[Vec<f64>], rhs: &[f64], v: &[f64], feasible_point: &[f64]) -> Vec<f64> {
    let scale = 1.0 + max_abs(rhs) + max_abs(v);
    let feas_tol = 1e-12 * scale;
    if max_violation(rows, rhs, v) <= feas_tol {
        return v.to_vec();
    }
    let cap = 50 * (rows.len() + 1);
    let mut working: Vec<usize> = Vec::new();
    for _ in 0..cap {
        match eq_project(rows, rhs, v, &working) {
            Some((y, multipliers)) => {
                // Most violated constraint outside the working set, if any.
                let mut worst: Option<(usize, f64)> = None;
                for (i, (row, b)) in rows.iter().zip(rhs).enumerate() {
                    if working.contains(&i) {
                        continue;
                    }
                    let excess = dot(row, &y) - b;
                    if excess > feas_tol && worst.map(|(_, w)| excess > w).unwrap_or(true) {
                        worst = Some((i, excess));
                    }
                }
                if let Some((i, _)) = worst {
                    working.push(i);
                    continue;
                }
                // Feasible; KKT needs nonnegative multipliers.
                let neg = multipliers
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| **m < -1e-12)
                    .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)));
                match neg {
                    None => return y,
                    Some((k, _)) => {
                        working.remove(k);
                    }
                }
            }
            None => {
                // Dependent working set; drop the most recent addition.
                if working.pop().is_none() {
                    break;
                }
            }
        }
    }
    dykstra(rows, rhs, v, feasible_point)
}

/// Equality-constrained projection of `v` onto `{ y : rows[i] . y = rhs[i],
/// i in working }`, with the least-squares multipliers. `None` when the
/// working rows are numerically dependent.
fn eq_project(
    rows: &[Vec<f64>],
    rhs: &[f64],
    v: &[f64],
    working: &[usize],
) -> Option<(Vec<f64>, Vec<f64>)> {
    if working.is_empty() {
        return Some((v.to_vec(), Vec::new()));
    }
    let k = working.len();
    let mut gram = vec![vec![0.0; k]; k];
    let mut resid = vec![0.0; k];
    for (p, &i) in working.iter().enumerate() {
        for (q, &j) in working.iter().enumerate() {
            gram[p][q] = dot(&rows[i], &rows[j]);
        }
        resid[p] = dot(&rows[i], v) - rhs[i];
    }
    let lam = solve_dense(&mut gram, &mut resid, 1e-12)?;
    let mut y = v.to_vec();
    for (p, &i) in working.iter().enumerate() {
        for (yi, ai) in y.iter_mut().zip(&rows[i]) {
            *yi -= lam[p] * ai;
        }
    }
    Some((y, lam))
}

/// Dykstra's algorithm for the intersection of halfspaces.
fn dykstra(rows: &[Vec<f64>], rhs: &[f64], v: &[f64], feasible_point: &[f64]) -> Vec<f64> {
    let m = rows.len();
    let mut y = v.to_vec();
    let mut corrections = vec![vec![0.0; v.len()]; m];
    for _ in 0..PROJECTION_ITER_CAP {
        let mut shift = 0.0_f64;
        for i in 0..m {
            let mut z: Vec<f64> = y.iter().zip(&corrections[i]).map(|(a, b)| a + b).collect();
            let excess = dot(&rows[i], &z) - rhs[i];
            if excess > 0.0 {
                let nn = dot(&rows[i], &rows[i]);
                if nn > 0.0 {
                    let s = excess / nn;
                    for (zi, ai) in z.iter_mut().zip(&rows[i]) {
                        *zi -= s * ai;
                    }
                }
            }
            for j in 0..v.len() {
                let new_corr = y[j] + corrections[i][j] - z[j];
                shift = shift.max((z[j] - y[j]).abs());
                corrections[i][j] = new_corr;
                y[j] = z[j];
            }
        }
        if shift <= PROJECTION_RESIDUAL_TOL {
            break;
        }
    }
    // The iterate can end marginally infeasible; nudge along the segment to
    // the stored feasible point, which stays within round-off of optimal.
    if max_violation(rows, rhs, &y) > MEMBER_SLACK {
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let cand: Vec<f64> = y
                .iter()
                .zip(feasible_point)
                .map(|(a, b)| a + mid * (b - a))
                .collect();
            if max_violation(rows, rhs, &cand) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        y = y.iter().zip(feasible_point).map(|(a, b)| a + hi * (b - a)).collect();
    }
    y
}

/// Projection of `v` onto the polyhedral cone `{ d : rows . d <= 0 }`.
///
/// For up to [`CONE_ENUMERATION_LIMIT`] rows this enumerates equality subsets
/// and returns the feasible minimizer exactly; beyond that it reuses the
/// active-set machinery with a zero right-hand side.
fn project_polyhedral_cone(rows: &[&[f64]], v: &[f64]) -> Vec<f64> {
    let m = rows.len();
    if m > CONE_ENUMERATION_LIMIT {
        let owned: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let zeros = vec![0.0; m];
        let origin = vec![0.0; v.len()];
        return project_halfspaces(&owned, &zeros, v, &origin);
    }
    let feas_tol = 1e-10 * (1.0 + max_abs(v));
    let mut best: Option<(f64, Vec<f64>)> = None;
    'subsets: for mask in 0..(1_u32 << m) {
        let subset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = subset.len();
        let y = if k == 0 {
            v.to_vec()
        } else {
            let mut gram = vec![vec![0.0; k]; k];
            let mut resid = vec![0.0; k];
            for (p, &i) in subset.iter().enumerate() {
                for (q, &j) in subset.iter().enumerate() {
                    gram[p][q] = dot(rows[i], rows[j]);
                }
                resid[p] = dot(rows[i], v);
            }
            match solve_dense(&mut gram, &mut resid, 1e-12) {
                Some(lam) => {
                    let mut y = v.to_vec();
                    for (p, &i) in subset.iter().enumerate() {
                        for (yi, ai) in y.iter_mut().zip(rows[i]) {
                            *yi -= lam[p] * ai;
                        }
                    }
                    y
                }
                None => continue 'subsets,
            }
        };
        for row in rows {
            if dot(row, &y) > feas_tol {
                continue 'subsets;
            }
        }
        let d = dist(&y, v);
        if best.as_ref().map(|(bd, _)| d < *bd).unwrap_or(true) {
            best = Some((d, y));
        }
    }
    best.expect("the zero vector is always in the cone").1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn unit_box2() -> FeasibleSet {
        FeasibleSet::hyper_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
    }

    fn disk() -> FeasibleSet {
        FeasibleSet::ball(vec![1.5, 0.0], 1.5).unwrap()
    }

    #[test]
    fn box_projection_clamps() {
        let p = unit_box2().project(&[2.0, 0.5]);
        assert_eq!(p, vec![1.0, 0.5]);
    }

    #[test]
    fn ball_projection_is_radial() {
        let p = disk().project(&[4.5, 0.0]);
        assert!((p[0] - 3.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn polytope_projection_symmetric_halfspace() {
        let set = FeasibleSet::polytope(
            vec![vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        let p = set.project(&[1.0, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
    }

    /// Dense grid search oracle for the projection: coarse pass at the given
    /// resolution, then a refinement pass around the best cell.
    fn grid_projection_oracle(
        rows: &[Vec<f64>],
        rhs: &[f64],
        v: &[f64],
        lo: [f64; 2],
        hi: [f64; 2],
        res: f64,
    ) -> Vec<f64> {
        let mut best = (f64::INFINITY, vec![0.0, 0.0]);
        let scan = |lo: [f64; 2], hi: [f64; 2], step: f64, best: &mut (f64, Vec<f64>)| {
            let nx = ((hi[0] - lo[0]) / step).ceil() as usize;
            let ny = ((hi[1] - lo[1]) / step).ceil() as usize;
            for i in 0..=nx {
                for j in 0..=ny {
                    let y = [lo[0] + i as f64 * step, lo[1] + j as f64 * step];
                    if rows.iter().zip(rhs).all(|(row, b)| dot(row, &y) <= b + 1e-12) {
                        let d = dist(&y, v);
                        if d < best.0 {
                            *best = (d, y.to_vec());
                        }
                    }
                }
            }
        };
        scan(lo, hi, res, &mut best);
        let c = [best.1[0], best.1[1]];
        scan(
            [c[0] - 2.0 * res, c[1] - 2.0 * res],
            [c[0] + 2.0 * res, c[1] + 2.0 * res],
            res / 100.0,
            &mut best,
        );
        best.1
    }

    #[test]
    fn polytope_projection_matches_grid_oracle() {
        let rows = vec![vec![1.0, 2.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
        let rhs = vec![2.0, 0.0, 0.0];
        let set = FeasibleSet::polytope(rows.clone(), rhs.clone()).unwrap();
        let v = [2.0, 2.0];
        let oracle = grid_projection_oracle(&rows, &rhs, &v, [0.0, 0.0], [2.2, 1.2], 1e-3);
        let p = set.project(&v);
        assert!(dist(&p, &oracle) < 2e-4, "p={p:?} oracle={oracle:?}");
        // Analytic check: nearest point on x1 + 2 x2 = 2.
        assert!((p[0] - 1.2).abs() < 1e-9 && (p[1] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn membership_examples() {
        let b = unit_box2();
        assert!(b.member(&[0.0, 0.0], 0.0));
        assert!(!b.member(&[1.0 + 1e-6, 0.0], 0.0));
        assert!(disk().member(&[3.0005, 0.0], 1e-3));
        let v = [7.3, -2.2];
        assert!(b.member(&b.project(&v), 0.0));
    }

    #[test]
    fn infeasible_polytope_is_a_construction_error() {
        let err = FeasibleSet::polytope(vec![vec![1.0], vec![-1.0]], vec![-1.0, -1.0]);
        assert!(matches!(err, Err(SetError::InfeasiblePolytope { .. })));
    }

    #[test]
    fn tangent_interior_is_identity() {
        let d = unit_box2().tangent_project(&[0.0, 0.0], &[3.0, -2.0]).unwrap();
        assert_eq!(d, vec![3.0, -2.0]);
    }

    #[test]
    fn tangent_face_removes_outward_component() {
        let d = unit_box2().tangent_project(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(d, vec![0.0, 1.0]);
    }

    /// Brute-force oracle over the active-constraint subsets at a box corner.
    fn corner_cone_oracle(active: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
        let refs: Vec<&[f64]> = active.iter().map(|r| r.as_slice()).collect();
        project_polyhedral_cone(&refs, v)
    }

    #[test]
    fn tangent_corner_matches_subset_enumeration() {
        // Corner (1,1) of the unit box: active outward normals e1 and e2.
        let oracle = corner_cone_oracle(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, -1.0]);
        let d = unit_box2().tangent_project(&[1.0, 1.0], &[1.0, -1.0]).unwrap();
        assert!(dist(&d, &oracle) < 1e-12);
        assert_eq!(d, vec![0.0, -1.0]);
    }

    #[test]
    fn tangent_requires_membership() {
        let r = unit_box2().tangent_project(&[2.0, 0.0], &[1.0, 0.0]);
        assert!(matches!(r, Err(SetError::NotInSet { .. })));
    }

    #[test]
    fn shrink_examples() {
        let b = unit_box2().shrink(1e-2).unwrap();
        match &b {
            FeasibleSet::Box { lower, upper } => {
                assert_eq!(lower, &vec![-0.99, -0.99]);
                assert_eq!(upper, &vec![0.99, 0.99]);
            }
            _ => panic!("expected box"),
        }
        let d = disk().shrink(0.1).unwrap();
        match &d {
            FeasibleSet::Ball { radius, .. } => assert!((radius - 1.4).abs() < 1e-15),
            _ => panic!("expected ball"),
        }
        assert_eq!(disk().shrink(0.0).unwrap(), disk());
        assert!(matches!(
            unit_box2().shrink(1.5),
            Err(SetError::EmptyShrunkSet { .. })
        ));
    }

    #[test]
    fn shrunk_set_keeps_margin_to_base() {
        let mut rng = StdRng::seed_from_u64(11);
        let margin = 0.05;
        let sets = [
            unit_box2(),
            disk(),
            FeasibleSet::polytope(
                vec![vec![1.0, 2.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
                vec![2.0, 0.0, 0.0],
            )
            .unwrap(),
        ];
        for set in &sets {
            let shrunk = set.shrink(margin).unwrap();
            for _ in 0..500 {
                let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let p = shrunk.project(&v);
                // Probe directions of length `margin` stay inside the base set.
                let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let probe = [p[0] + margin * angle.cos(), p[1] + margin * angle.sin()];
                assert!(set.member(&probe, 1e-9), "probe {probe:?} escaped via {p:?}");
            }
        }
    }

    #[test]
    fn projection_nonexpansive_bulk() {
        let mut rng = StdRng::seed_from_u64(7);
        let polytope = FeasibleSet::polytope(
            vec![vec![1.0, 2.0], vec![-1.0, 1.0], vec![0.0, -1.0]],
            vec![2.0, 1.0, 0.5],
        )
        .unwrap();
        let sets = [unit_box2(), disk(), FeasibleSet::orthant(2), polytope];
        for _ in 0..10_000 {
            let u: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            for set in &sets {
                let pu = set.project(&u);
                let pv = set.project(&v);
                assert!(dist(&pu, &pv) <= dist(&u, &v) + 1e-9);
            }
        }
    }

    #[test]
    fn variational_inequality_holds() {
        let mut rng = StdRng::seed_from_u64(13);
        let sets = [unit_box2(), disk()];
        for set in &sets {
            for _ in 0..2_000 {
                let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let p = set.project(&v);
                // Sampled points of the set y: project random draws.
                let y = set.project(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
                let r = dot(&sub(&v, &p), &sub(&p, &y));
                assert!(r >= -1e-9, "VI violated: {r}");
            }
        }
    }

    #[test]
    fn tangent_decomposition_properties() {
        let mut rng = StdRng::seed_from_u64(17);
        let polytope = FeasibleSet::polytope(
            vec![vec![1.0, 2.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            vec![2.0, 0.0, 0.0],
        )
        .unwrap();
        let sets = [unit_box2(), disk(), polytope];
        for set in &sets {
            for _ in 0..2_000 {
                // Random boundary point: project a far-away draw.
                let far: Vec<f64> = (0..2).map(|_| rng.gen_range(-8.0..8.0)).collect();
                let x = set.project(&far);
                let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let d = set.tangent_project(&x, &v).unwrap();
                let eta = sub(&v, &d);
                assert!(dot(&eta, &d).abs() <= 1e-9, "eta.d = {}", dot(&eta, &d));
                assert!(
                    (dot(&v, &d) - dot(&d, &d)).abs() <= 1e-9,
                    "v.d != |d|^2: {} vs {}",
                    dot(&v, &d),
                    dot(&d, &d)
                );
            }
        }
    }

    #[test]
    fn product_projection_is_componentwise() {
        let prod = FeasibleSet::product(vec![unit_box2(), disk()]);
        let v = [3.0, -2.0, 4.5, 0.0];
        let p = prod.project(&v);
        let p1 = unit_box2().project(&v[0..2]);
        let p2 = disk().project(&v[2..4]);
        assert_eq!(&p[0..2], p1.as_slice());
        assert_eq!(&p[2..4], p2.as_slice());
    }

    #[test]
    fn projection_idempotent() {
        let mut rng = StdRng::seed_from_u64(23);
        let sets = [unit_box2(), disk()];
        for set in &sets {
            for _ in 0..500 {
                let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-6.0..6.0)).collect();
                let p = set.project(&v);
                let pp = set.project(&p);
                assert!(dist(&p, &pp) < 1e-12);
            }
        }
    }
}
