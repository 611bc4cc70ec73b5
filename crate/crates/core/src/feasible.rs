//! Closed convex feasible sets with Euclidean projection oracles.
//!
//! Boxes, balls, slabs and cartesian products project in closed form.
//! A box cut by one halfspace or slab projects exactly by bisection on the
//! cut's multiplier, other polyhedra by a primal active-set method. Sets
//! involving balls go through Dykstra's alternating projection scheme,
//! capped at [`DYKSTRA_MAX_SWEEPS`] sweeps.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PsarpError, Result};

pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;
pub const DYKSTRA_TOL: f64 = 1e-10;
/// Membership slack used when certifying projected points.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

const KERNEL_SAMPLES: usize = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    /// `lo <= x <= hi`, infinite bounds allowed.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    Ball { center: DVector<f64>, radius: f64 },
    /// `a_k^T x <= b_k` for every pair.
    Halfspaces {
        normals: Vec<DVector<f64>>,
        offsets: Vec<f64>,
    },
    /// `lo <= a^T x <= hi`.
    Slab {
        normal: DVector<f64>,
        lo: f64,
        hi: f64,
    },
    /// Factors act on consecutive coordinate blocks.
    Product(Vec<FeasibleSet>),
    Intersection(Vec<FeasibleSet>),
}

/// A non-empty closed convex set in `R^n` together with a member point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    kind: SetKind,
    dim: usize,
    witness: DVector<f64>,
}

impl FeasibleSet {
    pub fn free(n: usize) -> Self {
        Self::boxed(
            DVector::from_element(n, f64::NEG_INFINITY),
            DVector::from_element(n, f64::INFINITY),
        )
        .expect("unbounded box is non-empty")
    }

    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(PsarpError::InvalidProblem(
                "box bounds have different lengths".into(),
            ));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h || l.is_nan() || h.is_nan()) {
            return Err(PsarpError::InvalidProblem("box has lo > hi".into()));
        }
        let witness = DVector::from_iterator(
            lo.len(),
            lo.iter().zip(hi.iter()).map(|(&l, &h)| 0.0f64.clamp(l, h)),
        );
        Ok(Self {
            dim: lo.len(),
            kind: SetKind::Box { lo, hi },
            witness,
        })
    }

    pub fn uniform_box(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(PsarpError::InvalidProblem(format!(
                "ball radius must be finite and non-negative, got {radius}"
            )));
        }
        Ok(Self {
            dim: center.len(),
            witness: center.clone(),
            kind: SetKind::Ball { center, radius },
        })
    }

    pub fn halfspaces(normals: Vec<DVector<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if normals.is_empty() || normals.len() != offsets.len() {
            return Err(PsarpError::InvalidProblem(
                "halfspace list needs matching non-empty normals and offsets".into(),
            ));
        }
        let dim = normals[0].len();
        if normals.iter().any(|a| a.len() != dim || a.norm() == 0.0) {
            return Err(PsarpError::InvalidProblem(
                "halfspace normals must be non-zero and share one dimension".into(),
            ));
        }
        Self::certify(SetKind::Halfspaces { normals, offsets }, dim)
    }

    pub fn slab(normal: DVector<f64>, lo: f64, hi: f64) -> Result<Self> {
        if normal.norm() == 0.0 || lo > hi {
            return Err(PsarpError::InvalidProblem(
                "slab needs a non-zero normal and lo <= hi".into(),
            ));
        }
        let t = 0.0f64.clamp(lo, hi);
        let witness = &normal * (t / normal.norm_squared());
        Ok(Self {
            dim: normal.len(),
            kind: SetKind::Slab { normal, lo, hi },
            witness,
        })
    }

    pub fn product(factors: Vec<FeasibleSet>) -> Result<Self> {
        if factors.is_empty() {
            return Err(PsarpError::InvalidProblem("empty cartesian product".into()));
        }
        let dim = factors.iter().map(|f| f.dim).sum();
        let witness = DVector::from_iterator(
            dim,
            factors.iter().flat_map(|f| f.witness.iter().copied().collect::<Vec<_>>()),
        );
        Ok(Self {
            dim,
            kind: SetKind::Product(factors),
            witness,
        })
    }

    pub fn intersection(parts: Vec<FeasibleSet>) -> Result<Self> {
        if parts.is_empty() {
            return Err(PsarpError::InvalidProblem("empty intersection".into()));
        }
        let dim = parts[0].dim;
        if parts.iter().any(|p| p.dim != dim) {
            return Err(PsarpError::InvalidProblem(
                "intersection parts have different dimensions".into(),
            ));
        }
        Self::certify(SetKind::Intersection(parts), dim)
    }

    /// Finds a member by projecting the origin; fails if the set looks empty.
    fn certify(kind: SetKind, dim: usize) -> Result<Self> {
        let mut set = Self {
            kind,
            dim,
            witness: DVector::zeros(dim),
        };
        let p = dykstra(&DVector::zeros(dim), &set.leaf_projectors()).map_err(|e| {
            PsarpError::InvalidProblem(format!("could not certify non-empty set: {e}"))
        })?;
        if !set.contains(&p, 1e-7) {
            return Err(PsarpError::InvalidProblem(
                "set appears to be empty (no member found)".into(),
            ));
        }
        set.witness = p;
        Ok(set)
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn witness(&self) -> &DVector<f64> {
        &self.witness
    }

    pub fn is_unbounded_box(&self) -> bool {
        matches!(&self.kind, SetKind::Box { lo, hi }
            if lo.iter().all(|v| *v == f64::NEG_INFINITY) && hi.iter().all(|v| *v == f64::INFINITY))
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.kind {
            SetKind::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            SetKind::Ball { center, radius } => (x - center).norm() <= radius + tol,
            SetKind::Halfspaces { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .all(|(a, b)| a.dot(x) <= b + tol * a.norm()),
            SetKind::Slab { normal, lo, hi } => {
                let t = normal.dot(x);
                let slack = tol * normal.norm();
                t >= lo - slack && t <= hi + slack
            }
            SetKind::Product(factors) => {
                let mut start = 0;
                factors.iter().all(|f| {
                    let block = x.rows(start, f.dim).clone_owned();
                    start += f.dim;
                    f.contains(&block, tol)
                })
            }
            SetKind::Intersection(parts) => parts.iter().all(|p| p.contains(x, tol)),
        }
    }

    /// Euclidean projection of `y` onto the set.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        debug_assert_eq!(y.len(), self.dim);
        match &self.kind {
            SetKind::Box { lo, hi } => Ok(DVector::from_iterator(
                y.len(),
                y.iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .map(|(v, (l, h))| v.clamp(*l, *h)),
            )),
            SetKind::Ball { center, radius } => {
                let diff = y - center;
                let norm = diff.norm();
                if norm <= *radius {
                    Ok(y.clone())
                } else {
                    Ok(center + diff * (*radius / norm))
                }
            }
            SetKind::Halfspaces { normals, offsets } => {
                if normals.len() == 1 {
                    return Ok(project_halfspace(&normals[0], offsets[0], y));
                }
                self.project_polyhedral(y)
            }
            SetKind::Slab { normal, lo, hi } => {
                let t = normal.dot(y);
                let target = t.clamp(*lo, *hi);
                Ok(y + normal * ((target - t) / normal.norm_squared()))
            }
            SetKind::Product(factors) => {
                let mut out = DVector::zeros(self.dim);
                let mut start = 0;
                for f in factors {
                    let block = y.rows(start, f.dim).clone_owned();
                    out.rows_mut(start, f.dim).copy_from(&f.project(&block)?);
                    start += f.dim;
                }
                Ok(out)
            }
            SetKind::Intersection(parts) => {
                if parts.len() == 1 {
                    return parts[0].project(y);
                }
                if let Some(p) = project_box_cut(parts, y) {
                    return Ok(p);
                }
                if self.is_polyhedral() {
                    return self.project_polyhedral(y);
                }
                dykstra(y, &self.leaf_projectors())
            }
        }
    }

    /// Solves `min ||d - y||` over `d` in `range(basis)` with `x + d` in the set.
    ///
    /// `basis` has orthonormal columns, `x` is a member and `y` lies in the
    /// subspace. Boxes with coordinate-aligned subspaces and balls are handled
    /// in closed form, one-dimensional subspaces by bisection on membership,
    /// everything else by Dykstra between the set and the affine slice.
    pub fn project_shifted_subspace(
        &self,
        x: &DVector<f64>,
        basis: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = self.dim;
        let r = basis.ncols();
        if r == 0 {
            return Ok(DVector::zeros(n));
        }
        if r == n {
            return Ok(self.project(&(x + y))? - x);
        }
        if self.is_unbounded_box() {
            return Ok(y.clone());
        }
        if let SetKind::Box { lo, hi } = &self.kind {
            if let Some(coords) = coordinate_columns(basis) {
                let mut d = DVector::zeros(n);
                for j in coords {
                    d[j] = (x[j] + y[j]).clamp(lo[j], hi[j]) - x[j];
                }
                return Ok(d);
            }
        }
        if let Some(coords) = coordinate_columns(basis) {
            if let Some(slice) = self.restrict(x, &coords) {
                let x_sub = DVector::from_iterator(coords.len(), coords.iter().map(|&j| x[j]));
                let z = DVector::from_iterator(coords.len(), coords.iter().map(|&j| x[j] + y[j]));
                let p = slice.project(&z)?;
                let mut d = DVector::zeros(n);
                for (k, &j) in coords.iter().enumerate() {
                    d[j] = p[k] - x_sub[k];
                }
                return Ok(d);
            }
        }
        if let SetKind::Ball { center, radius } = &self.kind {
            let in_range = |v: &DVector<f64>| basis * (basis.transpose() * v);
            let c_slice = x + in_range(&(center - x));
            let offset2 = (center - &c_slice).norm_squared();
            let slice_radius = (radius * radius - offset2).max(0.0).sqrt();
            let z = x + y;
            let diff = &z - &c_slice;
            let norm = diff.norm();
            let p = if norm <= slice_radius {
                z
            } else {
                &c_slice + diff * (slice_radius / norm)
            };
            return Ok(in_range(&(p - x)));
        }
        if r == 1 {
            let b = basis.column(0).clone_owned();
            let t = b.dot(y);
            let t_hi = self.max_feasible_along(x, &b);
            let t_lo = -self.max_feasible_along(x, &(-&b));
            return Ok(b * t.clamp(t_lo, t_hi));
        }
        if let Some(rows) = self.inequalities() {
            // in coordinates w of the slice: min ||w - B^T y|| s.t. (a^T B) w <= b - a^T x
            let reduced: Vec<(DVector<f64>, f64)> = rows
                .iter()
                .map(|(a, b)| (basis.transpose() * a, b - a.dot(x)))
                .collect();
            let w = active_set_projection(&reduced, &(basis.transpose() * y), DVector::zeros(r))?;
            return Ok(basis * w);
        }
        let project_affine =
            |z: &DVector<f64>| -> Result<DVector<f64>> { Ok(x + basis * (basis.transpose() * (z - x))) };
        let mut ops = self.leaf_projectors();
        ops.push(Box::new(project_affine));
        let p = dykstra(&(x + y), &ops)?;
        Ok(basis * (basis.transpose() * (p - x)))
    }

    fn is_polyhedral(&self) -> bool {
        match &self.kind {
            SetKind::Ball { .. } => false,
            SetKind::Product(parts) | SetKind::Intersection(parts) => parts.iter().all(|p| p.is_polyhedral()),
            _ => true,
        }
    }

    /// The set as `{z : a^T z <= b}` rows, infinite bounds dropped; `None`
    /// when a ball is involved.
    fn inequalities(&self) -> Option<Vec<(DVector<f64>, f64)>> {
        let n = self.dim;
        let unit = |j: usize, sign: f64| {
            let mut e = DVector::zeros(n);
            e[j] = sign;
            e
        };
        let rows = match &self.kind {
            SetKind::Box { lo, hi } => {
                let mut rows = Vec::new();
                for j in 0..n {
                    if hi[j].is_finite() {
                        rows.push((unit(j, 1.0), hi[j]));
                    }
                    if lo[j].is_finite() {
                        rows.push((unit(j, -1.0), -lo[j]));
                    }
                }
                rows
            }
            SetKind::Ball { .. } => return None,
            SetKind::Halfspaces { normals, offsets } => normals.iter().cloned().zip(offsets.iter().copied()).collect(),
            SetKind::Slab { normal, lo, hi } => {
                let mut rows = Vec::new();
                if hi.is_finite() {
                    rows.push((normal.clone(), *hi));
                }
                if lo.is_finite() {
                    rows.push((-normal, -lo));
                }
                rows
            }
            SetKind::Product(factors) => {
                let mut rows = Vec::new();
                let mut start = 0;
                for f in factors {
                    for (a, b) in f.inequalities()? {
                        let mut full = DVector::zeros(n);
                        full.rows_mut(start, f.dim).copy_from(&a);
                        rows.push((full, b));
                    }
                    start += f.dim;
                }
                rows
            }
            SetKind::Intersection(parts) => {
                let mut rows = Vec::new();
                for p in parts {
                    rows.extend(p.inequalities()?);
                }
                rows
            }
        };
        Some(rows)
    }

    /// Exact projection onto a polyhedron, started from the member point.
    fn project_polyhedral(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if self.contains(y, 0.0) {
            return Ok(y.clone());
        }
        let rows = self.inequalities().expect("polyhedral set");
        active_set_projection(&rows, y, self.witness.clone())
    }

    /// One projector per primitive constraint, flattening nested
    /// intersections and multi-row halfspace sets so that a single Dykstra
    /// pass sees every constraint.
    fn leaf_projectors(&self) -> Vec<Projector<'_>> {
        match &self.kind {
            SetKind::Intersection(parts) => parts.iter().flat_map(|p| p.leaf_projectors()).collect(),
            SetKind::Halfspaces { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .map(|(a, b)| Box::new(move |z: &DVector<f64>| Ok(project_halfspace(a, *b, z))) as Projector<'_>)
                .collect(),
            _ => vec![Box::new(move |z: &DVector<f64>| self.project(z))],
        }
    }

    /// The slice of the set through `x` along the coordinates `coords`, as a
    /// set in those coordinates; `None` for products.
    fn restrict(&self, x: &DVector<f64>, coords: &[usize]) -> Option<FeasibleSet> {
        let k = coords.len();
        let sub = |v: &DVector<f64>| DVector::from_iterator(k, coords.iter().map(|&j| v[j]));
        let mut fixed_mask = vec![true; self.dim];
        for &j in coords {
            fixed_mask[j] = false;
        }
        let fixed_dot = |a: &DVector<f64>| -> f64 {
            a.iter().zip(x.iter()).zip(&fixed_mask).filter(|(_, m)| **m).map(|((a, x), _)| a * x).sum()
        };
        let kind = match &self.kind {
            SetKind::Box { lo, hi } => SetKind::Box { lo: sub(lo), hi: sub(hi) },
            SetKind::Ball { center, radius } => {
                let off: f64 = (0..self.dim)
                    .filter(|&j| fixed_mask[j])
                    .map(|j| (x[j] - center[j]).powi(2))
                    .sum();
                SetKind::Ball {
                    center: sub(center),
                    radius: (radius * radius - off).max(0.0).sqrt(),
                }
            }
            SetKind::Halfspaces { normals, offsets } => {
                let (mut ns, mut bs) = (Vec::new(), Vec::new());
                for (a, b) in normals.iter().zip(offsets) {
                    let a_sub = sub(a);
                    // a row without free coordinates is satisfied by x itself
                    if a_sub.norm() > 0.0 {
                        bs.push(b - fixed_dot(a));
                        ns.push(a_sub);
                    }
                }
                if ns.is_empty() {
                    return Some(FeasibleSet::free(k));
                }
                SetKind::Halfspaces { normals: ns, offsets: bs }
            }
            SetKind::Slab { normal, lo, hi } => {
                let a_sub = sub(normal);
                if a_sub.norm() == 0.0 {
                    return Some(FeasibleSet::free(k));
                }
                let c = fixed_dot(normal);
                SetKind::Slab { normal: a_sub, lo: lo - c, hi: hi - c }
            }
            SetKind::Product(_) => return None,
            SetKind::Intersection(parts) => SetKind::Intersection(
                parts.iter().map(|p| p.restrict(x, coords)).collect::<Option<Vec<_>>>()?,
            ),
        };
        Some(FeasibleSet { kind, dim: k, witness: sub(x) })
    }

    /// Largest `t >= 0` with `x + t b` feasible, by doubling then bisection.
    fn max_feasible_along(&self, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
        const LIMIT: f64 = 1e15;
        let tol = 1e-12;
        let mut hi = 1.0;
        let mut lo = 0.0;
        if self.contains(&(x + b * hi), tol) {
            while hi < LIMIT && self.contains(&(x + b * (2.0 * hi)), tol) {
                hi *= 2.0;
            }
            if hi >= LIMIT {
                return f64::INFINITY;
            }
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.contains(&(x + b * mid), tol) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Distance between `ker(u^T)` and the set by alternating projections.
    pub fn distance_to_kernel(&self, u: &DVector<f64>) -> Result<f64> {
        let project_kernel = |z: &DVector<f64>| z - u * (u.dot(z) / u.norm_squared());
        let mut z = self.witness.clone();
        let mut gap = f64::INFINITY;
        for _ in 0..DYKSTRA_MAX_SWEEPS {
            let a = project_kernel(&z);
            let next = self.project(&a)?;
            let new_gap = (&a - &next).norm();
            let moved = (&next - &z).norm();
            z = next;
            if moved <= DYKSTRA_TOL * (1.0 + z.norm()) || (gap - new_gap).abs() <= 1e-14 {
                gap = new_gap;
                break;
            }
            gap = new_gap;
        }
        Ok(gap)
    }

    /// Certifies `P_ker(U_i)[F] ⊆ F` for each singular map `u_i` (rows of norm one).
    pub fn check_kernel_centered(&self, maps: &[DVector<f64>]) -> KernelCenteredCertificate {
        let entries = maps
            .iter()
            .enumerate()
            .map(|(i, u)| self.kernel_status(u, 0x5eed_0000 + i as u64))
            .collect();
        KernelCenteredCertificate { entries }
    }

    fn kernel_status(&self, u: &DVector<f64>, seed: u64) -> KernelStatus {
        match &self.kind {
            SetKind::Box { lo, hi } => {
                if let Some(j) = coordinate_index(u) {
                    return if lo[j] <= 0.0 && 0.0 <= hi[j] {
                        KernelStatus::Centered
                    } else {
                        KernelStatus::KernelMissesSet {
                            distance: lo[j].max(-hi[j]),
                        }
                    };
                }
            }
            SetKind::Ball { center, radius } => {
                let along = u.dot(center) / u.norm();
                if along.abs() > *radius {
                    return KernelStatus::KernelMissesSet {
                        distance: along.abs() - radius,
                    };
                }
                if along.abs() <= 1e-14 * (1.0 + center.norm()) {
                    return KernelStatus::Centered;
                }
            }
            SetKind::Product(factors) => {
                let mut start = 0;
                for f in factors {
                    let inside = u.rows(start, f.dim).norm();
                    if (inside - u.norm()).abs() <= 1e-14 {
                        return f.kernel_status(&u.rows(start, f.dim).clone_owned(), seed);
                    }
                    start += f.dim;
                }
            }
            _ => {}
        }
        self.sampled_kernel_status(u, seed)
    }

    fn sampled_kernel_status(&self, u: &DVector<f64>, seed: u64) -> KernelStatus {
        let distance = match self.distance_to_kernel(u) {
            Ok(d) => d,
            Err(_) => return KernelStatus::Unknown,
        };
        if distance > 1e-8 {
            return KernelStatus::KernelMissesSet { distance };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = self.witness.norm() + 1.0;
        let scales = [0.1, 1.0, 10.0, 100.0];
        for k in 0..KERNEL_SAMPLES {
            let scale = scales[k % scales.len()] * base;
            let y = &self.witness
                + DVector::from_fn(self.dim, |_, _| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v * scale
                });
            let Ok(p) = self.project(&y) else { continue };
            let onto_kernel = &p - u * (u.dot(&p) / u.norm_squared());
            if !self.contains(&onto_kernel, 1e-7) {
                return KernelStatus::NotCentered { witness: p };
            }
        }
        KernelStatus::Unknown
    }
}

/// Per singular element outcome of the kernel-centered test.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelStatus {
    /// Proven: projecting the set onto `ker(U_i)` stays inside it.
    Centered,
    /// `ker(U_i)` does not meet the set; `|U_i x| >= distance` on the set,
    /// so the element may be treated as smooth.
    KernelMissesSet { distance: f64 },
    /// `witness` is a member whose projection onto `ker(U_i)` is not.
    NotCentered { witness: DVector<f64> },
    /// No counterexample found by sampling.
    Unknown,
}

impl KernelStatus {
    /// True when the set is known not to be kernel-centered for this element.
    pub fn is_false(&self) -> bool {
        matches!(
            self,
            KernelStatus::KernelMissesSet { .. } | KernelStatus::NotCentered { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCenteredCertificate {
    pub entries: Vec<KernelStatus>,
}

impl KernelCenteredCertificate {
    pub fn all_centered(&self) -> bool {
        self.entries.iter().all(|e| *e == KernelStatus::Centered)
    }

    /// Indices whose kernel misses the set, with the separating distance.
    pub fn transferable(&self) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| match e {
                KernelStatus::KernelMissesSet { distance } => Some((i, *distance)),
                _ => None,
            })
            .collect()
    }

    pub fn violations(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, KernelStatus::NotCentered { .. }))
            .map(|(i, _)| i)
            .collect()
    }
}

fn project_halfspace(a: &DVector<f64>, b: f64, y: &DVector<f64>) -> DVector<f64> {
    let t = a.dot(y);
    if t <= b {
        y.clone()
    } else {
        y - a * ((t - b) / a.norm_squared())
    }
}

/// Primal active-set method for `min ||z - y||^2 / 2` subject to
/// `a_k^T z <= b_k`, from a feasible `z`.
///
/// Every step moves to the minimizer on the current working set, stopping at
/// the first blocking constraint, which then joins the set; once the step
/// vanishes, a constraint with a negative multiplier leaves. Blocking rows
/// are never combinations of working rows, so the working Gram matrix stays
/// non-singular.
fn active_set_projection(rows: &[(DVector<f64>, f64)], y: &DVector<f64>, mut z: DVector<f64>) -> Result<DVector<f64>> {
    let scale = 1.0 + y.norm() + z.norm();
    let mut working: Vec<usize> = Vec::new();
    let limit = 50 * (rows.len() + y.len()) + 100;
    for _ in 0..limit {
        let r = y - &z;
        let (step, multipliers) = if working.is_empty() {
            (r.clone(), DVector::zeros(0))
        } else {
            let a = DMatrix::from_columns(&working.iter().map(|&k| rows[k].0.clone()).collect::<Vec<_>>());
            let gram = a.transpose() * &a;
            let lambda = gram
                .clone()
                .lu()
                .solve(&(a.transpose() * &r))
                .ok_or_else(|| PsarpError::ContractViolation("dependent working constraints".into()))?;
            (&r - &a * &lambda, lambda)
        };
        if step.norm() <= 1e-14 * scale {
            let (worst, value) = multipliers
                .iter()
                .enumerate()
                .fold((None, 0.0), |(wi, wv), (i, v)| if *v < wv { (Some(i), *v) } else { (wi, wv) });
            match worst {
                Some(i) if value < -1e-12 * scale => {
                    working.remove(i);
                    continue;
                }
                _ => return Ok(z),
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for (k, (a, b)) in rows.iter().enumerate() {
            if working.contains(&k) {
                continue;
            }
            let rate = a.dot(&step);
            if rate > 1e-15 * a.norm() * step.norm() {
                let t = ((b - a.dot(&z)) / rate).max(0.0);
                if t < alpha {
                    alpha = t;
                    blocking = Some(k);
                }
            }
        }
        z += &step * alpha;
        if let Some(k) = blocking {
            working.push(k);
        }
    }
    Err(PsarpError::ProjectionFailure {
        sweeps: limit,
        change: f64::NAN,
    })
}

/// Exact projection onto a box cut by one halfspace or slab, by bisection
/// on the multiplier of the cut; `None` for any other intersection.
fn project_box_cut(parts: &[FeasibleSet], y: &DVector<f64>) -> Option<DVector<f64>> {
    if parts.len() != 2 {
        return None;
    }
    let (bx, cut) = match (&parts[0].kind, &parts[1].kind) {
        (SetKind::Box { .. }, _) => (&parts[0].kind, &parts[1].kind),
        (_, SetKind::Box { .. }) => (&parts[1].kind, &parts[0].kind),
        _ => return None,
    };
    let SetKind::Box { lo, hi } = bx else { return None };
    let (a, t_lo, t_hi) = match cut {
        SetKind::Halfspaces { normals, offsets } if normals.len() == 1 => {
            (&normals[0], f64::NEG_INFINITY, offsets[0])
        }
        SetKind::Slab { normal, lo, hi } => (normal, *lo, *hi),
        _ => return None,
    };
    let at = |lambda: f64| {
        DVector::from_iterator(
            y.len(),
            y.iter()
                .zip(a.iter())
                .zip(lo.iter().zip(hi.iter()))
                .map(|((v, ai), (l, h))| (v - lambda * ai).clamp(*l, *h)),
        )
    };
    let z0 = at(0.0);
    let t0 = a.dot(&z0);
    let (target, sign) = if t0 > t_hi {
        (t_hi, 1.0)
    } else if t0 < t_lo {
        (t_lo, -1.0)
    } else {
        return Some(z0);
    };
    // a^T z(lambda) is non-increasing in lambda; bracket then bisect
    let mut inner = 0.0;
    let mut outer = 1.0 / a.norm_squared().max(f64::MIN_POSITIVE);
    let mut tries = 0;
    while sign * (a.dot(&at(sign * outer)) - target) > 0.0 {
        inner = outer;
        outer *= 2.0;
        tries += 1;
        if tries > 2000 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (inner + outer);
        if mid <= inner || mid >= outer {
            break;
        }
        if sign * (a.dot(&at(sign * mid)) - target) > 0.0 {
            inner = mid;
        } else {
            outer = mid;
        }
    }
    Some(at(sign * outer))
}

type Projector<'a> = Box<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + 'a>;

fn fixed_by_all(x: &DVector<f64>, ops: &[Projector<'_>], tol: f64) -> Result<bool> {
    for op in ops {
        if (op(x)? - x).norm() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Dykstra's algorithm for the projection onto an intersection.
pub fn dykstra(y: &DVector<f64>, ops: &[Projector<'_>]) -> Result<DVector<f64>> {
    let mut x = y.clone();
    let mut increments = vec![DVector::zeros(y.len()); ops.len()];
    let mut change = f64::INFINITY;
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let previous = x.clone();
        for (op, inc) in ops.iter().zip(increments.iter_mut()) {
            let z = &x + &*inc;
            let next = op(&z)?;
            *inc = z - &next;
            x = next;
        }
        change = (&x - &previous).norm();
        let tol = DYKSTRA_TOL * (1.0 + x.norm());
        // the iterate can sit still for a sweep while the corrections move,
        // so a quiet sweep only counts once every constraint holds, up to
        // the round-off of corrections as large as `y`
        let slack = 10.0 * tol + 1e3 * f64::EPSILON * y.norm();
        if change <= tol && fixed_by_all(&x, ops, slack)? {
            return Ok(x);
        }
    }
    Err(PsarpError::ProjectionFailure {
        sweeps: DYKSTRA_MAX_SWEEPS,
        change,
    })
}

/// Index of the single non-zero entry of a unit coordinate vector.
pub(crate) fn coordinate_index(u: &DVector<f64>) -> Option<usize> {
    let mut found = None;
    for (j, v) in u.iter().enumerate() {
        if v.abs() > 1e-14 {
            if found.is_some() || (v.abs() - 1.0).abs() > 1e-12 {
                return None;
            }
            found = Some(j);
        }
    }
    found
}

fn coordinate_columns(basis: &DMatrix<f64>) -> Option<Vec<usize>> {
    basis
        .column_iter()
        .map(|c| coordinate_index(&c.clone_owned()))
        .collect()
}
