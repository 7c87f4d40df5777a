//! Separation certificates and convex polytope covers.
//!
//! A [`SeparationCertificate`] is a hyperplane with a numeric margin proving
//! one-sided strict separation of two finite point sets: the pass set lies in
//! the closed zero side `l0 = {x : w·x + c <= 0}` and the kill set in the
//! strictly positive side with `w·x + c >= gamma > 0`. The asymmetry matches
//! ReLU semantics: a unit outputs zero on `l0` and fires on `l+`.
//!
//! A [`PolytopeCover`] decomposes one category of a labeled dataset into open
//! axis-aligned boxes, each holding some of the category's points strictly in
//! its interior and no point of any other category.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, GAMMA_MIN};

/// Max-norm bound on the hyperplane normal handed to the LP. Together with
/// the kill-side margin of 1 this pins the certified margin floor at
/// `GAMMA_MIN = 1 / W_MAX` after normalization.
const W_MAX: f64 = 1e6;

/// Hull corners are enumerated only up to this dimension (2^n corners).
const MAX_HULL_DIM: usize = 12;

/// A finite set of distinct labeled points in `R^n` with labels `1..=k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    points: Vec<DVector<f64>>,
    labels: Vec<u32>,
    n: usize,
    k: u32,
}

impl LabeledDataset {
    pub fn new(points: Vec<DVector<f64>>, labels: Vec<u32>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDataset("dataset is empty".into()));
        }
        if points.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let n = points[0].len();
        for (i, p) in points.iter().enumerate() {
            if p.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "point {} has dimension {} (expected {})",
                    i,
                    p.len(),
                    n
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDataset(format!("point {} has a non-finite coordinate", i)));
            }
        }
        let mut dup_rows = Vec::new();
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    dup_rows.push(j);
                }
            }
        }
        if !dup_rows.is_empty() {
            dup_rows.sort_unstable();
            dup_rows.dedup();
            return Err(Error::DuplicatePoints(dup_rows));
        }
        if labels.iter().any(|&l| l == 0) {
            return Err(Error::InvalidDataset("labels must be in 1..=k".into()));
        }
        let k = *labels.iter().max().unwrap();
        for c in 1..=k {
            if !labels.contains(&c) {
                return Err(Error::InvalidDataset(format!("category {} has no points", c)));
            }
        }
        Ok(LabeledDataset { points, labels, n, k })
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_categories(&self) -> u32 {
        self.k
    }

    /// Minimum Chebyshev (max-norm) distance from point `i` to any other
    /// dataset point. Positive because points are distinct.
    pub fn min_chebyshev_gap(&self, i: usize) -> f64 {
        let mut best = f64::INFINITY;
        for (j, p) in self.points.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = (&self.points[i] - p).amax();
            if d < best {
                best = d;
            }
        }
        best
    }

    /// Axis-aligned bounding box of all points.
    pub fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        let mut lo = self.points[0].clone();
        let mut hi = self.points[0].clone();
        for p in &self.points {
            for j in 0..self.n {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        (lo, hi)
    }
}

/// Oriented hyperplane `w·x + c = 0` with side semantics
/// `l+ = {x : w·x + c > 0}` and `l0 = {x : w·x + c <= 0}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.normal.len() {
            acc += self.normal[j] * x[j];
        }
        acc + self.offset
    }
}

/// A hyperplane plus a margin `gamma > 0` certifying one-sided strict
/// separation: `w·x + c >= gamma` on the kill set, `<= 0` on the pass set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationCertificate {
    pub hyperplane: Hyperplane,
    pub margin: f64,
}

impl SeparationCertificate {
    /// Re-checks both inequalities by direct substitution.
    pub fn verify(&self, pass: &[DVector<f64>], kill: &[DVector<f64>]) -> bool {
        pass.iter().all(|x| self.hyperplane.eval(x) <= 0.0)
            && kill.iter().all(|x| self.hyperplane.eval(x) >= self.margin)
            && self.margin > 0.0
    }
}

#[derive(Debug, Clone)]
pub enum Separation {
    Certificate(SeparationCertificate),
    Infeasible,
}

/// Finds a hyperplane with `w·x + c <= 0` for every pass point and
/// `w·x + c >= gamma >= GAMMA_MIN` for every kill point, `max-norm(w) <= 1`.
///
/// The LP asks for a kill margin of 1 under `|w_i| <= W_MAX`; the result is
/// rescaled and then re-certified by substitution. Any solver noise that
/// leaves the certificate unverifiable downgrades the verdict to infeasible.
pub fn separate(pass: &[DVector<f64>], kill: &[DVector<f64>], n: usize) -> Result<Separation> {
    if pass.is_empty() || kill.is_empty() {
        return Err(Error::DegenerateInput("separate: empty pass or kill set".into()));
    }
    for x in pass.iter().chain(kill.iter()) {
        if x.len() != n {
            return Err(Error::DegenerateInput(format!(
                "separate: point of dimension {} in dimension-{} problem",
                x.len(),
                n
            )));
        }
    }

    let max_abs = pass
        .iter()
        .chain(kill.iter())
        .map(|x| x.amax())
        .fold(0.0f64, f64::max);
    let c_bound = W_MAX * (1.0 + n as f64 * max_abs);

    // Minimizing the l1 norm of w (via the standard |w_i| <= u_i split)
    // keeps the normal small relative to the fixed kill margin of 1, which
    // maximizes the certified margin after max-norm rescaling. A zero
    // objective would let the solver return an extreme vertex with the
    // margin degenerating to the GAMMA_MIN floor.
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let w_vars: Vec<_> = (0..n).map(|_| problem.add_var(0.0, (-W_MAX, W_MAX))).collect();
    let u_vars: Vec<_> = (0..n).map(|_| problem.add_var(1.0, (0.0, W_MAX))).collect();
    let c_var = problem.add_var(0.0, (-c_bound, c_bound));
    for (&w, &u) in w_vars.iter().zip(&u_vars) {
        problem.add_constraint(&[(w, 1.0), (u, -1.0)][..], ComparisonOp::Le, 0.0);
        problem.add_constraint(&[(w, -1.0), (u, -1.0)][..], ComparisonOp::Le, 0.0);
    }
    for x in pass {
        let mut expr: Vec<_> = w_vars.iter().enumerate().map(|(j, &v)| (v, x[j])).collect();
        expr.push((c_var, 1.0));
        problem.add_constraint(&expr, ComparisonOp::Le, 0.0);
    }
    for x in kill {
        let mut expr: Vec<_> = w_vars.iter().enumerate().map(|(j, &v)| (v, x[j])).collect();
        expr.push((c_var, 1.0));
        problem.add_constraint(&expr, ComparisonOp::Ge, 1.0);
    }

    let solution = match problem.solve() {
        Ok(s) => s,
        Err(_) => return Ok(Separation::Infeasible),
    };
    let mut w = DVector::from_iterator(n, w_vars.iter().map(|&v| solution[v]));
    let mut c = solution[c_var];

    // Normalize to max-norm(w) <= 1, then pin c so the pass side is exactly
    // satisfied and recompute the margin from scratch.
    let scale = w.amax();
    if scale > 1.0 {
        w /= scale;
        c /= scale;
    }
    let mut cert = SeparationCertificate {
        hyperplane: Hyperplane { normal: w, offset: c },
        margin: 0.0,
    };
    let pass_max = pass
        .iter()
        .map(|x| cert.hyperplane.eval(x))
        .fold(f64::NEG_INFINITY, f64::max);
    if pass_max > 0.0 {
        cert.hyperplane.offset -= pass_max;
    }
    let gamma = kill
        .iter()
        .map(|x| cert.hyperplane.eval(x))
        .fold(f64::INFINITY, f64::min);
    cert.margin = gamma;

    if gamma >= GAMMA_MIN && cert.verify(pass, kill) {
        Ok(Separation::Certificate(cert))
    } else {
        Ok(Separation::Infeasible)
    }
}

/// One facet of an open polytope: inside means `w·x + c <= -margin`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Facet {
    pub plane: Hyperplane,
    pub margin: f64,
}

impl Facet {
    /// True when `x` clearly violates this facet (`w·x + c >= margin`),
    /// i.e. lies outside with a full band of slack.
    pub fn clearly_violated_by(&self, x: &DVector<f64>) -> bool {
        self.plane.eval(x) >= self.margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    StrictlyInside,
    Outside,
}

/// An open convex polytope given by its facet hyperplanes with per-facet
/// interior margins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polytope {
    pub facets: Vec<Facet>,
    /// Corner points of the margin-shrunk interior region; every point of
    /// their convex hull satisfies all facet conditions. Used by the weight
    /// synthesis to extend pass-through guarantees from the data points to
    /// the whole covered region. Empty when the dimension is too high to
    /// enumerate corners.
    pub hull: Vec<DVector<f64>>,
}

impl Polytope {
    /// Open axis-aligned box `(lo, hi)` with interior margin `gamma` on all
    /// `2n` facets.
    pub fn axis_box(lo: &DVector<f64>, hi: &DVector<f64>, gamma: f64) -> Self {
        let n = lo.len();
        let mut facets = Vec::with_capacity(2 * n);
        for j in 0..n {
            let mut up = DVector::zeros(n);
            up[j] = 1.0;
            facets.push(Facet {
                plane: Hyperplane { normal: up, offset: -hi[j] },
                margin: gamma,
            });
            let mut down = DVector::zeros(n);
            down[j] = -1.0;
            facets.push(Facet {
                plane: Hyperplane { normal: down, offset: lo[j] },
                margin: gamma,
            });
        }
        let hull = if n <= MAX_HULL_DIM {
            let mut corners = Vec::with_capacity(1 << n);
            for mask in 0..(1usize << n) {
                let corner = DVector::from_fn(n, |j, _| {
                    if mask >> j & 1 == 1 {
                        hi[j] - gamma
                    } else {
                        lo[j] + gamma
                    }
                });
                corners.push(corner);
            }
            corners
        } else {
            Vec::new()
        };
        Polytope { facets, hull }
    }

    pub fn dim(&self) -> usize {
        self.facets.first().map_or(0, |f| f.plane.normal.len())
    }

    /// Strict interior membership: every facet satisfied with its margin.
    pub fn contains(&self, x: &DVector<f64>) -> Result<Membership> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let inside = self
            .facets
            .iter()
            .all(|f| f.plane.eval(x) <= -f.margin);
        Ok(if inside {
            Membership::StrictlyInside
        } else {
            Membership::Outside
        })
    }

    /// True when `x` lies within the boundary band of some facet: neither
    /// strictly inside by the facet margin nor clearly outside by it.
    pub fn in_boundary_band(&self, x: &DVector<f64>) -> bool {
        self.facets.iter().any(|f| {
            let v = f.plane.eval(x);
            v > -f.margin && v < f.margin
        })
    }
}

/// Membership test as a free function, mirroring the operation name used by
/// the verification oracles.
pub fn polytope_contains(p: &Polytope, x: &DVector<f64>) -> Result<Membership> {
    p.contains(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverStrategy {
    PerPoint,
    Greedy,
}

/// Open polytopes covering every point of one category and excluding every
/// point of all other categories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolytopeCover {
    pub polytopes: Vec<Polytope>,
    pub target_label: u32,
    /// Dataset row indices used to seed each polytope (reporting only;
    /// membership is always decided by [`Polytope::contains`]).
    pub members: Vec<Vec<usize>>,
}

/// Builds a cover of the `target` category.
///
/// `PerPoint` gives every target point its own box of half-width
/// `min(gap/4, 1)` where `gap` is its Chebyshev distance to the nearest
/// other dataset point. `Greedy` starts from the per-point cover and merges
/// box pairs into the padded bounding box of their seed points whenever
/// every non-target point still clearly violates some facet of the merged
/// box, until no merge applies.
pub fn build_cover(d: &LabeledDataset, target: u32, strategy: CoverStrategy) -> Result<PolytopeCover> {
    let target_rows: Vec<usize> = (0..d.len()).filter(|&i| d.labels()[i] == target).collect();
    if target_rows.is_empty() {
        return Err(Error::InvalidDataset(format!("target category {} absent", target)));
    }
    let non_target: Vec<&DVector<f64>> = (0..d.len())
        .filter(|&i| d.labels()[i] != target)
        .map(|i| &d.points()[i])
        .collect();

    // Per-point boxes.
    let radii: Vec<f64> = target_rows
        .iter()
        .map(|&i| (d.min_chebyshev_gap(i) / 4.0).min(1.0))
        .collect();
    let mut boxes: Vec<(DVector<f64>, DVector<f64>, f64)> = target_rows
        .iter()
        .zip(&radii)
        .map(|(&i, &r)| {
            let q = &d.points()[i];
            (q.map(|x| x - r), q.map(|x| x + r), r)
        })
        .collect();
    let mut members: Vec<Vec<usize>> = target_rows.iter().map(|&i| vec![i]).collect();
    let mut pads: Vec<f64> = radii.clone();

    if strategy == CoverStrategy::Greedy {
        let mut merged_any = true;
        while merged_any {
            merged_any = false;
            'outer: for a in 0..boxes.len() {
                for b in (a + 1)..boxes.len() {
                    let pad = pads[a].min(pads[b]);
                    let union: Vec<usize> = members[a].iter().chain(members[b].iter()).copied().collect();
                    let mut lo = d.points()[union[0]].clone();
                    let mut hi = lo.clone();
                    for &i in &union {
                        for j in 0..d.dim() {
                            lo[j] = lo[j].min(d.points()[i][j]);
                            hi[j] = hi[j].max(d.points()[i][j]);
                        }
                    }
                    let lo_p = lo.map(|x| x - pad);
                    let hi_p = hi.map(|x| x + pad);
                    let candidate = Polytope::axis_box(&lo_p, &hi_p, pad / 2.0);
                    let excludes_all = non_target
                        .iter()
                        .all(|z| candidate.facets.iter().any(|f| f.clearly_violated_by(z)));
                    let holds_members = union
                        .iter()
                        .all(|&i| candidate.contains(&d.points()[i]).unwrap() == Membership::StrictlyInside);
                    if excludes_all && holds_members {
                        boxes[a] = (lo_p, hi_p, pad);
                        members[a] = union;
                        pads[a] = pad;
                        boxes.remove(b);
                        members.remove(b);
                        pads.remove(b);
                        merged_any = true;
                        break 'outer;
                    }
                }
            }
        }
    }

    let polytopes = boxes
        .iter()
        .zip(&pads)
        .map(|((lo, hi, _), &pad)| Polytope::axis_box(lo, hi, pad / 2.0))
        .collect();

    Ok(PolytopeCover {
        polytopes,
        target_label: target,
        members,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub enum CoverViolation {
    /// A target point is not strictly inside any polytope.
    Uncovered { point: usize },
    /// A non-target point is strictly inside some polytope.
    Contained { polytope: usize, point: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverReport {
    pub violations: Vec<CoverViolation>,
}

impl CoverReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Exhaustively checks both cover invariants over all dataset points.
pub fn validate_cover(cover: &PolytopeCover, d: &LabeledDataset) -> CoverReport {
    let mut violations = Vec::new();
    for (i, point) in d.points().iter().enumerate() {
        let memberships: Vec<Membership> = cover
            .polytopes
            .iter()
            .map(|p| p.contains(point).unwrap_or(Membership::Outside))
            .collect();
        if d.labels()[i] == cover.target_label {
            if !memberships.contains(&Membership::StrictlyInside) {
                violations.push(CoverViolation::Uncovered { point: i });
            }
        } else {
            for (pi, m) in memberships.iter().enumerate() {
                if *m == Membership::StrictlyInside {
                    violations.push(CoverViolation::Contained { polytope: pi, point: i });
                }
            }
        }
    }
    CoverReport { violations }
}
