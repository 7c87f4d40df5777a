//! Explicit weight synthesis.
//!
//! The pipeline mirrors the constructive argument it implements:
//!
//! 1. a single identity block separates one set of points from another via a
//!    one-layer gate built from a separation certificate ([`build_block`]);
//! 2. a chain of such blocks excludes everything outside one open polytope,
//!    one facet per block ([`build_chain`]);
//! 3. one chain per cover polytope runs in parallel, depth-equalized with
//!    redundant blocks, and a 0/1 readout unit per category sums the branch
//!    outputs ([`build_parallel`]);
//! 4. the parallel branches are merged into a single network with a
//!    projection first shortcut and block-diagonal interior weights
//!    ([`merge_to_single`]).
//!
//! Excluded points leave a block as the exact zero vector. Because the zero
//! vector would pass through a later block as `relu(0 + b)` with a closed
//! gate, every block after the first treats the origin as a mandatory kill
//! point: either the single-gate certificate also fires at the origin, or
//! the gate becomes a two-layer OR of a data/facet hyperplane and an
//! origin-killing hyperplane.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{
    build_cover, validate_cover, CoverStrategy, Facet, Hyperplane, LabeledDataset, Membership,
    Polytope, PolytopeCover, Separation, SeparationCertificate,
};
use crate::net::{eval_block, relu, validate_net, GateLayer, GateNetwork, ResNet, ResNetBlock};
use crate::{Error, Result, GAMMA_MIN, TAU};

/// How blocks after the first keep already-excluded (zero-vector) points
/// excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroExclusion {
    /// Prefer a single-layer gate whose certificate also fires at the
    /// origin; fall back to the OR gate when no such certificate exists.
    LpFirst,
    /// Always pair the data/facet hyperplane with a dedicated
    /// origin-killing hyperplane in a two-layer OR gate.
    OrGateAlways,
}

/// Quantifies the construction's "large enough" constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Pass-through floor: every surviving coordinate stays >= margin.
    pub margin: f64,
    /// Multiplicative safety slack (> 1) on the gate output weights.
    pub alpha_safety: f64,
    pub cover: CoverStrategy,
    pub zero_exclusion: ZeroExclusion,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            margin: 1.0,
            alpha_safety: 2.0,
            cover: CoverStrategy::PerPoint,
            zero_exclusion: ZeroExclusion::LpFirst,
        }
    }
}

/// Cumulative affine shift applied to surviving points, block by block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftTracker {
    /// Sum of all output biases applied so far on the surviving branch.
    pub shift: DVector<f64>,
    /// Pass-through floor carried from the config.
    pub mu: f64,
    /// Cumulative shift after each completed block.
    pub history: Vec<DVector<f64>>,
}

impl ShiftTracker {
    pub fn new(n: usize, mu: f64) -> Self {
        ShiftTracker {
            shift: DVector::zeros(n),
            mu,
            history: Vec::new(),
        }
    }

    pub fn apply(&mut self, bias: &DVector<f64>) {
        self.shift += bias;
        self.history.push(self.shift.clone());
    }
}

/// Gate construction chosen for one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockStrategy {
    /// Empty kill set: gate disconnected, pure affine shift.
    PassThrough,
    /// Single-layer gate from the facet-derived certificate.
    FacetGate,
    /// Single-layer gate from an LP separation certificate.
    LpGate,
    /// Two-layer OR gate: data/facet hyperplane OR origin hyperplane.
    OrGate,
    /// Depth-equalization block: passes survivors, keeps zeros at zero.
    Redundant,
}

/// The per-category 0/1 readout wiring: unit `i` takes weight-1 inputs from
/// exactly the final-layer units listed for category `i`, bias 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReadoutSpec {
    /// Final-layer unit indices per category (index 0 = label 1).
    pub units: Vec<Vec<usize>>,
}

impl ReadoutSpec {
    pub fn matrix(&self, width: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.units.len(), width);
        for (i, row) in self.units.iter().enumerate() {
            for &j in row {
                m[(i, j)] = 1.0;
            }
        }
        m
    }
}

/// Construction record for one branch of the merged network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchMeta {
    pub label: u32,
    pub polytope: Polytope,
    /// First unit index of this branch in every merged hidden layer.
    pub unit_offset: usize,
    pub width: usize,
    /// Cumulative shift after each block.
    pub shifts: Vec<DVector<f64>>,
    pub strategies: Vec<BlockStrategy>,
}

/// Metadata attached to a synthesized network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstructionMeta {
    pub config: SynthesisConfig,
    pub branches: Vec<BranchMeta>,
    pub readout: ReadoutSpec,
    pub input_dim: usize,
    pub num_categories: u32,
    /// Axis-aligned region (data bounding box inflated by 1) inside which
    /// the gate weights are sized to fully exclude off-cover probes.
    pub probe_box: (DVector<f64>, DVector<f64>),
}

/// One simplest-ResNet branch before merging.
#[derive(Debug, Clone)]
pub struct Branch {
    pub net: ResNet,
    pub label: u32,
    pub polytope: Polytope,
    pub shifts: Vec<DVector<f64>>,
    pub strategies: Vec<BlockStrategy>,
}

/// Parallel branches sharing one input, plus the readout wiring.
#[derive(Debug, Clone)]
pub struct ParallelNet {
    pub branches: Vec<Branch>,
    pub readout: ReadoutSpec,
    pub input_dim: usize,
    pub num_categories: u32,
    pub config: SynthesisConfig,
    pub probe_box: (DVector<f64>, DVector<f64>),
}

impl ParallelNet {
    pub fn branch_width(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.branches.len() * self.input_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.branches.first().map_or(0, |b| b.net.blocks.len())
    }
}

/// Evaluates the parallel network: branch-wise traces, concatenated hidden
/// layers, and the readout vector.
pub fn eval_parallel_traced(
    pn: &ParallelNet,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let blocks = pn.num_blocks();
    let mut hidden: Vec<DVector<f64>> = (0..blocks)
        .map(|_| DVector::zeros(pn.hidden_width()))
        .collect();
    for (b, branch) in pn.branches.iter().enumerate() {
        let mut v = x.clone();
        for (t, block) in branch.net.blocks.iter().enumerate() {
            v = eval_block(block, &v)?;
            hidden[t]
                .rows_mut(b * pn.input_dim, pn.input_dim)
                .copy_from(&v);
        }
    }
    let final_layer = hidden
        .last()
        .cloned()
        .unwrap_or_else(|| DVector::zeros(pn.hidden_width()));
    let pattern = pn.readout.matrix(pn.hidden_width());
    let mut pre = DVector::zeros(pattern.nrows());
    for i in 0..pattern.nrows() {
        let mut acc = 0.0;
        for j in 0..pattern.ncols() {
            acc += pattern[(i, j)] * final_layer[j];
        }
        pre[i] = acc;
    }
    Ok((relu(&pre)?, hidden))
}

// ---------------------------------------------------------------------------
// Gate planning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum GatePlan {
    Zero,
    Single(Hyperplane),
    Or(Hyperplane, Hyperplane),
}

impl GatePlan {
    /// Gate value; accumulation order matches the GateNetwork this plan
    /// lowers to, so the two are bit-identical.
    fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            GatePlan::Zero => 0.0,
            GatePlan::Single(h) => h.eval(x).max(0.0),
            GatePlan::Or(a, b) => (a.eval(x).max(0.0) + b.eval(x).max(0.0)).max(0.0),
        }
    }

    fn network(&self, input_dim: usize, output_dim: usize) -> GateNetwork {
        match self {
            GatePlan::Zero => GateNetwork::zero(input_dim, output_dim),
            GatePlan::Single(h) => {
                let mut weights = DMatrix::zeros(output_dim, input_dim);
                for i in 0..output_dim {
                    weights.row_mut(i).copy_from(&h.normal.transpose());
                }
                GateNetwork {
                    layers: vec![GateLayer {
                        weights,
                        biases: DVector::from_element(output_dim, h.offset),
                    }],
                }
            }
            GatePlan::Or(a, b) => {
                let mut l1 = DMatrix::zeros(2, input_dim);
                l1.row_mut(0).copy_from(&a.normal.transpose());
                l1.row_mut(1).copy_from(&b.normal.transpose());
                let mut l2 = DMatrix::zeros(output_dim, 2);
                for i in 0..output_dim {
                    l2[(i, 0)] = 1.0;
                    l2[(i, 1)] = 1.0;
                }
                GateNetwork {
                    layers: vec![
                        GateLayer {
                            weights: l1,
                            biases: DVector::from_row_slice(&[a.offset, b.offset]),
                        },
                        GateLayer {
                            weights: l2,
                            biases: DVector::zeros(output_dim),
                        },
                    ],
                }
            }
        }
    }
}

/// Hyperplane that fires at the origin and stays closed on every point with
/// all coordinates >= mu (the pass-through floor).
fn origin_plane(n: usize, mu: f64) -> Hyperplane {
    Hyperplane {
        normal: DVector::from_element(n, -1.0),
        offset: mu / 2.0,
    }
}

fn certifies(h: &Hyperplane, pass: &[DVector<f64>], kill: &[&DVector<f64>]) -> bool {
    pass.iter().all(|x| h.eval(x) <= 0.0) && kill.iter().all(|x| h.eval(x) >= GAMMA_MIN)
}

/// Facet-derived gate candidate, expressed in current-layer (shifted)
/// coordinates. The firing threshold sits strictly between the facet's
/// interior margin and the nearest kill point, so the gate is closed on the
/// whole covered region and open both on every kill point and on everything
/// clearly beyond the facet.
struct FacetCandidate {
    plane: Hyperplane,
    /// Lower bound on the gate value over clearly-outside region points.
    f_floor: f64,
}

fn facet_candidate(facet: &Facet, shift: &DVector<f64>, kill_orig: &[&DVector<f64>]) -> FacetCandidate {
    let gamma = facet.margin;
    let min_viol = kill_orig
        .iter()
        .map(|x| facet.plane.eval(x) + gamma)
        .fold(f64::INFINITY, f64::min);
    let theta = if min_viol.is_finite() {
        -gamma + gamma.min(min_viol) / 2.0
    } else {
        -gamma / 2.0
    };
    let scale = facet.plane.normal.amax().max(1.0);
    let shifted_offset = facet.plane.offset - facet.plane.normal.dot(shift);
    FacetCandidate {
        plane: Hyperplane {
            normal: &facet.plane.normal / scale,
            offset: (shifted_offset - theta) / scale,
        },
        f_floor: (gamma - theta) / scale,
    }
}

/// Runs the LP separation engine and unwraps the certificate.
fn lp_certificate(
    pass: &[DVector<f64>],
    kill: &[DVector<f64>],
    n: usize,
) -> Result<Option<SeparationCertificate>> {
    match crate::geometry::separate(pass, kill, n)? {
        Separation::Certificate(c) => Ok(Some(c)),
        Separation::Infeasible => Ok(None),
    }
}

struct PlannedGate {
    plan: GatePlan,
    strategy: BlockStrategy,
    /// Present when the primary hyperplane is facet-derived: bound on the
    /// gate value over the clearly-outside region, for region-aware alphas.
    region_floor: Option<f64>,
}

fn plan_gate(
    pass_all: &[DVector<f64>],
    kill: &[DVector<f64>],
    n: usize,
    mu: f64,
    kill_origin: bool,
    zero_exclusion: ZeroExclusion,
    facet: Option<&FacetCandidate>,
) -> Result<PlannedGate> {
    let origin = DVector::zeros(n);
    let kill_refs: Vec<&DVector<f64>> = kill.iter().collect();
    let facet_ok = facet.map(|c| certifies(&c.plane, pass_all, &kill_refs));

    let primary = |need_lp_allowed: bool| -> Result<Option<(GatePlan, BlockStrategy, Option<f64>)>> {
        if let (Some(c), Some(true)) = (facet, facet_ok) {
            return Ok(Some((
                GatePlan::Single(c.plane.clone()),
                BlockStrategy::FacetGate,
                Some(c.f_floor),
            )));
        }
        if kill.is_empty() {
            return Ok(None);
        }
        if need_lp_allowed {
            if let Some(cert) = lp_certificate(pass_all, kill, n)? {
                return Ok(Some((
                    GatePlan::Single(cert.hyperplane),
                    BlockStrategy::LpGate,
                    None,
                )));
            }
        }
        Err(Error::Infeasible)
    };

    match zero_exclusion {
        ZeroExclusion::LpFirst => {
            if !kill_origin {
                if kill.is_empty() {
                    return Ok(PlannedGate {
                        plan: GatePlan::Zero,
                        strategy: BlockStrategy::PassThrough,
                        region_floor: None,
                    });
                }
                let (plan, strategy, region_floor) = primary(true)?.expect("kill set nonempty");
                return Ok(PlannedGate { plan, strategy, region_floor });
            }
            // Single-layer first: a certificate must also fire at the origin.
            if let (Some(c), Some(true)) = (facet, facet_ok) {
                if c.plane.eval(&origin) >= GAMMA_MIN {
                    return Ok(PlannedGate {
                        plan: GatePlan::Single(c.plane.clone()),
                        strategy: BlockStrategy::FacetGate,
                        region_floor: Some(c.f_floor),
                    });
                }
            }
            let mut kill_aug = kill.to_vec();
            kill_aug.push(origin.clone());
            if let Some(cert) = lp_certificate(pass_all, &kill_aug, n)? {
                return Ok(PlannedGate {
                    plan: GatePlan::Single(cert.hyperplane),
                    strategy: BlockStrategy::LpGate,
                    region_floor: None,
                });
            }
            // OR fallback: data hyperplane OR origin hyperplane.
            let second = origin_plane(n, mu);
            if !certifies(&second, pass_all, &[&origin]) {
                return Err(Error::Infeasible);
            }
            match primary(true)? {
                Some((GatePlan::Single(h), _, region_floor)) => Ok(PlannedGate {
                    plan: GatePlan::Or(h, second),
                    strategy: BlockStrategy::OrGate,
                    region_floor,
                }),
                Some(_) => unreachable!("primary plans are single hyperplanes"),
                None => Ok(PlannedGate {
                    plan: GatePlan::Single(second),
                    strategy: BlockStrategy::OrGate,
                    region_floor: None,
                }),
            }
        }
        ZeroExclusion::OrGateAlways => {
            let first = primary(true)?;
            if kill_origin {
                let second = origin_plane(n, mu);
                if !certifies(&second, pass_all, &[&origin]) {
                    return Err(Error::Infeasible);
                }
                match first {
                    Some((GatePlan::Single(h), _, region_floor)) => Ok(PlannedGate {
                        plan: GatePlan::Or(h, second),
                        strategy: BlockStrategy::OrGate,
                        region_floor,
                    }),
                    Some(_) => unreachable!("primary plans are single hyperplanes"),
                    None => Ok(PlannedGate {
                        plan: GatePlan::Single(second),
                        strategy: BlockStrategy::OrGate,
                        region_floor: None,
                    }),
                }
            } else {
                match first {
                    Some((plan, strategy, region_floor)) => Ok(PlannedGate { plan, strategy, region_floor }),
                    None => Ok(PlannedGate {
                        plan: GatePlan::Zero,
                        strategy: BlockStrategy::PassThrough,
                        region_floor: None,
                    }),
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Block assembly
// ---------------------------------------------------------------------------

/// Region bound for sizing alphas: at this block's input layer, every probe
/// from the probe box that is not yet excluded has coordinates at most
/// `state_hi`; whenever the gate fires with value at least `f_floor`, the
/// alphas drive all such states to zero.
struct RegionGuard {
    state_hi: DVector<f64>,
    f_floor: f64,
}

/// Builds an n-identity block from a planned gate.
///
/// Output bias: `b_j = mu + max(0, -min_pass x_j)` so every passing
/// coordinate lands at `>= mu`. Gate weight:
/// `alpha_j = s_alpha * min(0, min_kill -(x_j + b_j) / f(x))`, which forces
/// a nonpositive pre-activation (hence an exact zero output) for every kill
/// point, with multiplicative slack `s_alpha`.
fn assemble_block(
    n: usize,
    planned: &PlannedGate,
    pass_all: &[DVector<f64>],
    kill_all: &[DVector<f64>],
    region: Option<&RegionGuard>,
    mu: f64,
    s_alpha: f64,
) -> Result<ResNetBlock> {
    let mut bias = DVector::from_element(n, mu);
    for j in 0..n {
        let min_pass = pass_all.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min);
        if min_pass.is_finite() && min_pass < 0.0 {
            bias[j] = mu - min_pass;
        }
    }

    let mut alpha = DVector::zeros(n);
    let kill_f: Vec<f64> = kill_all.iter().map(|x| planned.plan.eval(x)).collect();
    for (x, &f) in kill_all.iter().zip(&kill_f) {
        if f <= 0.0 {
            return Err(Error::VerificationFailed(format!(
                "gate does not fire on kill point {:?}",
                x.as_slice()
            )));
        }
    }
    for j in 0..n {
        let mut m = f64::INFINITY;
        for (x, &f) in kill_all.iter().zip(&kill_f) {
            m = m.min(-(x[j] + bias[j]) / f);
        }
        if let Some(guard) = region {
            m = m.min(-(guard.state_hi[j] + bias[j]) / guard.f_floor);
        }
        if m.is_finite() && m < 0.0 {
            alpha[j] = s_alpha * m;
        }
    }

    // Self-check by substitution: gates closed on the pass side, every kill
    // point driven to a nonpositive pre-activation in every coordinate.
    for x in pass_all {
        if planned.plan.eval(x) != 0.0 {
            return Err(Error::VerificationFailed(
                "gate fires on a pass point".into(),
            ));
        }
    }
    for (x, &f) in kill_all.iter().zip(&kill_f) {
        for j in 0..n {
            if x[j] + bias[j] + alpha[j] * f > 0.0 {
                return Err(Error::VerificationFailed(format!(
                    "kill point not excluded at coordinate {}",
                    j
                )));
            }
        }
    }

    Ok(ResNetBlock {
        shortcut: DMatrix::identity(n, n),
        bias,
        alpha,
        gate: planned.plan.network(n, n),
    })
}

/// Builds one separation block in current-layer coordinates.
///
/// `pass` and `kill` must already be shifted by the tracker. The block is
/// treated as "after the first" (mandatory origin kill) exactly when the
/// tracker has history.
pub fn build_block(
    pass: &[DVector<f64>],
    kill: &[DVector<f64>],
    tracker: &mut ShiftTracker,
    cfg: &SynthesisConfig,
) -> Result<(ResNetBlock, BlockStrategy)> {
    let n = tracker.shift.len();
    let kill_origin = !tracker.history.is_empty();
    let planned = plan_gate(pass, kill, n, tracker.mu, kill_origin, cfg.zero_exclusion, None)?;
    let mut kill_all = kill.to_vec();
    if kill_origin {
        kill_all.push(DVector::zeros(n));
    }
    let block = assemble_block(n, &planned, pass, &kill_all, None, tracker.mu, cfg.alpha_safety)?;
    tracker.apply(&block.bias);
    Ok((block, planned.strategy))
}

/// A facet chain: one block per polytope facet plus its shift history.
#[derive(Debug, Clone)]
pub struct ChainFragment {
    pub blocks: Vec<ResNetBlock>,
    pub strategies: Vec<BlockStrategy>,
    pub tracker: ShiftTracker,
}

/// Builds the block chain excluding everything outside polytope `p`.
///
/// Block `t` kills the not-yet-excluded points that violate facet `t`; all
/// other live points (and the whole covered region, via the polytope hull
/// corners) pass through as an affine shift. `probe_hi`, when given, is the
/// upper corner of the probe region for which off-polytope exclusion is
/// additionally guaranteed.
pub fn build_chain(
    pass: &[DVector<f64>],
    kill: &[DVector<f64>],
    p: &Polytope,
    cfg: &SynthesisConfig,
    probe_hi: Option<&DVector<f64>>,
) -> Result<ChainFragment> {
    let n = p.dim();
    for x in pass {
        if p.contains(x)? != Membership::StrictlyInside {
            return Err(Error::DegenerateInput(
                "chain pass point not strictly inside the polytope".into(),
            ));
        }
    }
    for x in kill {
        if p.contains(x)? != Membership::Outside {
            return Err(Error::DegenerateInput(
                "chain kill point not outside the polytope".into(),
            ));
        }
    }

    let mut tracker = ShiftTracker::new(n, cfg.margin);
    let mut blocks = Vec::with_capacity(p.facets.len());
    let mut strategies = Vec::with_capacity(p.facets.len());
    let mut survivors: Vec<usize> = (0..kill.len()).collect();
    // Entrywise upper bound, at the current layer, on the state of any
    // not-yet-excluded probe from the probe box. ReLU can lift negative
    // coordinates to 0, hence the max with 0 at each step.
    let mut region_hi = probe_hi.cloned();

    for (t, facet) in p.facets.iter().enumerate() {
        let shift = tracker.shift.clone();
        let (kill_t, live): (Vec<usize>, Vec<usize>) = survivors
            .iter()
            .partition(|&&i| facet.plane.eval(&kill[i]) > -facet.margin);

        let shifted = |x: &DVector<f64>| x + &shift;
        let mut pass_all: Vec<DVector<f64>> = pass.iter().map(shifted).collect();
        pass_all.extend(live.iter().map(|&i| shifted(&kill[i])));
        pass_all.extend(p.hull.iter().map(shifted));
        let kill_pts: Vec<DVector<f64>> = kill_t.iter().map(|&i| shifted(&kill[i])).collect();
        let kill_orig_refs: Vec<&DVector<f64>> = kill_t.iter().map(|&i| &kill[i]).collect();

        let candidate = facet_candidate(facet, &shift, &kill_orig_refs);
        let kill_origin = t > 0;
        let planned = plan_gate(
            &pass_all,
            &kill_pts,
            n,
            cfg.margin,
            kill_origin,
            cfg.zero_exclusion,
            Some(&candidate),
        )?;

        let mut kill_all = kill_pts;
        if kill_origin {
            kill_all.push(DVector::zeros(n));
        }
        let region = match (&region_hi, planned.region_floor) {
            (Some(hi), Some(f_floor)) => Some(RegionGuard {
                state_hi: (*hi).clone(),
                f_floor,
            }),
            _ => None,
        };
        let block = assemble_block(
            n,
            &planned,
            &pass_all,
            &kill_all,
            region.as_ref(),
            cfg.margin,
            cfg.alpha_safety,
        )?;
        if let Some(hi) = region_hi.as_mut() {
            for j in 0..n {
                hi[j] = (hi[j] + block.bias[j]).max(0.0);
            }
        }
        tracker.apply(&block.bias);
        blocks.push(block);
        strategies.push(planned.strategy);
        survivors = live;
    }

    if !survivors.is_empty() {
        return Err(Error::VerificationFailed(
            "kill points survived the whole facet chain (invalid cover)".into(),
        ));
    }

    Ok(ChainFragment {
        blocks,
        strategies,
        tracker,
    })
}

/// Depth-equalization block: survivors (all coordinates >= mu) pass as
/// `x + mu`, the zero vector stays the zero vector.
pub fn build_redundant_block(
    width: usize,
    tracker: &mut ShiftTracker,
    cfg: &SynthesisConfig,
) -> Result<ResNetBlock> {
    let planned = PlannedGate {
        plan: GatePlan::Single(origin_plane(width, cfg.margin)),
        strategy: BlockStrategy::Redundant,
        region_floor: None,
    };
    let kill_all = [DVector::zeros(width)];
    let block = assemble_block(
        width,
        &planned,
        &[],
        &kill_all,
        None,
        cfg.margin,
        cfg.alpha_safety,
    )?;
    tracker.apply(&block.bias);
    Ok(block)
}

/// Builds one branch per cover polytope (across all categories), equalizes
/// depths with redundant blocks, and wires the per-category readout.
pub fn build_parallel(
    d: &LabeledDataset,
    covers: &[PolytopeCover],
    cfg: &SynthesisConfig,
) -> Result<ParallelNet> {
    let k = d.num_categories();
    if k < 2 {
        return Err(Error::InvalidDataset("classification needs k >= 2 categories".into()));
    }
    if covers.len() != k as usize {
        return Err(Error::DegenerateInput(format!(
            "expected {} covers, got {}",
            k,
            covers.len()
        )));
    }
    let n = d.dim();
    let (bb_lo, bb_hi) = d.bounding_box();
    let probe_box = (bb_lo.map(|x| x - 1.0), bb_hi.map(|x| x + 1.0));

    struct Pending {
        label: u32,
        polytope: Polytope,
        fragment: ChainFragment,
    }
    let mut pending = Vec::new();
    for cover in covers {
        for p in &cover.polytopes {
            let mut pass = Vec::new();
            let mut kill = Vec::new();
            for (i, point) in d.points().iter().enumerate() {
                if p.contains(point)? == Membership::StrictlyInside {
                    if d.labels()[i] != cover.target_label {
                        return Err(Error::VerificationFailed(
                            "cover polytope contains a non-target point".into(),
                        ));
                    }
                    pass.push(point.clone());
                } else {
                    kill.push(point.clone());
                }
            }
            let fragment = build_chain(&pass, &kill, p, cfg, Some(&probe_box.1))?;
            pending.push(Pending {
                label: cover.target_label,
                polytope: p.clone(),
                fragment,
            });
        }
    }

    let depth_blocks = pending
        .iter()
        .map(|p| p.fragment.blocks.len())
        .max()
        .unwrap_or(0)
        .max(2);

    let mut branches = Vec::with_capacity(pending.len());
    for mut item in pending {
        while item.fragment.blocks.len() < depth_blocks {
            let block = build_redundant_block(n, &mut item.fragment.tracker, cfg)?;
            item.fragment.blocks.push(block);
            item.fragment.strategies.push(BlockStrategy::Redundant);
        }
        branches.push(Branch {
            net: ResNet::new(item.fragment.blocks),
            label: item.label,
            polytope: item.polytope,
            shifts: item.fragment.tracker.history.clone(),
            strategies: item.fragment.strategies,
        });
    }

    let mut units = vec![Vec::new(); k as usize];
    for (b, branch) in branches.iter().enumerate() {
        let start = b * n;
        units[(branch.label - 1) as usize].extend(start..start + n);
    }

    Ok(ParallelNet {
        branches,
        readout: ReadoutSpec { units },
        input_dim: n,
        num_categories: k,
        config: *cfg,
        probe_box,
    })
}

/// Merges the parallel branches into one network: projection shortcut on the
/// first block, block-diagonal shortcuts and gates in the interior (zero
/// cross-branch weights), and the readout realized as a final block with a
/// 0/1 projection shortcut and a disconnected gate.
pub fn merge_to_single(pn: &ParallelNet) -> Result<ResNet> {
    let n = pn.input_dim;
    let nu = pn.branches.len();
    let hidden = nu * n;
    let blocks_per_branch = pn.num_blocks();
    for branch in &pn.branches {
        if branch.net.blocks.len() != blocks_per_branch {
            return Err(Error::DegenerateInput("branch depths not equalized".into()));
        }
    }

    let mut blocks = Vec::with_capacity(blocks_per_branch + 1);
    for t in 0..blocks_per_branch {
        let in_dim = if t == 0 { n } else { hidden };
        let mut shortcut = DMatrix::zeros(hidden, in_dim);
        let mut bias = DVector::zeros(hidden);
        let mut alpha = DVector::zeros(hidden);
        let gate_depth = pn
            .branches
            .iter()
            .map(|b| b.net.blocks[t].gate.depth())
            .max()
            .unwrap_or(1);
        let mut lifted: Vec<GateNetwork> = pn
            .branches
            .iter()
            .map(|b| b.net.blocks[t].gate.clone())
            .collect();
        for g in &mut lifted {
            g.lift_to_depth(gate_depth);
        }

        for (b, branch) in pn.branches.iter().enumerate() {
            let block = &branch.net.blocks[t];
            let row0 = b * n;
            let col0 = if t == 0 { 0 } else { b * n };
            shortcut
                .view_mut((row0, col0), (n, n))
                .copy_from(&block.shortcut);
            bias.rows_mut(row0, n).copy_from(&block.bias);
            alpha.rows_mut(row0, n).copy_from(&block.alpha);
        }

        // Merge gate layers: the first layer reads the block input (shared
        // for t = 0, branch column slices otherwise); deeper layers are
        // block-diagonal over the branch gate units.
        let mut layers = Vec::with_capacity(gate_depth);
        for l in 0..gate_depth {
            let unit_counts: Vec<usize> = lifted.iter().map(|g| g.layers[l].units_out()).collect();
            let total_units: usize = unit_counts.iter().sum();
            let cols = if l == 0 {
                in_dim
            } else {
                lifted.iter().map(|g| g.layers[l - 1].units_out()).sum()
            };
            let mut weights = DMatrix::zeros(total_units, cols);
            let mut biases = DVector::zeros(total_units);
            let mut row0 = 0;
            let mut col0 = 0;
            for (b, g) in lifted.iter().enumerate() {
                let layer = &g.layers[l];
                let c0 = if l == 0 {
                    if t == 0 {
                        0
                    } else {
                        b * n
                    }
                } else {
                    col0
                };
                weights
                    .view_mut((row0, c0), (layer.units_out(), layer.units_in()))
                    .copy_from(&layer.weights);
                biases
                    .rows_mut(row0, layer.units_out())
                    .copy_from(&layer.biases);
                row0 += layer.units_out();
                if l > 0 {
                    col0 += layer.units_in();
                }
            }
            layers.push(GateLayer { weights, biases });
        }

        blocks.push(ResNetBlock {
            shortcut,
            bias,
            alpha,
            gate: GateNetwork { layers },
        });
    }

    // Readout block: 0/1 projection shortcut, zero bias, disconnected gate.
    let k = pn.num_categories as usize;
    blocks.push(ResNetBlock {
        shortcut: pn.readout.matrix(hidden),
        bias: DVector::zeros(k),
        alpha: DVector::zeros(k),
        gate: GateNetwork::zero(hidden, k),
    });

    let meta = ConstructionMeta {
        config: pn.config,
        branches: pn
            .branches
            .iter()
            .enumerate()
            .map(|(b, branch)| BranchMeta {
                label: branch.label,
                polytope: branch.polytope.clone(),
                unit_offset: b * n,
                width: n,
                shifts: branch.shifts.clone(),
                strategies: branch.strategies.clone(),
            })
            .collect(),
        readout: ReadoutSpec {
            units: pn.readout.units.clone(),
        },
        input_dim: n,
        num_categories: pn.num_categories,
        probe_box: pn.probe_box.clone(),
    };

    let net = ResNet {
        blocks,
        meta: Some(meta),
    };
    let violations = validate_net(&net);
    if !violations.is_empty() {
        return Err(Error::InvalidNetwork(format!("{:?}", violations)));
    }
    Ok(net)
}

/// Everything `synthesize` produces: the parallel form and the merged
/// single network (with construction metadata attached).
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub parallel: ParallelNet,
    pub net: ResNet,
}

/// End-to-end pipeline: covers, parallel branches, merge, self-verify.
/// Never returns an unverified network.
pub fn synthesize(d: &LabeledDataset, cfg: &SynthesisConfig) -> Result<Synthesis> {
    if d.num_categories() < 2 {
        return Err(Error::InvalidDataset("classification needs k >= 2 categories".into()));
    }
    let mut covers = Vec::with_capacity(d.num_categories() as usize);
    for label in 1..=d.num_categories() {
        let cover = build_cover(d, label, cfg.cover)?;
        let report = validate_cover(&cover, d);
        if !report.is_valid() {
            return Err(Error::VerificationFailed(format!(
                "cover for category {} invalid: {:?}",
                label, report.violations
            )));
        }
        covers.push(cover);
    }
    let parallel = build_parallel(d, &covers, cfg)?;
    let net = merge_to_single(&parallel)?;

    let report = crate::verify::verify_dataset(&net, d, TAU)?;
    if !report.all_passed() {
        return Err(Error::VerificationFailed(format!(
            "{} of {} points misclassified by the synthesized network",
            report.fail_count,
            d.len()
        )));
    }
    Ok(Synthesis { parallel, net })
}
