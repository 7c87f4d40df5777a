//! Executable audits of the constructed invariants.
//!
//! Every check here recomputes forward passes from scratch and compares
//! against independently derived expectations: dataset classification,
//! exact exclusion (zero branch slices that stay zero), affine pass-through
//! against the recorded cumulative shifts, bit-identical equivalence of the
//! merged network with its parallel branches, and agreement with a purely
//! geometric region oracle.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::construct::{eval_parallel_traced, ConstructionMeta, ParallelNet};
use crate::geometry::{LabeledDataset, Membership, PolytopeCover};
use crate::net::{eval_net_traced, ResNet};
use crate::{Error, Result};

/// Per-point classification record. Self-contained: the verdict is
/// recomputable from the stored readout alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub label: u32,
    pub readout: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub records: Vec<PointRecord>,
    pub pass_count: usize,
    pub fail_count: usize,
    pub tau: f64,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.fail_count == 0
    }
}

/// Classification check over explicit point/label slices (allows empty
/// input, unlike a [`LabeledDataset`]).
pub fn verify_labeled_points(
    net: &ResNet,
    points: &[DVector<f64>],
    labels: &[u32],
    tau: f64,
) -> Result<VerificationReport> {
    let mut records = Vec::with_capacity(points.len());
    let mut pass_count = 0;
    for (i, (point, &label)) in points.iter().zip(labels).enumerate() {
        let (out, _) = eval_net_traced(net, point)?;
        let own = (label - 1) as usize;
        if own >= out.len() {
            return Err(Error::DimensionMismatch {
                expected: label as usize,
                got: out.len(),
            });
        }
        let pass = out[own] > tau
            && out.iter().enumerate().all(|(j, &v)| j == own || v <= tau);
        if pass {
            pass_count += 1;
        }
        records.push(PointRecord {
            index: i,
            label,
            readout: out.as_slice().to_vec(),
            pass,
        });
    }
    Ok(VerificationReport {
        fail_count: records.len() - pass_count,
        pass_count,
        records,
        tau,
    })
}

/// Exact-classification check: each point's own readout coordinate fires
/// (`> tau`) and every other coordinate is zero (`<= tau`).
pub fn verify_dataset(net: &ResNet, d: &LabeledDataset, tau: f64) -> Result<VerificationReport> {
    verify_labeled_points(net, d.points(), d.labels(), tau)
}

fn require_meta(net: &ResNet) -> Result<&ConstructionMeta> {
    net.meta.as_ref().ok_or_else(|| {
        Error::DegenerateInput("network carries no construction metadata".into())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub enum ExclusionFault {
    /// A non-covering branch's final-layer slice is not zero.
    NotExcluded,
    /// A branch slice was zero at some layer but nonzero at a later one.
    Resurrected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExclusionViolation {
    pub point: usize,
    pub branch: usize,
    pub layer: usize,
    pub fault: ExclusionFault,
    pub slice_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub violations: Vec<ExclusionViolation>,
    pub checked_pairs: usize,
    pub tau: f64,
}

impl ExclusionReport {
    pub fn all_passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every branch not covering a point excludes it as an exact
/// zero slice at the final hidden layer, and that zero slices are absorbing:
/// once a branch slice is zero it stays zero at all later layers.
pub fn verify_exclusion(net: &ResNet, d: &LabeledDataset, tau: f64) -> Result<ExclusionReport> {
    let meta = require_meta(net)?;
    let hidden_blocks = net.blocks.len() - 1;
    let mut violations = Vec::new();
    let mut checked_pairs = 0;

    for (i, point) in d.points().iter().enumerate() {
        let (_, trace) = eval_net_traced(net, point)?;
        for (b, branch) in meta.branches.iter().enumerate() {
            let slice_max = |layer: usize| -> f64 {
                trace.layers[layer]
                    .rows(branch.unit_offset, branch.width)
                    .amax()
            };
            // absorbing-zero scan applies to every branch
            let mut was_zero = false;
            for layer in 1..=hidden_blocks {
                let m = slice_max(layer);
                if was_zero && m > tau {
                    violations.push(ExclusionViolation {
                        point: i,
                        branch: b,
                        layer,
                        fault: ExclusionFault::Resurrected,
                        slice_max: m,
                    });
                    break;
                }
                if m <= tau {
                    was_zero = true;
                }
            }
            let covers = branch.polytope.contains(point)? == Membership::StrictlyInside;
            if !covers {
                checked_pairs += 1;
                let m = slice_max(hidden_blocks);
                if m > tau {
                    violations.push(ExclusionViolation {
                        point: i,
                        branch: b,
                        layer: hidden_blocks,
                        fault: ExclusionFault::NotExcluded,
                        slice_max: m,
                    });
                }
            }
        }
    }
    Ok(ExclusionReport {
        violations,
        checked_pairs,
        tau,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub enum PassThroughFault {
    /// Branch slice differs from `point + cumulative shift`.
    ShiftMismatch,
    /// A surviving coordinate dropped below the pass-through floor.
    BelowFloor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassThroughViolation {
    pub point: usize,
    pub branch: usize,
    pub layer: usize,
    pub fault: PassThroughFault,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassThroughReport {
    pub violations: Vec<PassThroughViolation>,
    pub checked_pairs: usize,
    pub tau: f64,
}

impl PassThroughReport {
    pub fn all_passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every covered point traverses its covering branch as a pure
/// affine shift: layer `j` slice equals `point + B(j)` within `tau`, every
/// entry at least `margin - tau`.
pub fn verify_pass_through(net: &ResNet, d: &LabeledDataset, tau: f64) -> Result<PassThroughReport> {
    let meta = require_meta(net)?;
    let hidden_blocks = net.blocks.len() - 1;
    let mu = meta.config.margin;
    let mut violations = Vec::new();
    let mut checked_pairs = 0;

    for (i, point) in d.points().iter().enumerate() {
        let (_, trace) = eval_net_traced(net, point)?;
        for (b, branch) in meta.branches.iter().enumerate() {
            if branch.polytope.contains(point)? != Membership::StrictlyInside {
                continue;
            }
            checked_pairs += 1;
            for layer in 1..=hidden_blocks {
                let slice = trace.layers[layer].rows(branch.unit_offset, branch.width);
                let expected = point + &branch.shifts[layer - 1];
                let dev = (slice - &expected).amax();
                if dev > tau {
                    violations.push(PassThroughViolation {
                        point: i,
                        branch: b,
                        layer,
                        fault: PassThroughFault::ShiftMismatch,
                        deviation: dev,
                    });
                }
                let min_entry = trace.layers[layer]
                    .rows(branch.unit_offset, branch.width)
                    .min();
                if min_entry < mu - tau {
                    violations.push(PassThroughViolation {
                        point: i,
                        branch: b,
                        layer,
                        fault: PassThroughFault::BelowFloor,
                        deviation: mu - min_entry,
                    });
                }
            }
        }
    }
    Ok(PassThroughReport {
        violations,
        checked_pairs,
        tau,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffMismatch {
    pub probe: usize,
    pub layer: Option<usize>,
    pub unit: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffReport {
    pub probes_checked: usize,
    pub mismatches: Vec<DiffMismatch>,
}

impl DiffReport {
    pub fn all_passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Differential run: the merged network's hidden layers must equal the
/// concatenated branch outputs bit for bit, and the readouts must match,
/// on every probe.
pub fn diff_parallel_merged(
    pn: &ParallelNet,
    merged: &ResNet,
    probes: &[DVector<f64>],
) -> Result<DiffReport> {
    let hidden_blocks = merged.blocks.len() - 1;
    let mut mismatches = Vec::new();
    for (pi, probe) in probes.iter().enumerate() {
        let (readout, hidden) = eval_parallel_traced(pn, probe)?;
        let (mout, mtrace) = eval_net_traced(merged, probe)?;
        for layer in 1..=hidden_blocks {
            let merged_layer = &mtrace.layers[layer];
            let parallel_layer = &hidden[layer - 1];
            for j in 0..merged_layer.len() {
                if merged_layer[j].to_bits() != parallel_layer[j].to_bits() {
                    mismatches.push(DiffMismatch {
                        probe: pi,
                        layer: Some(layer),
                        unit: j,
                    });
                }
            }
        }
        for j in 0..mout.len() {
            if mout[j].to_bits() != readout[j].to_bits() {
                mismatches.push(DiffMismatch {
                    probe: pi,
                    layer: None,
                    unit: j,
                });
            }
        }
    }
    Ok(DiffReport {
        probes_checked: probes.len(),
        mismatches,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionOracleReport {
    /// Probes where the readout matched the geometric oracle.
    pub agreed: usize,
    /// Probes where it did not; stores (probe index, oracle label if any).
    pub disagreed: Vec<(usize, Option<u32>)>,
    /// Probes inside some facet's boundary band, skipped by the rule.
    pub skipped: usize,
    pub tau: f64,
}

impl RegionOracleReport {
    pub fn all_agreed(&self) -> bool {
        self.disagreed.is_empty()
    }
}

/// Compares the network's readout against a purely geometric oracle.
///
/// A probe in the boundary band of any facet of any cover polytope is
/// skipped. Otherwise the oracle labels it with the covering polytope's
/// category (if strictly inside one) or "no category"; the readout agrees
/// when exactly that coordinate fires, or none does.
pub fn region_oracle_check(
    net: &ResNet,
    covers: &[PolytopeCover],
    probes: &[DVector<f64>],
    tau: f64,
) -> Result<RegionOracleReport> {
    let mut report = RegionOracleReport {
        agreed: 0,
        disagreed: Vec::new(),
        skipped: 0,
        tau,
    };
    for (pi, probe) in probes.iter().enumerate() {
        let banded = covers
            .iter()
            .flat_map(|c| c.polytopes.iter())
            .any(|p| p.in_boundary_band(probe));
        if banded {
            report.skipped += 1;
            continue;
        }
        let mut oracle: Option<u32> = None;
        for cover in covers {
            for p in &cover.polytopes {
                if p.contains(probe)? == Membership::StrictlyInside {
                    oracle = Some(cover.target_label);
                }
            }
        }
        let (out, _) = eval_net_traced(net, probe)?;
        let fired: Vec<usize> = out
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > tau)
            .map(|(j, _)| j)
            .collect();
        let agrees = match oracle {
            Some(label) => fired == vec![(label - 1) as usize],
            None => fired.is_empty(),
        };
        if agrees {
            report.agreed += 1;
        } else {
            report.disagreed.push((pi, oracle));
        }
    }
    Ok(report)
}
