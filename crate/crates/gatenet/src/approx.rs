//! Piecewise-constant univariate approximators built from residual blocks.
//!
//! The approximator carries a two-coordinate state `(t', y)` through
//! width-2 identity blocks: `t' = t - a` is the (nonnegative) shifted input
//! and `y` accumulates the function value plus a positive elevation `E` so
//! ReLU never clips it. Block `i` adds the level jump `dv_i = v_i - v_{i-1}`
//! to `y`, gated by a two-layer plateau unit that ramps from 0 to 1 over the
//! width-`1/s` window right of breakpoint `t_i`. Reading off subtracts `E`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::net::{eval_net, GateLayer, GateNetwork, ResNet, ResNetBlock};
use crate::{Error, Result};

/// A piecewise-constant function on `[a, b]`: `N` levels separated by
/// `N - 1` strictly increasing interior breakpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseConstSpec {
    pub domain: (f64, f64),
    pub breakpoints: Vec<f64>,
    pub levels: Vec<f64>,
    /// Plateau transition steepness: each jump completes within `1/s` of
    /// its breakpoint.
    pub steepness: f64,
    /// Additive elevation keeping the carried value positive under ReLU.
    pub elevation: f64,
}

pub const DEFAULT_STEEPNESS: f64 = 1e6;

impl PiecewiseConstSpec {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidSpec(format!("domain [{}, {}] is not a proper interval", a, b)));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidSpec("no levels".into()));
        }
        if self.breakpoints.len() + 1 != self.levels.len() {
            return Err(Error::InvalidSpec(format!(
                "{} breakpoints for {} levels",
                self.breakpoints.len(),
                self.levels.len()
            )));
        }
        for pair in self.breakpoints.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(Error::InvalidSpec("breakpoints not strictly increasing".into()));
            }
        }
        if let (Some(&first), Some(&last)) = (self.breakpoints.first(), self.breakpoints.last()) {
            if first <= a || last >= b {
                return Err(Error::InvalidSpec("breakpoints must lie strictly inside the domain".into()));
            }
        }
        if !(self.steepness.is_finite() && self.steepness > 0.0) {
            return Err(Error::InvalidSpec("steepness must be finite and positive".into()));
        }
        let min_level = self.levels.iter().cloned().fold(f64::INFINITY, f64::min);
        if !self.elevation.is_finite() || self.elevation <= min_level.abs() + 1.0 {
            return Err(Error::InvalidSpec(
                "elevation must exceed |min level| + 1".into(),
            ));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("non-finite level".into()));
        }
        Ok(())
    }

    /// Index of the level interval containing `t`.
    pub fn interval(&self, t: f64) -> usize {
        self.breakpoints.iter().take_while(|&&bp| t >= bp).count()
    }

    /// The piecewise-constant function itself.
    pub fn value(&self, t: f64) -> f64 {
        self.levels[self.interval(t)]
    }
}

fn spec_from_levels(a: f64, b: f64, levels: Vec<f64>, steepness: f64) -> PiecewiseConstSpec {
    let n = levels.len();
    let width = (b - a) / n as f64;
    let breakpoints = (1..n).map(|i| a + width * i as f64).collect();
    let min_level = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    PiecewiseConstSpec {
        domain: (a, b),
        breakpoints,
        levels,
        steepness,
        elevation: min_level.abs() + 2.0,
    }
}

/// Fits `n_levels` uniform intervals over the sample span; each level is the
/// mean of the samples falling in its interval.
pub fn fit_pwc(samples: &[(f64, f64)], n_levels: usize) -> Result<PiecewiseConstSpec> {
    if n_levels == 0 {
        return Err(Error::InvalidSpec("level count must be positive".into()));
    }
    if samples.len() < n_levels {
        return Err(Error::InvalidSpec(format!(
            "{} samples cannot populate {} intervals",
            samples.len(),
            n_levels
        )));
    }
    if samples.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidSpec("non-finite sample".into()));
    }
    let a = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let b = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if !(a < b) {
        return Err(Error::InvalidSpec("samples span a single point".into()));
    }
    let width = (b - a) / n_levels as f64;
    let mut sums = vec![0.0f64; n_levels];
    let mut counts = vec![0usize; n_levels];
    for &(x, y) in samples {
        let i = (((x - a) / width) as usize).min(n_levels - 1);
        sums[i] += y;
        counts[i] += 1;
    }
    let mut levels = Vec::with_capacity(n_levels);
    for (i, (&s, &c)) in sums.iter().zip(&counts).enumerate() {
        if c == 0 {
            return Err(Error::InvalidSpec(format!(
                "interval {} holds no samples; reduce the level count",
                i
            )));
        }
        levels.push(s / c as f64);
    }
    Ok(spec_from_levels(a, b, levels, DEFAULT_STEEPNESS))
}

/// Fits `n_levels` uniform intervals evaluating `f` exactly at interval
/// midpoints. For use when the target function itself is available.
pub fn fit_pwc_midpoint(
    f: impl Fn(f64) -> f64,
    domain: (f64, f64),
    n_levels: usize,
) -> Result<PiecewiseConstSpec> {
    let (a, b) = domain;
    if n_levels == 0 {
        return Err(Error::InvalidSpec("level count must be positive".into()));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidSpec("invalid domain".into()));
    }
    let width = (b - a) / n_levels as f64;
    let levels: Vec<f64> = (0..n_levels)
        .map(|i| f(a + width * (i as f64 + 0.5)))
        .collect();
    if levels.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec("target function produced a non-finite value".into()));
    }
    Ok(spec_from_levels(a, b, levels, DEFAULT_STEEPNESS))
}

/// The read-off rule paired with a built approximator: the function value is
/// the second output coordinate minus the elevation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReadOff {
    pub elevation: f64,
}

impl ReadOff {
    pub fn apply(&self, output: &DVector<f64>) -> f64 {
        output[1] - self.elevation
    }
}

/// Two-layer plateau gate on the first state coordinate:
/// `g(t') = relu(relu(s (t' - bp)) - relu(s (t' - bp) - 1))`,
/// 0 left of the breakpoint, 1 from `bp + 1/s` on, linear between.
fn plateau_gate(bp_shifted: f64, s: f64) -> GateNetwork {
    let l1 = GateLayer {
        weights: DMatrix::from_row_slice(2, 2, &[s, 0.0, s, 0.0]),
        biases: DVector::from_row_slice(&[-s * bp_shifted, -s * bp_shifted - 1.0]),
    };
    // output unit 0 feeds the t' coordinate (alpha 0, value irrelevant);
    // output unit 1 is the plateau
    let l2 = GateLayer {
        weights: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]),
        biases: DVector::zeros(2),
    };
    GateNetwork { layers: vec![l1, l2] }
}

fn pass_through_block() -> ResNetBlock {
    ResNetBlock {
        shortcut: DMatrix::identity(2, 2),
        bias: DVector::zeros(2),
        alpha: DVector::zeros(2),
        gate: GateNetwork::zero(2, 2),
    }
}

/// Builds the approximator network for a validated spec.
///
/// Input: width-1 vector `(t)`. First block projects to the state
/// `(t - a, v_0 + E)`; each subsequent block adds one gated level jump to
/// the second coordinate. Pass-through blocks pad the depth to the
/// three-layer minimum.
pub fn build_approximator(spec: &PiecewiseConstSpec) -> Result<(ResNet, ReadOff)> {
    spec.validate()?;
    let (a, _) = spec.domain;
    let mut blocks = Vec::with_capacity(spec.levels.len().max(2));

    blocks.push(ResNetBlock {
        shortcut: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        bias: DVector::from_row_slice(&[-a, spec.levels[0] + spec.elevation]),
        alpha: DVector::zeros(2),
        gate: GateNetwork::zero(1, 2),
    });

    for (i, bp) in spec.breakpoints.iter().enumerate() {
        let dv = spec.levels[i + 1] - spec.levels[i];
        blocks.push(ResNetBlock {
            shortcut: DMatrix::identity(2, 2),
            bias: DVector::zeros(2),
            alpha: DVector::from_row_slice(&[0.0, dv]),
            gate: plateau_gate(bp - a, spec.steepness),
        });
    }

    while blocks.len() < 2 {
        blocks.push(pass_through_block());
    }

    Ok((
        ResNet::new(blocks),
        ReadOff {
            elevation: spec.elevation,
        },
    ))
}

/// Sup-error survey of an approximator against a target function, split by
/// whether the grid point is clear of every transition window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupErrorReport {
    /// Max error over grid points at distance >= 1/s from all breakpoints.
    pub plateau_sup: f64,
    /// Max error over the remaining (transition-window) grid points.
    pub transition_sup: f64,
    pub plateau_count: usize,
    pub transition_count: usize,
}

pub fn sup_error_report(
    net: &ResNet,
    read_off: &ReadOff,
    spec: &PiecewiseConstSpec,
    target: impl Fn(f64) -> f64,
    grid_points: usize,
) -> Result<SupErrorReport> {
    let (a, b) = spec.domain;
    let window = 1.0 / spec.steepness;
    let mut report = SupErrorReport {
        plateau_sup: 0.0,
        transition_sup: 0.0,
        plateau_count: 0,
        transition_count: 0,
    };
    for i in 0..grid_points.max(1) {
        let t = if grid_points <= 1 {
            (a + b) / 2.0
        } else {
            a + (b - a) * i as f64 / (grid_points - 1) as f64
        };
        let out = eval_net(net, &DVector::from_row_slice(&[t]))?;
        let err = (read_off.apply(&out) - target(t)).abs();
        let near_transition = spec
            .breakpoints
            .iter()
            .any(|&bp| (t - bp).abs() < window);
        if near_transition {
            report.transition_sup = report.transition_sup.max(err);
            report.transition_count += 1;
        } else {
            report.plateau_sup = report.plateau_sup.max(err);
            report.plateau_count += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::eval_net_traced;

    #[test]
    fn midpoint_fit_of_identity() {
        let spec = fit_pwc_midpoint(|x| x, (0.0, 1.0), 4).unwrap();
        assert_eq!(spec.levels, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(spec.breakpoints, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn constant_samples_give_constant_levels() {
        let samples: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 / 19.0, 3.5)).collect();
        let spec = fit_pwc(&samples, 5).unwrap();
        assert!(spec.levels.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn midpoint_fit_matches_sine_exactly() {
        let spec = fit_pwc_midpoint(f64::sin, (0.0, std::f64::consts::TAU), 256).unwrap();
        let width = std::f64::consts::TAU / 256.0;
        for (i, &v) in spec.levels.iter().enumerate() {
            let mid = width * (i as f64 + 0.5);
            assert!((v - mid.sin()).abs() <= 1e-12);
        }
    }

    #[test]
    fn sparse_samples_leave_an_interval_empty() {
        let samples = [(0.0, 1.0), (0.05, 1.0), (1.0, 2.0)];
        assert!(matches!(fit_pwc(&samples, 3), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn constant_network_outputs_the_level_everywhere() {
        let spec = fit_pwc_midpoint(|_| 7.25, (0.0, 1.0), 1).unwrap();
        let (net, read_off) = build_approximator(&spec).unwrap();
        assert!(net.depth() >= 3);
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let out = eval_net(&net, &DVector::from_row_slice(&[t])).unwrap();
            assert!((read_off.apply(&out) - 7.25).abs() <= 1e-9);
        }
    }

    #[test]
    fn identity_fit_exact_on_plateau_midpoints() {
        let mut spec = fit_pwc_midpoint(|x| x, (0.0, 1.0), 4).unwrap();
        spec.steepness = 1e4;
        let (net, read_off) = build_approximator(&spec).unwrap();
        for (i, &v) in spec.levels.iter().enumerate() {
            let mid = (i as f64 + 0.5) / 4.0;
            let out = eval_net(&net, &DVector::from_row_slice(&[mid])).unwrap();
            assert!((read_off.apply(&out) - v).abs() <= 1e-6);
        }
    }

    #[test]
    fn decreasing_levels_never_clip() {
        // monotone decreasing into negative values: the elevation keeps the
        // carried coordinate >= 1 at every layer
        let spec = fit_pwc_midpoint(|x| 2.0 - 5.0 * x, (0.0, 1.0), 8).unwrap();
        let (net, read_off) = build_approximator(&spec).unwrap();
        for i in 0..=40 {
            let t = i as f64 / 40.0;
            let (_, trace) = eval_net_traced(&net, &DVector::from_row_slice(&[t])).unwrap();
            for layer in &trace.layers[1..] {
                assert!(layer[1] >= 1.0);
            }
        }
        // and the read-off still tracks the plateau values
        let out = eval_net(&net, &DVector::from_row_slice(&[0.9])).unwrap();
        assert!((read_off.apply(&out) - spec.value(0.9)).abs() <= 1e-6);
    }

    #[test]
    fn plateau_gate_range_and_saturation() {
        let s = 1e4;
        let gate = plateau_gate(0.5, s);
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            let g = crate::net::eval_gate(&gate, &DVector::from_row_slice(&[t, 9.0])).unwrap()[1];
            assert!((0.0..=1.0).contains(&g));
            if t <= 0.5 {
                assert_eq!(g, 0.0);
            }
            if t >= 0.5 + 1.0 / s {
                assert_eq!(g, 1.0);
            }
        }
    }

    #[test]
    fn sup_error_splits_plateau_and_transition() {
        let spec = fit_pwc_midpoint(f64::sin, (0.0, std::f64::consts::TAU), 32).unwrap();
        let (net, read_off) = build_approximator(&spec).unwrap();
        let report = sup_error_report(&net, &read_off, &spec, f64::sin, 2000).unwrap();
        assert!(report.plateau_count > 0);
        // half-interval modulus bound for the Lipschitz-1 target
        let width = std::f64::consts::TAU / 32.0;
        assert!(report.plateau_sup <= width / 2.0 + 1e-6);
    }

    #[test]
    fn elevation_guard_is_enforced() {
        let mut spec = fit_pwc_midpoint(|x| x, (0.0, 1.0), 4).unwrap();
        spec.elevation = 0.5;
        assert!(build_approximator(&spec).is_err());
    }
}
