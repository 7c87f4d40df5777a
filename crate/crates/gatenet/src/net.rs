//! ResNet data model and exact forward evaluation.
//!
//! A block computes `y = relu(W x + b + alpha ∘ f(x))` where `W` is the
//! shortcut matrix, `f` the gate function realized by a small ReLU
//! subnetwork, and `∘` the elementwise product. The last gate layer is in
//! one-to-one correspondence with the output layer: gate unit `j` feeds
//! output unit `j` only, weighted by `alpha[j]`.
//!
//! Evaluation is raw 64-bit arithmetic with no tolerances; all comparisons
//! against zero happen in the verification module.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::construct::ConstructionMeta;
use crate::{Error, Result};

/// One affine+ReLU layer of a gate network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateLayer {
    pub weights: DMatrix<f64>,
    pub biases: DVector<f64>,
}

impl GateLayer {
    pub fn units_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn units_in(&self) -> usize {
        self.weights.ncols()
    }
}

/// The hidden subnetwork of a block. ReLU is applied after every layer,
/// including the last: a gate output is a unit output, hence nonnegative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateNetwork {
    pub layers: Vec<GateLayer>,
}

impl GateNetwork {
    /// Gate with all-zero weights and biases: `f(x) = 0` everywhere.
    pub fn zero(input_dim: usize, output_dim: usize) -> Self {
        GateNetwork {
            layers: vec![GateLayer {
                weights: DMatrix::zeros(output_dim, input_dim),
                biases: DVector::zeros(output_dim),
            }],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.units_in())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.units_out())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Appends identity layers until the gate has `target_depth` layers.
    /// Exact: gate values are nonnegative, so `relu(I v) = v`.
    pub fn lift_to_depth(&mut self, target_depth: usize) {
        let m = self.output_dim();
        while self.layers.len() < target_depth {
            self.layers.push(GateLayer {
                weights: DMatrix::identity(m, m),
                biases: DVector::zeros(m),
            });
        }
    }
}

/// A residual block: shortcut `W x + b` plus the gated correction
/// `alpha ∘ f(x)`, all under a final ReLU.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResNetBlock {
    pub shortcut: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub alpha: DVector<f64>,
    pub gate: GateNetwork,
}

impl ResNetBlock {
    pub fn input_dim(&self) -> usize {
        self.shortcut.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.shortcut.nrows()
    }

    /// Identity-shortcut block (square `W = I`).
    pub fn is_identity(&self) -> bool {
        let n = self.input_dim();
        self.output_dim() == n && self.shortcut == DMatrix::identity(n, n)
    }
}

/// A concatenation of blocks; the output layer of block `i` is the input
/// layer of block `i+1`. Depth counts the block input/output layers only,
/// not gate layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResNet {
    pub blocks: Vec<ResNetBlock>,
    /// Present on synthesized networks; carries branch layout, cumulative
    /// shifts and readout wiring for verification.
    pub meta: Option<ConstructionMeta>,
}

impl ResNet {
    pub fn new(blocks: Vec<ResNetBlock>) -> Self {
        ResNet { blocks, meta: None }
    }

    pub fn input_dim(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.input_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.output_dim())
    }

    /// Layer count (depth): number of blocks plus one.
    pub fn depth(&self) -> usize {
        self.blocks.len() + 1
    }

    /// Layer widths `n_1 .. n_rho`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.blocks.iter().map(|b| b.output_dim()));
        w
    }
}

/// Per-layer activations `x^(1) .. x^(rho)` for one input.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    pub layers: Vec<DVector<f64>>,
}

impl ActivationTrace {
    pub fn output(&self) -> &DVector<f64> {
        self.layers.last().expect("trace has at least the input layer")
    }
}

/// Elementwise `max(0, v)`. Maps every nonpositive entry (including -0.0)
/// to canonical +0.0.
pub fn relu(v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("relu input"));
    }
    Ok(DVector::from_iterator(
        v.len(),
        v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }),
    ))
}

/// Row-wise `W x + b`. Hand-rolled so the accumulation order is fixed and
/// identical wherever the same rows appear (merged vs branch evaluation).
fn affine(w: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(w.nrows());
    for i in 0..w.nrows() {
        let mut acc = 0.0f64;
        for j in 0..w.ncols() {
            acc += w[(i, j)] * x[j];
        }
        out[i] = acc + b[i];
    }
    out
}

fn relu_inplace(v: &mut DVector<f64>) {
    for x in v.iter_mut() {
        if !(*x > 0.0) {
            *x = 0.0;
        }
    }
}

/// Evaluates the gate function: affine+ReLU over every layer, the last
/// included.
pub fn eval_gate(gate: &GateNetwork, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != gate.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: gate.input_dim(),
            got: x.len(),
        });
    }
    let mut v = x.clone();
    for layer in &gate.layers {
        let mut next = affine(&layer.weights, &layer.biases, &v);
        relu_inplace(&mut next);
        v = next;
    }
    Ok(v)
}

/// Evaluates one block: `relu(W x + b + alpha ∘ f(x))`.
pub fn eval_block(block: &ResNetBlock, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != block.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: block.input_dim(),
            got: x.len(),
        });
    }
    let f = eval_gate(&block.gate, x)?;
    let mut pre = affine(&block.shortcut, &block.bias, x);
    for j in 0..pre.len() {
        pre[j] += block.alpha[j] * f[j];
    }
    relu_inplace(&mut pre);
    Ok(pre)
}

/// Evaluates the network, discarding intermediate layers.
pub fn eval_net(net: &ResNet, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: x.len(),
        });
    }
    let mut v = x.clone();
    for block in &net.blocks {
        v = eval_block(block, &v)?;
    }
    Ok(v)
}

/// Evaluates the network recording every layer. Trace retention is opt-in
/// per call; use [`eval_net`] when the intermediate layers are not needed.
pub fn eval_net_traced(net: &ResNet, x: &DVector<f64>) -> Result<(DVector<f64>, ActivationTrace)> {
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: x.len(),
        });
    }
    let mut layers = Vec::with_capacity(net.blocks.len() + 1);
    layers.push(x.clone());
    for block in &net.blocks {
        let next = eval_block(block, layers.last().unwrap())?;
        layers.push(next);
    }
    let out = layers.last().unwrap().clone();
    Ok((out, ActivationTrace { layers }))
}

/// One structural violation found by [`validate_net`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Violation {
    pub block: Option<usize>,
    pub rule: String,
}

/// Checks all structural invariants: width chaining, gate dimensioning and
/// one-to-one correspondence, finite entries, minimum depth. Never aborts;
/// returns every violation found.
pub fn validate_net(net: &ResNet) -> Vec<Violation> {
    let mut out = Vec::new();
    if net.depth() < 3 {
        out.push(Violation {
            block: None,
            rule: format!("depth {} < 3", net.depth()),
        });
    }
    for (i, block) in net.blocks.iter().enumerate() {
        let m = block.output_dim();
        if block.bias.len() != m {
            out.push(Violation {
                block: Some(i),
                rule: "bias length != output dim".into(),
            });
        }
        if block.alpha.len() != m {
            out.push(Violation {
                block: Some(i),
                rule: "alpha length != output dim".into(),
            });
        }
        if block.gate.input_dim() != block.input_dim() {
            out.push(Violation {
                block: Some(i),
                rule: "gate input dim != block input dim".into(),
            });
        }
        if block.gate.output_dim() != m {
            out.push(Violation {
                block: Some(i),
                rule: "gate/output correspondence: last gate layer width != output dim".into(),
            });
        }
        if block.gate.layers.is_empty() {
            out.push(Violation {
                block: Some(i),
                rule: "gate has no layers".into(),
            });
        }
        for (l, pair) in block.gate.layers.windows(2).enumerate() {
            if pair[1].units_in() != pair[0].units_out() {
                out.push(Violation {
                    block: Some(i),
                    rule: format!("gate layer {} width chain broken", l + 1),
                });
            }
        }
        for layer in &block.gate.layers {
            if layer.biases.len() != layer.units_out() {
                out.push(Violation {
                    block: Some(i),
                    rule: "gate layer bias length != units".into(),
                });
            }
        }
        if i + 1 < net.blocks.len() && net.blocks[i + 1].input_dim() != m {
            out.push(Violation {
                block: Some(i),
                rule: "width chain: block output dim != next block input dim".into(),
            });
        }
        let finite = block.shortcut.iter().all(|x| x.is_finite())
            && block.bias.iter().all(|x| x.is_finite())
            && block.alpha.iter().all(|x| x.is_finite())
            && block
                .gate
                .layers
                .iter()
                .all(|l| l.weights.iter().all(|x| x.is_finite()) && l.biases.iter().all(|x| x.is_finite()));
        if !finite {
            out.push(Violation {
                block: Some(i),
                rule: "non-finite parameter".into(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(entries: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(entries)
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&v(&[-1.0, 0.0, 2.0])).unwrap(), v(&[0.0, 0.0, 2.0]));
        assert_eq!(relu(&v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(relu(&v(&[3.5, -3.5])).unwrap(), v(&[3.5, 0.0]));
        assert!(relu(&v(&[f64::NAN])).is_err());
    }

    fn one_layer_gate(weights: &[f64], bias: f64) -> GateNetwork {
        GateNetwork {
            layers: vec![GateLayer {
                weights: DMatrix::from_row_slice(1, weights.len(), weights),
                biases: v(&[bias]),
            }],
        }
    }

    #[test]
    fn eval_gate_examples() {
        let g = one_layer_gate(&[1.0, 1.0], -2.0);
        assert_eq!(eval_gate(&g, &v(&[0.0, 0.0])).unwrap(), v(&[0.0]));
        assert_eq!(eval_gate(&g, &v(&[2.0, 2.0])).unwrap(), v(&[2.0]));

        // two layers computing relu(relu(x - 1)) at x = 3
        let g2 = GateNetwork {
            layers: vec![
                GateLayer {
                    weights: DMatrix::from_row_slice(1, 1, &[1.0]),
                    biases: v(&[-1.0]),
                },
                GateLayer {
                    weights: DMatrix::from_row_slice(1, 1, &[1.0]),
                    biases: v(&[0.0]),
                },
            ],
        };
        assert_eq!(eval_gate(&g2, &v(&[3.0])).unwrap(), v(&[2.0]));
        assert!(eval_gate(&g, &v(&[1.0])).is_err());
    }

    fn two_identity_block(alpha: f64, bias: f64) -> ResNetBlock {
        ResNetBlock {
            shortcut: DMatrix::identity(2, 2),
            bias: v(&[bias, bias]),
            alpha: v(&[alpha, alpha]),
            gate: GateNetwork {
                layers: vec![GateLayer {
                    weights: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
                    biases: v(&[-2.0, -2.0]),
                }],
            },
        }
    }

    #[test]
    fn eval_block_examples() {
        let block = two_identity_block(-10.0, 1.0);
        // gate closed at the origin: pure pass-through x + b
        assert_eq!(eval_block(&block, &v(&[0.0, 0.0])).unwrap(), v(&[1.0, 1.0]));
        // gate open at (2,2): f = (2,2), pre-activation 2+1-20 < 0
        assert_eq!(eval_block(&block, &v(&[2.0, 2.0])).unwrap(), v(&[0.0, 0.0]));

        // alpha = 0 disconnects the gate entirely
        let mut free = two_identity_block(0.0, 0.0);
        free.alpha = v(&[0.0, 0.0]);
        assert_eq!(eval_block(&free, &v(&[5.0, 7.0])).unwrap(), v(&[5.0, 7.0]));
    }

    fn pass_through_net(n_blocks: usize) -> ResNet {
        let block = ResNetBlock {
            shortcut: DMatrix::identity(2, 2),
            bias: v(&[0.0, 0.0]),
            alpha: v(&[0.0, 0.0]),
            gate: GateNetwork::zero(2, 2),
        };
        ResNet::new(vec![block; n_blocks])
    }

    #[test]
    fn eval_net_identity_chain() {
        let net = pass_through_net(3);
        let x = v(&[1.5, 0.25]);
        let (out, trace) = eval_net_traced(&net, &x).unwrap();
        assert_eq!(out, x);
        for layer in &trace.layers {
            assert_eq!(*layer, x);
        }
        // compositionality: each trace layer is eval_block of the previous
        for (i, block) in net.blocks.iter().enumerate() {
            assert_eq!(
                eval_block(block, &trace.layers[i]).unwrap(),
                trace.layers[i + 1]
            );
        }
    }

    #[test]
    fn eval_is_deterministic() {
        let net = pass_through_net(4);
        let x = v(&[0.1234567891234, -5.0]);
        let a = eval_net(&net, &x).unwrap();
        let b = eval_net(&net, &x).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn validate_net_examples() {
        let ok = pass_through_net(2);
        assert!(validate_net(&ok).is_empty());

        // too shallow
        let shallow = pass_through_net(1);
        assert!(validate_net(&shallow).iter().any(|v| v.rule.contains("depth")));

        // gate output dim != m
        let mut bad = pass_through_net(2);
        bad.blocks[0].gate = GateNetwork::zero(2, 3);
        assert!(validate_net(&bad)
            .iter()
            .any(|v| v.rule.contains("gate/output correspondence")));

        // width chain broken: first block outputs 3, second expects 2
        let mut chain = pass_through_net(2);
        chain.blocks[0].shortcut = DMatrix::zeros(3, 2);
        chain.blocks[0].bias = v(&[0.0; 3]);
        chain.blocks[0].alpha = v(&[0.0; 3]);
        chain.blocks[0].gate = GateNetwork::zero(2, 3);
        assert!(validate_net(&chain).iter().any(|v| v.rule.contains("width chain")));
    }
}
