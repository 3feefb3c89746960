//! Graph cost model: one encoder and one combine MLP per node type, a
//! single bottom-up pass summing child states, and a readout MLP on the
//! root. Gradients are derived by hand.

mod checkpoint;
mod gradcheck;
mod train;

pub use checkpoint::MODEL_FORMAT;
pub use gradcheck::{gradient_check, GradientCheck};
pub use train::{finetune, fit, median_qerror, train, EpochRecord, History, Sample, FINETUNE_MAX_EPOCHS};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::encoding::{topological_order, FeatureSchema, NodeType, QueryGraph};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: 64, learning_rate: 1e-3, batch_size: 64, epochs: 100, patience: 10, seed: 0 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden dimension must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Affine map stored input-major: row `k` holds the weights leaving input
/// `k`, followed by the bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub offset: usize,
}

impl Dense {
    fn len(&self) -> usize {
        (self.input + 1) * self.output
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.input * self.output
    }

    #[inline]
    fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        let out = self.output;
        y.copy_from_slice(&p[self.bias_offset()..self.bias_offset() + out]);
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let w = &p[self.offset + k * out..self.offset + (k + 1) * out];
            for (yj, wj) in y.iter_mut().zip(w) {
                *yj += xk * wj;
            }
        }
    }

    /// Accumulates parameter gradients; writes the input gradient if asked.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn backward(&self, p: &[f64], grad: &mut [f64], x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        let out = self.output;
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let g = &mut grad[self.offset + k * out..self.offset + (k + 1) * out];
            for (gj, dj) in g.iter_mut().zip(dy) {
                *gj += xk * dj;
            }
        }
        let b = self.bias_offset();
        for (gj, dj) in grad[b..b + out].iter_mut().zip(dy) {
            *gj += dj;
        }
        if let Some(dx) = dx {
            for (k, dxk) in dx.iter_mut().enumerate() {
                *dxk = dot(&p[self.offset + k * out..self.offset + (k + 1) * out], dy);
            }
        }
    }
}

/// Fixed-order dot product with eight running sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// affine, ReLU, affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub first: Dense,
    pub second: Dense,
}

impl Mlp {
    fn new(input: usize, hidden: usize, output: usize, offset: &mut usize) -> Mlp {
        let first = Dense { input, output: hidden, offset: *offset };
        *offset += first.len();
        let second = Dense { input: hidden, output, offset: *offset };
        *offset += second.len();
        Mlp { first, second }
    }

    /// `z` receives the pre-activation of the hidden layer.
    #[inline]
    fn forward(&self, p: &[f64], x: &[f64], z: &mut [f64], y: &mut [f64], scratch: &mut [f64]) {
        self.first.forward(p, x, z);
        for (a, &zi) in scratch.iter_mut().zip(z.iter()) {
            *a = zi.max(0.0);
        }
        self.second.forward(p, scratch, y);
    }

    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn backward(&self, p: &[f64], grad: &mut [f64], x: &[f64], z: &[f64], dy: &[f64], dx: Option<&mut [f64]>, scratch: &mut [f64]) {
        let h = self.first.output;
        let (a, dz) = scratch.split_at_mut(h);
        for (ai, &zi) in a.iter_mut().zip(z) {
            *ai = zi.max(0.0);
        }
        self.second.backward(p, grad, a, dy, Some(&mut dz[..h]));
        for (d, &zi) in dz[..h].iter_mut().zip(z) {
            if zi <= 0.0 {
                *d = 0.0;
            }
        }
        self.first.backward(p, grad, x, &dz[..h], dx);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub encoders: Vec<Mlp>,
    pub combiners: Vec<Mlp>,
    pub readout: Mlp,
    pub len: usize,
}

impl Layout {
    pub fn new(schema: &FeatureSchema, hidden: usize) -> Layout {
        let mut offset = 0;
        let encoders = NodeType::ALL.iter().map(|t| Mlp::new(schema.dim(*t), hidden, hidden, &mut offset)).collect();
        let combiners = NodeType::ALL.iter().map(|_| Mlp::new(2 * hidden, hidden, hidden, &mut offset)).collect();
        let readout = Mlp::new(hidden, hidden, 1, &mut offset);
        Layout { encoders, combiners, readout, len: offset }
    }

    /// Named tensors in storage order, for checkpoint headers.
    pub fn tensors(&self) -> Vec<(String, Dense)> {
        let mut out = Vec::new();
        let mut add = |name: String, m: &Mlp| {
            out.push((format!("{name}.0"), m.first));
            out.push((format!("{name}.1"), m.second));
        };
        for (t, m) in NodeType::ALL.iter().zip(&self.encoders) {
            add(format!("encoder.{t:?}"), m);
        }
        for (t, m) in NodeType::ALL.iter().zip(&self.combiners) {
            add(format!("combine.{t:?}"), m);
        }
        add("readout".into(), &self.readout);
        out
    }
}

/// A query graph flattened for repeated evaluation: nodes in evaluation
/// order with their children sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGraph {
    pub schema: FeatureSchema,
    kinds: Vec<u8>,
    features: Vec<f64>,
    feature_start: Vec<usize>,
    order: Vec<u32>,
    child_start: Vec<usize>,
    children: Vec<u32>,
    root: usize,
}

impl PreparedGraph {
    pub fn new(g: &QueryGraph) -> Result<PreparedGraph> {
        g.validate()?;
        let order = topological_order(g)?.into_iter().map(|v| v as u32).collect();
        let mut features = Vec::new();
        let mut feature_start = Vec::with_capacity(g.nodes.len() + 1);
        for n in &g.nodes {
            feature_start.push(features.len());
            features.extend_from_slice(&n.features);
        }
        feature_start.push(features.len());
        let mut child_start = Vec::with_capacity(g.nodes.len() + 1);
        let mut children = Vec::with_capacity(g.edges.len());
        for list in g.children() {
            child_start.push(children.len());
            children.extend(list.into_iter().map(|c| c as u32));
        }
        child_start.push(children.len());
        Ok(PreparedGraph {
            schema: g.schema.clone(),
            kinds: g.nodes.iter().map(|n| n.kind.index() as u8).collect(),
            features,
            feature_start,
            order,
            child_start,
            children,
            root: g.root,
        })
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    fn features(&self, v: usize) -> &[f64] {
        &self.features[self.feature_start[v]..self.feature_start[v + 1]]
    }

    fn children(&self, v: usize) -> &[u32] {
        &self.children[self.child_start[v]..self.child_start[v + 1]]
    }
}

/// Per-node activations kept for the backward pass.
struct Tape {
    h: usize,
    /// Per node: encoder pre-activation, encoder output, child sum,
    /// combine pre-activation, node state.
    slots: Vec<f64>,
    readout_z: Vec<f64>,
    output: f64,
}

impl Tape {
    const WIDTH: usize = 5;

    /// Which hidden ReLUs are active, over every evaluated layer.
    fn activation_pattern(&self, g: &PreparedGraph) -> Vec<bool> {
        let mut out = Vec::new();
        for v in 0..g.len() {
            out.extend(self.slots[self.slot(v, 0)].iter().map(|z| *z > 0.0));
            if !g.children(v).is_empty() {
                out.extend(self.slots[self.slot(v, 3)].iter().map(|z| *z > 0.0));
            }
        }
        out.extend(self.readout_z.iter().map(|z| *z > 0.0));
        out
    }

    fn slot(&self, v: usize, i: usize) -> std::ops::Range<usize> {
        let s = (v * Self::WIDTH + i) * self.h;
        s..s + self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub config: ModelConfig,
    pub schema: FeatureSchema,
    pub layout: Layout,
    pub params: Vec<f64>,
}

impl CostModel {
    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn new(config: ModelConfig, schema: FeatureSchema) -> Result<CostModel> {
        config.validate()?;
        let layout = Layout::new(&schema, config.hidden);
        let mut params = vec![0.0; layout.len];
        let mut r = rng::derive_rng(config.seed, "model-init");
        for (_, d) in layout.tensors() {
            let bound = (6.0 / (d.input + d.output) as f64).sqrt();
            for w in &mut params[d.offset..d.offset + d.input * d.output] {
                *w = r.random_range(-bound..=bound);
            }
        }
        Ok(CostModel { config, schema, layout, params })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// Offset of the readout's output bias.
    pub fn output_bias(&self) -> usize {
        self.layout.readout.second.bias_offset()
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if *schema != self.schema {
            return Err(Error::SchemaMismatch { expected: format!("{:?}", self.schema), found: format!("{schema:?}") });
        }
        Ok(())
    }

    fn run(&self, g: &PreparedGraph) -> Result<Tape> {
        self.check_schema(&g.schema)?;
        let h = self.hidden();
        let p = &self.params;
        let mut tape = Tape { h, slots: vec![0.0; g.len() * Tape::WIDTH * h], readout_z: vec![0.0; h], output: 0.0 };
        let mut input = vec![0.0; 2 * h];
        let mut scratch = vec![0.0; h];
        let mut z = vec![0.0; h];
        let mut y = vec![0.0; h];
        for &v in &g.order {
            let v = v as usize;
            let t = g.kinds[v] as usize;
            self.layout.encoders[t].forward(p, g.features(v), &mut z, &mut y, &mut scratch);
            let (zs, es) = (tape.slot(v, 0), tape.slot(v, 1));
            tape.slots[zs].copy_from_slice(&z);
            tape.slots[es].copy_from_slice(&y);
            let state = tape.slot(v, 4);
            let kids = g.children(v);
            if kids.is_empty() {
                tape.slots[state].copy_from_slice(&y);
                continue;
            }
            input[..h].copy_from_slice(&y);
            let sum = &mut input[h..];
            sum.fill(0.0);
            for &c in kids {
                let cs = tape.slot(c as usize, 4);
                for (s, x) in sum.iter_mut().zip(&tape.slots[cs]) {
                    *s += x;
                }
            }
            let ss = tape.slot(v, 2);
            tape.slots[ss].copy_from_slice(&input[h..]);
            self.layout.combiners[t].forward(p, &input, &mut z, &mut y, &mut scratch);
            let cz = tape.slot(v, 3);
            tape.slots[cz].copy_from_slice(&z);
            tape.slots[state].copy_from_slice(&y);
        }
        let root_state = tape.slots[tape.slot(g.root, 4)].to_vec();
        let mut out = [0.0];
        self.layout.readout.forward(p, &root_state, &mut tape.readout_z, &mut out, &mut scratch);
        tape.output = out[0];
        Ok(tape)
    }

    /// Predicted `log(1 + cost)`.
    pub fn forward(&self, g: &PreparedGraph) -> Result<f64> {
        Ok(self.run(g)?.output)
    }

    pub fn predict(&self, g: &QueryGraph) -> Result<f64> {
        self.forward(&PreparedGraph::new(g)?)
    }

    /// Predicted cost in work units.
    pub fn predict_cost(&self, g: &PreparedGraph) -> Result<f64> {
        Ok(self.forward(g)?.exp() - 1.0)
    }

    /// Adds `scale * d(output)/d(params)` to `grad` and returns the output.
    pub fn accumulate_gradient(&self, g: &PreparedGraph, scale: impl FnOnce(f64) -> f64, grad: &mut [f64]) -> Result<f64> {
        let tape = self.run(g)?;
        let h = self.hidden();
        let p = &self.params;
        let dout = scale(tape.output);
        let mut scratch = vec![0.0; 2 * h];
        let mut dstate = vec![0.0; g.len() * h];
        let root_state = &tape.slots[tape.slot(g.root, 4)];
        self.layout.readout.backward(
            p,
            grad,
            root_state,
            &tape.readout_z,
            &[dout],
            Some(&mut dstate[g.root * h..(g.root + 1) * h]),
            &mut scratch,
        );
        let mut input = vec![0.0; 2 * h];
        let mut dinput = vec![0.0; 2 * h];
        let mut denc = vec![0.0; h];
        for &v in g.order.iter().rev() {
            let v = v as usize;
            let t = g.kinds[v] as usize;
            let ds = dstate[v * h..(v + 1) * h].to_vec();
            let kids = g.children(v);
            if kids.is_empty() {
                denc.copy_from_slice(&ds);
            } else {
                input[..h].copy_from_slice(&tape.slots[tape.slot(v, 1)]);
                input[h..].copy_from_slice(&tape.slots[tape.slot(v, 2)]);
                let cz = &tape.slots[tape.slot(v, 3)];
                self.layout.combiners[t].backward(p, grad, &input, cz, &ds, Some(&mut dinput), &mut scratch);
                denc.copy_from_slice(&dinput[..h]);
                for &c in kids {
                    let c = c as usize;
                    for (d, x) in dstate[c * h..(c + 1) * h].iter_mut().zip(&dinput[h..]) {
                        *d += x;
                    }
                }
            }
            let ez = &tape.slots[tape.slot(v, 0)];
            self.layout.encoders[t].backward(p, grad, g.features(v), ez, &denc, None, &mut scratch);
        }
        Ok(tape.output)
    }

    /// Mean squared error over `batch` and its exact gradient.
    pub fn loss_and_gradient(&self, batch: &[(&PreparedGraph, f64)]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.sum_loss_gradient(batch.iter().map(|(g, y)| (*g, *y, String::new())), &mut grad)?;
        let n = batch.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    /// Sum of squared errors; `grad` receives the gradient of that sum.
    pub(crate) fn sum_loss_gradient<'a>(
        &self,
        items: impl Iterator<Item = (&'a PreparedGraph, f64, String)>,
        grad: &mut [f64],
    ) -> Result<f64> {
        let mut loss = 0.0;
        for (g, label, name) in items {
            let mut err = 0.0;
            self.accumulate_gradient(
                g,
                |out| {
                    err = out - label;
                    2.0 * err
                },
                grad,
            )?;
            if !err.is_finite() {
                return Err(Error::NonFiniteLoss { sample: name });
            }
            loss += err * err;
        }
        Ok(loss)
    }
}
