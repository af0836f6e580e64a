//! Recurrent encoders, dense heads, backpropagation through time and Adam.
//!
//! Gate blocks are stacked row-wise in each weight matrix:
//! LSTM uses `[i, f, o, g]`, GRU uses `[z, r, n]`. All arithmetic is `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, Matrix};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CellKind::Lstm => "LSTM",
            CellKind::Gru => "GRU",
        }
    }
}

/// Anything holding trainable arrays in a fixed order.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn fill_zero(&mut self) {
        for s in self.param_slices_mut() {
            s.fill(0.0);
        }
    }

    fn scale(&mut self, k: f64) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }

    fn is_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform(−a, a) with `a = √(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn glorot_fill(rng: &mut SplitMix64, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let a = glorot_bound(fan_in, fan_out);
    for v in out {
        // uniform draws land in [−a, a); reject the closed endpoint.
        loop {
            let x = rng.uniform(-a, a);
            if x > -a {
                *v = x;
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn init(inputs: usize, outputs: usize, rng: &mut SplitMix64) -> Self {
        let mut d = Self::zeros(inputs, outputs);
        glorot_fill(rng, d.weight.as_mut_slice(), inputs, outputs);
        d
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        self.weight.gemv_acc(x, &mut out);
        out
    }
}

impl Parameters for Dense {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentCell {
    pub kind: CellKind,
    /// `(gates·H) × D`.
    pub w_ih: Matrix,
    /// `(gates·H) × H`.
    pub w_hh: Matrix,
    pub bias: Vec<f64>,
}

impl RecurrentCell {
    pub fn zeros(kind: CellKind, input_size: usize, hidden_size: usize) -> Self {
        let rows = kind.gates() * hidden_size;
        Self {
            kind,
            w_ih: Matrix::zeros(rows, input_size),
            w_hh: Matrix::zeros(rows, hidden_size),
            bias: vec![0.0; rows],
        }
    }

    /// Glorot-uniform weights with the stacked gate matrix as fan-out
    /// (`gates·H`), zero biases, LSTM forget bias 1.
    pub fn init(kind: CellKind, input_size: usize, hidden_size: usize, rng: &mut SplitMix64) -> Self {
        let mut cell = Self::zeros(kind, input_size, hidden_size);
        let h = hidden_size;
        let rows = kind.gates() * h;
        glorot_fill(rng, cell.w_ih.as_mut_slice(), input_size, rows);
        glorot_fill(rng, cell.w_hh.as_mut_slice(), h, rows);
        if kind == CellKind::Lstm {
            cell.bias[h..2 * h].fill(1.0);
        }
        cell
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.cols()
    }

    fn check(&self, kind: CellKind, x: &[f64], h: &[f64]) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Shape(format!("expected {kind:?} cell, got {:?}", self.kind)));
        }
        if x.len() != self.input_size() || h.len() != self.hidden_size() {
            return Err(Error::Shape(format!(
                "cell expects input {} / hidden {}, got {} / {}",
                self.input_size(),
                self.hidden_size(),
                x.len(),
                h.len()
            )));
        }
        Ok(())
    }

    fn input_projection(&self, x: &[f64]) -> Vec<f64> {
        let mut pre = self.bias.clone();
        self.w_ih.gemv_acc(x, &mut pre);
        pre
    }

    /// Post-activation gates `[i, f, o, g]` and the new `(h, c)`.
    fn lstm_forward(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hs = self.hidden_size();
        let mut gates = self.input_projection(x);
        self.w_hh.gemv_acc(h, &mut gates);
        for v in &mut gates[..3 * hs] {
            *v = sigmoid(*v);
        }
        for v in &mut gates[3 * hs..] {
            *v = v.tanh();
        }
        let mut c_new = vec![0.0; hs];
        let mut h_new = vec![0.0; hs];
        for j in 0..hs {
            let (i, f, o, g) = (gates[j], gates[hs + j], gates[2 * hs + j], gates[3 * hs + j]);
            c_new[j] = f * c[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        (gates, h_new, c_new)
    }

    /// Post-activation gates `[z, r, n]`, the recurrent candidate term
    /// `U_n h`, and the new hidden state.
    fn gru_forward(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hs = self.hidden_size();
        let mut gates = self.input_projection(x);
        let mut rec = vec![0.0; 3 * hs];
        self.w_hh.gemv_acc(h, &mut rec);
        for j in 0..2 * hs {
            gates[j] = sigmoid(gates[j] + rec[j]);
        }
        let cand_rec = rec[2 * hs..].to_vec();
        let mut h_new = vec![0.0; hs];
        for j in 0..hs {
            let r = gates[hs + j];
            let n = (gates[2 * hs + j] + r * cand_rec[j]).tanh();
            gates[2 * hs + j] = n;
            let z = gates[j];
            h_new[j] = (1.0 - z) * n + z * h[j];
        }
        (gates, cand_rec, h_new)
    }

    /// Run the cell over the rows of `xs` from a zero state, recording what
    /// backpropagation needs.
    pub fn forward_trace(&self, xs: &Matrix) -> Result<CellTrace> {
        if xs.cols() != self.input_size() {
            return Err(Error::Shape(format!(
                "encoder expects {} inputs, window has {}",
                self.input_size(),
                xs.cols()
            )));
        }
        let hs = self.hidden_size();
        let mut trace = CellTrace {
            hidden: vec![vec![0.0; hs]],
            cell: vec![vec![0.0; hs]],
            gates: Vec::with_capacity(xs.rows()),
            cand_rec: Vec::new(),
        };
        for x in xs.iter_rows() {
            let h = trace.hidden.last().unwrap();
            match self.kind {
                CellKind::Lstm => {
                    let c = trace.cell.last().unwrap();
                    let (g, h_new, c_new) = self.lstm_forward(x, h, c);
                    trace.gates.push(g);
                    trace.hidden.push(h_new);
                    trace.cell.push(c_new);
                }
                CellKind::Gru => {
                    let (g, q, h_new) = self.gru_forward(x, h);
                    trace.gates.push(g);
                    trace.cand_rec.push(q);
                    trace.hidden.push(h_new);
                }
            }
        }
        Ok(trace)
    }

    /// Accumulate parameter gradients into `grads` given `dh_final`, the
    /// loss gradient with respect to the last hidden state.
    pub fn backward_trace(&self, xs: &Matrix, trace: &CellTrace, dh_final: &[f64], grads: &mut RecurrentCell) {
        let hs = self.hidden_size();
        let steps = xs.rows();
        let mut dh = dh_final.to_vec();
        let mut dc = vec![0.0; hs];
        let gates_n = self.kind.gates() * hs;
        // Gradients w.r.t. the input-side and recurrent-side pre-activations.
        let mut d_in = vec![0.0; gates_n];
        let mut d_rec = vec![0.0; gates_n];
        for t in (0..steps).rev() {
            let x = xs.row(t);
            let h_prev = &trace.hidden[t];
            let g = &trace.gates[t];
            let mut dh_prev = vec![0.0; hs];
            match self.kind {
                CellKind::Lstm => {
                    let c_prev = &trace.cell[t];
                    let c = &trace.cell[t + 1];
                    for j in 0..hs {
                        let (i, f, o, gg) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
                        let tc = c[j].tanh();
                        let d_o = dh[j] * tc;
                        let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
                        let d_i = dcj * gg;
                        let d_g = dcj * i;
                        let d_f = dcj * c_prev[j];
                        dc[j] = dcj * f;
                        d_in[j] = d_i * i * (1.0 - i);
                        d_in[hs + j] = d_f * f * (1.0 - f);
                        d_in[2 * hs + j] = d_o * o * (1.0 - o);
                        d_in[3 * hs + j] = d_g * (1.0 - gg * gg);
                    }
                    d_rec.copy_from_slice(&d_in);
                }
                CellKind::Gru => {
                    let q = &trace.cand_rec[t];
                    for j in 0..hs {
                        let (z, r, n) = (g[j], g[hs + j], g[2 * hs + j]);
                        let dn = dh[j] * (1.0 - z);
                        let dz = dh[j] * (h_prev[j] - n);
                        dh_prev[j] = dh[j] * z;
                        let dan = dn * (1.0 - n * n);
                        let dr = dan * q[j];
                        d_in[j] = dz * z * (1.0 - z);
                        d_in[hs + j] = dr * r * (1.0 - r);
                        d_in[2 * hs + j] = dan;
                        d_rec[j] = d_in[j];
                        d_rec[hs + j] = d_in[hs + j];
                        d_rec[2 * hs + j] = dan * r;
                    }
                }
            }
            grads.w_ih.add_outer(&d_in, x);
            grads.w_hh.add_outer(&d_rec, h_prev);
            axpy(1.0, &d_in, &mut grads.bias);
            self.w_hh.gemv_t_acc(&d_rec, &mut dh_prev);
            dh = dh_prev;
        }
    }
}

impl Parameters for RecurrentCell {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.w_ih.as_slice(), self.w_hh.as_slice(), &self.bias]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w_ih.as_mut_slice(), self.w_hh.as_mut_slice(), &mut self.bias]
    }
}

/// Per-step quantities recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct CellTrace {
    /// `hidden[0]` is the initial zero state; `hidden[t + 1]` follows step `t`.
    pub hidden: Vec<Vec<f64>>,
    /// LSTM cell states, indexed like `hidden`.
    pub cell: Vec<Vec<f64>>,
    pub gates: Vec<Vec<f64>>,
    /// GRU `U_n h_{t−1}` per step.
    pub cand_rec: Vec<Vec<f64>>,
}

impl CellTrace {
    pub fn final_hidden(&self) -> &[f64] {
        self.hidden.last().unwrap()
    }
}

pub fn lstm_step(cell: &RecurrentCell, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    cell.check(CellKind::Lstm, x, h)?;
    if c.len() != cell.hidden_size() {
        return Err(Error::Shape("cell state length".into()));
    }
    let (_, h, c) = cell.lstm_forward(x, h, c);
    Ok((h, c))
}

pub fn gru_step(cell: &RecurrentCell, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    cell.check(CellKind::Gru, x, h)?;
    Ok(cell.gru_forward(x, h).2)
}

/// Final hidden state after folding the cell over every row of `window`.
pub fn encode_sequence(cell: &RecurrentCell, window: &Matrix) -> Result<Vec<f64>> {
    Ok(cell.forward_trace(window)?.final_hidden().to_vec())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub const PROB_FLOOR: f64 = 1e-12;

pub fn cross_entropy(probs: &[f64], true_class: usize) -> Result<f64> {
    let p = probs.get(true_class).ok_or(Error::ClassOutOfRange {
        class: true_class,
        num_classes: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One or more recurrent encoders feeding a shared dense head. Encoder `k`
/// reads input group `k`; the head sees the encoders' final hidden states
/// concatenated in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub encoders: Vec<RecurrentCell>,
    pub head: Dense,
}

/// Gradient of a [`Network`]'s loss, shape-congruent with the network.
pub type GradientSet = Network;

/// One training example: an input matrix per encoder and a class label.
#[derive(Debug, Clone)]
pub struct Example<'a> {
    pub inputs: Vec<&'a Matrix>,
    pub label: usize,
}

impl Network {
    pub fn init(kind: CellKind, input_sizes: &[usize], hidden: usize, classes: usize, rng: &mut SplitMix64) -> Self {
        let encoders = input_sizes
            .iter()
            .map(|&d| RecurrentCell::init(kind, d, hidden, rng))
            .collect();
        let head = Dense::init(hidden * input_sizes.len(), classes, rng);
        Self { encoders, head }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn num_classes(&self) -> usize {
        self.head.outputs()
    }

    fn check_inputs(&self, inputs: &[&Matrix]) -> Result<()> {
        if inputs.len() != self.encoders.len() {
            return Err(Error::Shape(format!(
                "network has {} encoders, got {} input groups",
                self.encoders.len(),
                inputs.len()
            )));
        }
        Ok(())
    }

    fn traces(&self, inputs: &[&Matrix]) -> Result<(Vec<CellTrace>, Vec<f64>)> {
        self.check_inputs(inputs)?;
        let mut traces = Vec::with_capacity(inputs.len());
        let mut features = Vec::with_capacity(self.head.inputs());
        for (enc, x) in self.encoders.iter().zip(inputs) {
            let trace = enc.forward_trace(x)?;
            features.extend_from_slice(trace.final_hidden());
            traces.push(trace);
        }
        Ok((traces, features))
    }

    pub fn logits(&self, inputs: &[&Matrix]) -> Result<Vec<f64>> {
        let (_, features) = self.traces(inputs)?;
        Ok(self.head.forward(&features))
    }

    pub fn probabilities(&self, inputs: &[&Matrix]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(inputs)?))
    }

    /// Adds `scale · ∂loss/∂θ` for one example into `grads`; returns the loss.
    pub fn accumulate_gradient(&self, example: &Example<'_>, scale: f64, grads: &mut GradientSet) -> Result<f64> {
        let (traces, features) = self.traces(&example.inputs)?;
        let probs = softmax(&self.head.forward(&features));
        let loss = cross_entropy(&probs, example.label)?;
        let mut dlogits: Vec<f64> = probs.iter().map(|p| p * scale).collect();
        dlogits[example.label] -= scale;

        grads.head.weight.add_outer(&dlogits, &features);
        axpy(1.0, &dlogits, &mut grads.head.bias);
        let mut dfeatures = vec![0.0; features.len()];
        self.head.weight.gemv_t_acc(&dlogits, &mut dfeatures);

        let mut offset = 0;
        for (k, (enc, trace)) in self.encoders.iter().zip(&traces).enumerate() {
            let hs = enc.hidden_size();
            let dh = &dfeatures[offset..offset + hs];
            enc.backward_trace(example.inputs[k], trace, dh, &mut grads.encoders[k]);
            offset += hs;
        }
        Ok(loss)
    }

    pub fn mean_loss(&self, examples: &[Example<'_>]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Empty("examples"));
        }
        let mut total = 0.0;
        for ex in examples {
            total += cross_entropy(&self.probabilities(&ex.inputs)?, ex.label)?;
        }
        Ok(total / examples.len() as f64)
    }
}

impl Parameters for Network {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.encoders.iter().flat_map(|e| e.param_slices()).collect();
        out.extend(self.head.param_slices());
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .encoders
            .iter_mut()
            .flat_map(|e| e.param_slices_mut())
            .collect();
        out.extend(self.head.param_slices_mut());
        out
    }
}

/// Mean cross-entropy over `batch` and its exact gradient by BPTT.
pub fn backward(net: &Network, batch: &[Example<'_>]) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut grads = net.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        loss += net.accumulate_gradient(ex, scale, &mut grads)?;
    }
    Ok((loss * scale, grads))
}

/// Rescale `grads` so its global L2 norm is at most `max_norm`.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads
        .param_slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update<P: Parameters + ?Sized, G: Parameters + ?Sized>(&mut self, params: &mut P, grads: &G) -> Result<()> {
        let grads = grads.param_slices();
        let mut params = params.param_slices_mut();
        if grads.len() != self.first.len()
            || params.len() != self.first.len()
            || grads
                .iter()
                .zip(&params)
                .zip(&self.first)
                .any(|((g, p), m)| g.len() != m.len() || p.len() != m.len())
        {
            return Err(Error::Shape("adam state, parameters and gradients differ".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(&grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// A bare parameter vector, handy for optimizing scalar test functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Flat(pub Vec<f64>);

impl Parameters for Flat {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![&self.0]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cell(kind: CellKind) -> RecurrentCell {
        let mut c = RecurrentCell::zeros(kind, 1, 1);
        c.w_ih.as_mut_slice().fill(1.0);
        c.w_hh.as_mut_slice().fill(1.0);
        c
    }

    #[test]
    fn zero_lstm_stays_at_zero() {
        let cell = RecurrentCell::zeros(CellKind::Lstm, 3, 2);
        let (h, c) = lstm_step(&cell, &[1.0, -2.0, 5.0], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
    }

    #[test]
    fn scalar_lstm_step() {
        let (h, c) = lstm_step(&unit_cell(CellKind::Lstm), &[1.0], &[0.0], &[0.0]).unwrap();
        // Hand computation: i = o = σ(1), g = tanh(1), c = i·g, h = o·tanh(c).
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        let c_exp = s1 * 1.0f64.tanh();
        assert!((c[0] - c_exp).abs() < 1e-15);
        assert!((h[0] - s1 * c_exp.tanh()).abs() < 1e-15);
        assert!((c[0] - 0.55677).abs() < 1e-5);
        assert!((h[0] - 0.36961).abs() < 1e-5);
    }

    #[test]
    fn scalar_gru_step() {
        let h = gru_step(&unit_cell(CellKind::Gru), &[1.0], &[0.5]).unwrap();
        let z = 1.0 / (1.0 + (-1.5f64).exp());
        let n = (1.0 + z * 0.5).tanh();
        assert!((h[0] - ((1.0 - z) * n + z * 0.5)).abs() < 1e-15);
        assert!((z - 0.81757).abs() < 1e-5);
        assert!((n - 0.88724).abs() < 1e-5);
        assert!((h[0] - 0.57064).abs() < 1e-5);
    }

    #[test]
    fn zero_gru_stays_at_zero() {
        let cell = RecurrentCell::zeros(CellKind::Gru, 2, 3);
        assert_eq!(gru_step(&cell, &[4.0, 4.0], &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn step_shape_errors() {
        let cell = RecurrentCell::zeros(CellKind::Gru, 2, 3);
        assert!(gru_step(&cell, &[1.0], &[0.0; 3]).is_err());
        assert!(lstm_step(&cell, &[1.0, 1.0], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(encode_sequence(&cell, &Matrix::zeros(4, 5)).is_err());
    }

    #[test]
    fn single_row_sequence_is_one_step() {
        let mut rng = SplitMix64::new(4);
        let cell = RecurrentCell::init(CellKind::Lstm, 3, 4, &mut rng);
        let x = Matrix::from_rows(&[vec![0.3, -0.1, 0.8]]);
        let (h, _) = lstm_step(&cell, x.row(0), &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(encode_sequence(&cell, &x).unwrap(), h);
    }

    #[test]
    fn frame_order_matters() {
        let mut rng = SplitMix64::new(8);
        for kind in [CellKind::Lstm, CellKind::Gru] {
            let cell = RecurrentCell::init(kind, 3, 5, &mut rng);
            let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
            let mut reversed = rows.clone();
            reversed.reverse();
            let a = encode_sequence(&cell, &Matrix::from_rows(&rows)).unwrap();
            let b = encode_sequence(&cell, &Matrix::from_rows(&reversed)).unwrap();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax(&[1000.0, 0.0]);
        assert_eq!(p[0], 1.0);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        assert!((cross_entropy(&[0.25; 4], 2).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(&[0.5; 2], 0).unwrap() - 0.69315).abs() < 1e-5);
        assert!((cross_entropy(&[1.0, 0.0], 1).unwrap() + PROB_FLOOR.ln()).abs() < 1e-12);
        assert!(cross_entropy(&[0.5; 2], 2).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = Flat(vec![1.0, -2.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        adam.update(&mut p, &Flat(vec![0.0, 0.0])).unwrap();
        assert_eq!(p.0, vec![1.0, -2.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Flat(vec![0.0, 0.0, 0.0]);
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut adam = AdamState::new(cfg, &p);
        adam.update(&mut p, &Flat(vec![3.0, -0.002, 1e3])).unwrap();
        assert!((p.0[0] + 0.01).abs() < 1e-8);
        assert!((p.0[1] - 0.01).abs() < 1e-6);
        assert!((p.0[2] + 0.01).abs() < 1e-8);
    }

    #[test]
    fn adam_minimizes_square() {
        // Scalar simulation of the same recurrence, written out directly.
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * th;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            th -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert!(th.abs() < 0.1);

        let mut p = Flat(vec![1.0]);
        let mut adam = AdamState::new(AdamConfig { lr, ..AdamConfig::default() }, &p);
        for _ in 0..100 {
            let g = Flat(vec![2.0 * p.0[0]]);
            adam.update(&mut p, &g).unwrap();
        }
        assert!(p.0[0].abs() < 0.1);
        assert!((p.0[0] - th).abs() < 1e-12);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut p = Flat(vec![0.0; 3]);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        assert!(adam.update(&mut p, &Flat(vec![0.0; 2])).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = RecurrentCell::init(CellKind::Lstm, 5, 8, &mut SplitMix64::new(1));
        let b = RecurrentCell::init(CellKind::Lstm, 5, 8, &mut SplitMix64::new(1));
        assert_eq!(a, b);
        let bound_ih = glorot_bound(5, 32);
        assert!(a.w_ih.as_slice().iter().all(|v| v.abs() < bound_ih));
        let bound_hh = glorot_bound(8, 32);
        assert!(a.w_hh.as_slice().iter().all(|v| v.abs() < bound_hh));
        assert!(a.bias[..8].iter().all(|&v| v == 0.0));
        assert!(a.bias[8..16].iter().all(|&v| v == 1.0));
        assert!(a.bias[16..].iter().all(|&v| v == 0.0));
        let g = RecurrentCell::init(CellKind::Gru, 5, 8, &mut SplitMix64::new(1));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_variance_matches_uniform() {
        let mut rng = SplitMix64::new(17);
        let d = Dense::init(100, 100, &mut rng);
        let w = d.weight.as_slice();
        assert_eq!(w.len(), 10_000);
        let a = glorot_bound(100, 100);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!((var - a * a / 3.0).abs() < 0.1 * a * a / 3.0);
        assert!(w.iter().all(|x| x.abs() < a));
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut g = Flat(vec![3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g.0[0] - 0.6).abs() < 1e-15 && (g.0[1] - 0.8).abs() < 1e-15);
    }
}
