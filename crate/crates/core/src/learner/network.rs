use rand::Rng;
use serde::{Deserialize, Serialize};

use super::c51::CategoricalSupport;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproximatorKind {
    /// One parameter block per state; requires one-hot observations.
    Tabular,
    Linear,
    /// One hidden ReLU layer.
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Head {
    Scalar,
    Categorical(CategoricalSupport),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ApproximatorKind,
    pub obs_dim: usize,
    pub hidden: usize,
    pub actions: usize,
    pub head: Head,
}

impl Architecture {
    pub fn atoms(&self) -> usize {
        match self.head {
            Head::Scalar => 1,
            Head::Categorical(s) => s.atoms,
        }
    }

    pub fn support(&self) -> Option<&CategoricalSupport> {
        match &self.head {
            Head::Scalar => None,
            Head::Categorical(s) => Some(s),
        }
    }

    /// Raw output width: action values, or per-action logits.
    pub fn outputs(&self) -> usize {
        self.actions * self.atoms()
    }

    pub fn param_count(&self) -> usize {
        let out = self.outputs();
        match self.kind {
            ApproximatorKind::Tabular => self.obs_dim * out,
            ApproximatorKind::Linear => self.obs_dim * out + out,
            ApproximatorKind::Mlp => self.obs_dim * self.hidden + self.hidden + out * self.hidden + out,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.actions == 0 {
            return Err(Error::InvalidArgument(
                "architecture needs obs_dim > 0 and actions > 0".into(),
            ));
        }
        if self.kind == ApproximatorKind::Mlp && self.hidden == 0 {
            return Err(Error::InvalidArgument("mlp needs hidden > 0".into()));
        }
        Ok(())
    }
}

/// Scratch space reused across forward/backward passes.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    inputs: Vec<(usize, f64)>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    d_hidden: Vec<f64>,
    /// Raw outputs of the last forward pass (values or logits).
    pub outputs: Vec<f64>,
}

/// Action values, plus per-action return distributions for categorical heads.
#[derive(Clone, Debug, PartialEq)]
pub struct QOutput {
    pub values: Vec<f64>,
    /// Row-major `actions x atoms`, each row summing to 1.
    pub distributions: Option<Vec<f64>>,
}

impl QOutput {
    pub fn greedy_action(&self) -> usize {
        argmax(&self.values)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// First index of the maximum; ties go to the lowest action.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of `logits` into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QFunction {
    arch: Architecture,
    params: Vec<f64>,
}

impl QFunction {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            params: vec![0.0; arch.param_count()],
            arch,
        })
    }

    /// Tabular starts at zero; linear and MLP layers draw from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut q = Self::zeros(arch)?;
        let out = arch.outputs();
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in slice {
                *p = rng.gen_range(-bound..bound);
            }
        };
        match arch.kind {
            ApproximatorKind::Tabular => {}
            ApproximatorKind::Linear => fill(&mut q.params, arch.obs_dim),
            ApproximatorKind::Mlp => {
                let first = arch.obs_dim * arch.hidden + arch.hidden;
                let (l1, l2) = q.params.split_at_mut(first);
                fill(l1, arch.obs_dim);
                fill(l2, arch.hidden);
                debug_assert_eq!(l2.len(), out * arch.hidden + out);
            }
        }
        Ok(q)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::LengthMismatch {
                what: "parameters",
                expected: arch.param_count(),
                found: params.len(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn copy_params_from(&mut self, other: &QFunction) {
        debug_assert_eq!(self.arch, other.arch);
        self.params.copy_from_slice(&other.params);
    }

    fn load_inputs(&self, state: &[f64], ws: &mut Workspace) -> Result<()> {
        if state.len() != self.arch.obs_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.obs_dim,
                found: state.len(),
            });
        }
        ws.inputs.clear();
        ws.inputs.extend(
            state
                .iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(d, x)| (d, *x)),
        );
        if self.arch.kind == ApproximatorKind::Tabular && !(ws.inputs.len() == 1 && ws.inputs[0].1 == 1.0) {
            return Err(Error::NotOneHot);
        }
        Ok(())
    }

    /// Forward pass; raw outputs land in `ws.outputs`.
    pub fn forward(&self, state: &[f64], ws: &mut Workspace) -> Result<()> {
        self.load_inputs(state, ws)?;
        let out = self.arch.outputs();
        ws.outputs.clear();
        ws.outputs.resize(out, 0.0);
        match self.arch.kind {
            ApproximatorKind::Tabular => {
                let s = ws.inputs[0].0;
                ws.outputs.copy_from_slice(&self.params[s * out..(s + 1) * out]);
            }
            ApproximatorKind::Linear => {
                let bias = &self.params[self.arch.obs_dim * out..];
                ws.outputs.copy_from_slice(bias);
                for &(d, x) in &ws.inputs {
                    let row = &self.params[d * out..(d + 1) * out];
                    for (o, w) in ws.outputs.iter_mut().zip(row) {
                        *o += x * w;
                    }
                }
            }
            ApproximatorKind::Mlp => {
                let h = self.arch.hidden;
                let (w1, rest) = self.params.split_at(self.arch.obs_dim * h);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(out * h);
                ws.pre.clear();
                ws.pre.extend_from_slice(b1);
                for &(d, x) in &ws.inputs {
                    for (p, w) in ws.pre.iter_mut().zip(&w1[d * h..(d + 1) * h]) {
                        *p += x * w;
                    }
                }
                ws.hidden.clear();
                ws.hidden.extend(ws.pre.iter().map(|p| p.max(0.0)));
                for (o, (row, b)) in ws.outputs.iter_mut().zip(w2.chunks_exact(h).zip(b2)) {
                    *o = b + dot(row, &ws.hidden);
                }
            }
        }
        Ok(())
    }

    /// Accumulates `d_out`, the gradient w.r.t. raw outputs
    /// `offset..offset + d_out.len()` of the last forward pass, into `grad`.
    pub fn backward(&self, ws: &mut Workspace, offset: usize, d_out: &[f64], grad: &mut [f64]) {
        let out = self.arch.outputs();
        match self.arch.kind {
            ApproximatorKind::Tabular => {
                let s = ws.inputs[0].0;
                for (j, d) in d_out.iter().enumerate() {
                    grad[s * out + offset + j] += d;
                }
            }
            ApproximatorKind::Linear => {
                let bias = self.arch.obs_dim * out;
                for (j, d) in d_out.iter().enumerate() {
                    grad[bias + offset + j] += d;
                }
                for &(i, x) in &ws.inputs {
                    for (j, d) in d_out.iter().enumerate() {
                        grad[i * out + offset + j] += x * d;
                    }
                }
            }
            ApproximatorKind::Mlp => {
                let h = self.arch.hidden;
                let w1_len = self.arch.obs_dim * h;
                let w2_start = w1_len + h;
                let b2_start = w2_start + out * h;
                ws.d_hidden.clear();
                ws.d_hidden.resize(h, 0.0);
                for (j, &d) in d_out.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let o = offset + j;
                    grad[b2_start + o] += d;
                    let row = w2_start + o * h;
                    for k in 0..h {
                        grad[row + k] += d * ws.hidden[k];
                        ws.d_hidden[k] += d * self.params[row + k];
                    }
                }
                for k in 0..h {
                    if ws.pre[k] <= 0.0 {
                        ws.d_hidden[k] = 0.0;
                    }
                }
                for (g, d) in grad[w1_len..w1_len + h].iter_mut().zip(&ws.d_hidden) {
                    *g += d;
                }
                for &(i, x) in &ws.inputs {
                    for (g, d) in grad[i * h..(i + 1) * h].iter_mut().zip(&ws.d_hidden) {
                        *g += x * d;
                    }
                }
            }
        }
    }

    /// Action values into `values` (expected values for categorical heads),
    /// leaving per-action probabilities in `probs` when categorical.
    pub fn action_values_into(
        &self,
        state: &[f64],
        ws: &mut Workspace,
        values: &mut Vec<f64>,
        probs: &mut Vec<f64>,
    ) -> Result<()> {
        self.forward(state, ws)?;
        values.clear();
        match &self.arch.head {
            Head::Scalar => values.extend_from_slice(&ws.outputs),
            Head::Categorical(support) => {
                let k = support.atoms;
                probs.clear();
                probs.resize(ws.outputs.len(), 0.0);
                for (logits, p) in ws.outputs.chunks_exact(k).zip(probs.chunks_exact_mut(k)) {
                    softmax_into(logits, p);
                    values.push(support.mean(p));
                }
            }
        }
        Ok(())
    }

    pub fn q_values(&self, state: &[f64]) -> Result<QOutput> {
        let mut ws = Workspace::default();
        let mut values = Vec::new();
        let mut probs = Vec::new();
        self.action_values_into(state, &mut ws, &mut values, &mut probs)?;
        Ok(QOutput {
            values,
            distributions: match self.arch.head {
                Head::Scalar => None,
                Head::Categorical(_) => Some(probs),
            },
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
