//! Recurrent cells and dense heads.
//!
//! Four cell types share one weight container: the plain accumulator
//! cell, LSTM, LSTM with diagonal peepholes, and GRU. The forward pass
//! follows the gate algebra exactly; `backward` holds the matching
//! backpropagation-through-time derivatives. The per-step multiply
//! count of each cell is modeled by [`cell_cost`].

pub mod backward;

use crate::mat::{dot, Mat};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Simple,
    Lstm,
    Peephole,
    Gru,
}

impl CellType {
    pub const ALL: [CellType; 4] = [
        CellType::Simple,
        CellType::Lstm,
        CellType::Peephole,
        CellType::Gru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellType::Simple => "simple",
            CellType::Lstm => "lstm",
            CellType::Peephole => "peephole",
            CellType::Gru => "gru",
        }
    }

    pub fn from_name(name: &str) -> Result<CellType> {
        match name {
            "simple" => Ok(CellType::Simple),
            "lstm" => Ok(CellType::Lstm),
            "peephole" => Ok(CellType::Peephole),
            "gru" => Ok(CellType::Gru),
            other => Err(Error::InvalidArgument(format!("unknown cell type '{other}'"))),
        }
    }

    /// Number of (w, u, b) gate blocks. Ordering per type:
    /// simple `[m]`, lstm/peephole `[m, f, i, o]`, gru `[m, z, r]`.
    pub fn gate_count(self) -> usize {
        match self {
            CellType::Simple => 1,
            CellType::Lstm | CellType::Peephole => 4,
            CellType::Gru => 3,
        }
    }

    pub fn peephole_count(self) -> usize {
        if self == CellType::Peephole {
            3
        } else {
            0
        }
    }
}

/// One gate's parameters: input weights, recurrent weights, bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

impl GateParams {
    fn zeros(n_h: usize, n_x: usize) -> GateParams {
        GateParams {
            w: Mat::zeros(n_h, n_x),
            u: Mat::zeros(n_h, n_h),
            b: vec![0.0; n_h],
        }
    }

    fn preactivation(&self, x: &[f64], rec: &[f64]) -> Vec<f64> {
        let mut a = self.w.matvec(x);
        for (j, v) in a.iter_mut().enumerate() {
            *v += dot(self.u.row(j), rec) + self.b[j];
        }
        a
    }
}

/// Weights of one recurrent layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeights {
    pub cell_type: CellType,
    pub n_x: usize,
    pub n_h: usize,
    pub gates: Vec<GateParams>,
    /// Diagonal peephole vectors `[p_f, p_i, p_o]`; empty otherwise.
    pub peepholes: Vec<Vec<f64>>,
}

impl CellWeights {
    pub fn zeros(cell_type: CellType, n_x: usize, n_h: usize) -> CellWeights {
        CellWeights {
            cell_type,
            n_x,
            n_h,
            gates: (0..cell_type.gate_count())
                .map(|_| GateParams::zeros(n_h, n_x))
                .collect(),
            peepholes: (0..cell_type.peephole_count()).map(|_| vec![0.0; n_h]).collect(),
        }
    }

    /// Uniform init in [-0.1, 0.1), biases zero.
    pub fn random(cell_type: CellType, n_x: usize, n_h: usize, rng: &mut impl rand::Rng) -> CellWeights {
        let mut w = CellWeights::zeros(cell_type, n_x, n_h);
        for gate in &mut w.gates {
            for v in gate.w.data.iter_mut().chain(gate.u.data.iter_mut()) {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
        for p in &mut w.peepholes {
            for v in p.iter_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
        w
    }

    pub fn param_count(&self) -> usize {
        self.gates
            .iter()
            .map(|g| g.w.data.len() + g.u.data.len() + g.b.len())
            .sum::<usize>()
            + self.peepholes.iter().map(Vec::len).sum::<usize>()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for g in &self.gates {
            out.extend_from_slice(&g.w.data);
            out.extend_from_slice(&g.u.data);
            out.extend_from_slice(&g.b);
        }
        for p in &self.peepholes {
            out.extend_from_slice(p);
        }
    }

    pub fn unflatten_from(&mut self, src: &[f64], pos: &mut usize) {
        for g in &mut self.gates {
            for dst in [&mut g.w.data, &mut g.u.data, &mut g.b] {
                let len = dst.len();
                dst.copy_from_slice(&src[*pos..*pos + len]);
                *pos += len;
            }
        }
        for p in &mut self.peepholes {
            let len = p.len();
            p.copy_from_slice(&src[*pos..*pos + len]);
            *pos += len;
        }
    }
}

/// Carried state of one layer. For GRU the two vectors coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(n_h: usize) -> CellState {
        CellState {
            h: vec![0.0; n_h],
            c: vec![0.0; n_h],
        }
    }

    /// h = 0, c copied from the supplied initialization.
    pub fn with_c(c0: &[f64]) -> CellState {
        CellState {
            h: vec![0.0; c0.len()],
            c: c0.to_vec(),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn map_inplace(v: &mut [f64], f: impl Fn(f64) -> f64) {
    for x in v.iter_mut() {
        *x = f(*x);
    }
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Post-activation gate vectors in the type's gate order.
    pub acts: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One cell step. Implements, per type:
/// simple: `m = tanh(w x + u h + b); c' = c + m; h' = tanh(c')`
/// lstm:   `c' = f . c + i . m; h' = o . tanh(c')`
/// peephole: lstm with `p_f . c`, `p_i . c` inside the f/i gates and
///           `p_o . c'` inside the o gate
/// gru:    `c' = (1-z) . c + z . tanh(w x + u (r . c) + b); h' = c'`
pub fn cell_step(weights: &CellWeights, state: &CellState, x: &[f64]) -> Result<(CellState, StepCache)> {
    if x.len() != weights.n_x {
        return Err(Error::DimensionMismatch {
            expected: weights.n_x,
            got: x.len(),
        });
    }
    if state.h.len() != weights.n_h || state.c.len() != weights.n_h {
        return Err(Error::DimensionMismatch {
            expected: weights.n_h,
            got: state.h.len(),
        });
    }
    let n_h = weights.n_h;
    let (acts, c, h) = match weights.cell_type {
        CellType::Simple => {
            let mut m = weights.gates[0].preactivation(x, &state.h);
            map_inplace(&mut m, f64::tanh);
            let c: Vec<f64> = state.c.iter().zip(&m).map(|(&c0, &mj)| c0 + mj).collect();
            let h: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
            (vec![m], c, h)
        }
        CellType::Lstm | CellType::Peephole => {
            let peep = weights.cell_type == CellType::Peephole;
            let mut m = weights.gates[0].preactivation(x, &state.h);
            map_inplace(&mut m, f64::tanh);
            let mut f = weights.gates[1].preactivation(x, &state.h);
            let mut i = weights.gates[2].preactivation(x, &state.h);
            if peep {
                for j in 0..n_h {
                    f[j] += weights.peepholes[0][j] * state.c[j];
                    i[j] += weights.peepholes[1][j] * state.c[j];
                }
            }
            map_inplace(&mut f, sigmoid);
            map_inplace(&mut i, sigmoid);
            let c: Vec<f64> = (0..n_h)
                .map(|j| f[j] * state.c[j] + i[j] * m[j])
                .collect();
            let mut o = weights.gates[3].preactivation(x, &state.h);
            if peep {
                for j in 0..n_h {
                    o[j] += weights.peepholes[2][j] * c[j];
                }
            }
            map_inplace(&mut o, sigmoid);
            let h: Vec<f64> = (0..n_h).map(|j| o[j] * c[j].tanh()).collect();
            (vec![m, f, i, o], c, h)
        }
        CellType::Gru => {
            let mut z = weights.gates[1].preactivation(x, &state.c);
            map_inplace(&mut z, sigmoid);
            let mut r = weights.gates[2].preactivation(x, &state.c);
            map_inplace(&mut r, sigmoid);
            let gated: Vec<f64> = r.iter().zip(&state.c).map(|(&rj, &cj)| rj * cj).collect();
            let mut cand = weights.gates[0].preactivation(x, &gated);
            map_inplace(&mut cand, f64::tanh);
            let c: Vec<f64> = (0..n_h)
                .map(|j| (1.0 - z[j]) * state.c[j] + z[j] * cand[j])
                .collect();
            let h = c.clone();
            (vec![cand, z, r], c, h)
        }
    };
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        acts,
        c: c.clone(),
        h: h.clone(),
    };
    Ok((CellState { h, c }, cache))
}

/// Run a layer over a sequence from the given initial state, returning
/// every step's output and the caches needed for backpropagation.
pub fn layer_forward_cached(
    weights: &CellWeights,
    initial: &CellState,
    inputs: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<StepCache>)> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("rnn layer input sequence"));
    }
    let mut state = initial.clone();
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (next, cache) = cell_step(weights, &state, x)?;
        outputs.push(next.h.clone());
        caches.push(cache);
        state = next;
    }
    Ok((outputs, caches))
}

/// Sequence of per-step outputs; h starts at zero, c at the provided
/// initialization (zeros at inference).
pub fn layer_forward(
    weights: &CellWeights,
    c0: &[f64],
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let initial = CellState::with_c(c0);
    let (out, _) = layer_forward_cached(weights, &initial, inputs)?;
    Ok(out)
}

/// A stack of one or more recurrent layers; layer k consumes layer k-1's
/// output sequence. The stack's feature vector is the last layer's final
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnStack {
    pub layers: Vec<CellWeights>,
}

impl RnnStack {
    pub fn new(cell_type: CellType, n_x: usize, hidden: &[usize], rng: &mut impl rand::Rng) -> RnnStack {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut in_size = n_x;
        for &n_h in hidden {
            layers.push(CellWeights::random(cell_type, in_size, n_h, rng));
            in_size = n_h;
        }
        RnnStack { layers }
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_h)
    }

    /// Final feature vector for a sequence; all layers start from h = 0
    /// and per-layer c given by `c0` (one vector per layer).
    pub fn forward(&self, c0: &[Vec<f64>], inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut seq = inputs.to_vec();
        for (layer, c) in self.layers.iter().zip(c0) {
            seq = layer_forward(layer, c, &seq)?;
        }
        seq.pop().ok_or(Error::EmptyInput("rnn stack input sequence"))
    }

    pub fn zero_c0(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| vec![0.0; l.n_h]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(CellWeights::param_count).sum()
    }
}

/// Fully connected layer with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(out_size: usize, in_size: usize) -> DenseLayer {
        DenseLayer {
            w: Mat::zeros(out_size, in_size),
            b: vec![0.0; out_size],
        }
    }

    pub fn random(out_size: usize, in_size: usize, rng: &mut impl rand::Rng) -> DenseLayer {
        let mut l = DenseLayer::zeros(out_size, in_size);
        for v in l.w.data.iter_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
        l
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.w.cols {
            return Err(Error::DimensionMismatch {
                expected: self.w.cols,
                got: x.len(),
            });
        }
        let mut y = self.w.matvec(x);
        for (v, b) in y.iter_mut().zip(&self.b) {
            *v += b;
        }
        Ok(y)
    }

    pub fn param_count(&self) -> usize {
        self.w.data.len() + self.b.len()
    }
}

/// Numerically stable softmax; output sums to one.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

/// Affine map followed by softmax.
pub fn dense_softmax(layer: &DenseLayer, features: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(&layer.forward(features)?))
}

/// Per-step multiply-accumulate count of one cell: a*Nx*Nh + b*Nh^2 +
/// c*Nh + d.
///
/// (a, b) count the input and recurrent matrix-vector products per type:
/// (1,1) simple, (4,4) lstm and peephole, (3,3) gru. The linear term c
/// counts per-element work: activation evaluations plus elementwise
/// multiplies (simple 2; lstm 5 activations + 3 products = 8; peephole
/// adds the 3 diagonal peephole products = 11; gru 3 activations + 3
/// products = 6). d is fixed overhead, zero for all four types.
pub fn cell_cost(cell_type: CellType, n_x: usize, n_h: usize) -> usize {
    let (a, b, c, d) = match cell_type {
        CellType::Simple => (1, 1, 2, 0),
        CellType::Lstm => (4, 4, 8, 0),
        CellType::Peephole => (4, 4, 11, 0),
        CellType::Gru => (3, 3, 6, 0),
    };
    a * n_x * n_h + b * n_h * n_h + c * n_h + d
}

/// Cost of a stacked layer configuration for one step at each layer.
pub fn stack_cost(cell_type: CellType, n_x: usize, hidden: &[usize]) -> usize {
    let mut total = 0;
    let mut in_size = n_x;
    for &n_h in hidden {
        total += cell_cost(cell_type, in_size, n_h);
        in_size = n_h;
    }
    total
}
