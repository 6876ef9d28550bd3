//! Backpropagation through time for the four cell types, plus the dense
//! layer backward. The derivative algebra mirrors `cell_step` gate by
//! gate; gradient-vs-finite-difference tests pin it down.

use crate::mat::Mat;
use crate::rnn::{CellType, CellWeights, DenseLayer, StepCache};

/// Gradient block matching one gate's parameters.
#[derive(Debug, Clone)]
pub struct GateGrads {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

/// Gradients for one layer's weights.
#[derive(Debug, Clone)]
pub struct CellGrads {
    pub gates: Vec<GateGrads>,
    pub peepholes: Vec<Vec<f64>>,
}

impl CellGrads {
    pub fn zeros_like(weights: &CellWeights) -> CellGrads {
        CellGrads {
            gates: weights
                .gates
                .iter()
                .map(|g| GateGrads {
                    w: Mat::zeros(g.w.rows, g.w.cols),
                    u: Mat::zeros(g.u.rows, g.u.cols),
                    b: vec![0.0; g.b.len()],
                })
                .collect(),
            peepholes: weights.peepholes.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &CellGrads) {
        for (a, b) in self.gates.iter_mut().zip(&other.gates) {
            a.w.add_scaled(&b.w, 1.0);
            a.u.add_scaled(&b.u, 1.0);
            crate::mat::add_scaled(&mut a.b, &b.b, 1.0);
        }
        for (a, b) in self.peepholes.iter_mut().zip(&other.peepholes) {
            crate::mat::add_scaled(a, b, 1.0);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for g in &mut self.gates {
            g.w.scale(alpha);
            g.u.scale(alpha);
            for v in &mut g.b {
                *v *= alpha;
            }
        }
        for p in &mut self.peepholes {
            for v in p.iter_mut() {
                *v *= alpha;
            }
        }
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
}

fn ewise3(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Backward over a full sequence.
///
/// `d_out[t]` is the loss derivative with respect to the step-t output
/// h_t arriving from outside the layer (head or upper layer). Returns
/// the weight gradients and the per-step input derivatives.
pub fn layer_backward(
    weights: &CellWeights,
    caches: &[StepCache],
    d_out: &[Vec<f64>],
) -> (CellGrads, Vec<Vec<f64>>) {
    assert_eq!(caches.len(), d_out.len());
    let n_h = weights.n_h;
    let n_x = weights.n_x;
    let mut grads = CellGrads::zeros_like(weights);
    let mut dx_seq = vec![vec![0.0; n_x]; caches.len()];
    let mut dh_rec = vec![0.0; n_h];
    let mut dc_rec = vec![0.0; n_h];

    for t in (0..caches.len()).rev() {
        let cache = &caches[t];
        match weights.cell_type {
            CellType::Simple => {
                let m = &cache.acts[0];
                // h = tanh(c); c = c_prev + m
                let mut dc = dc_rec.clone();
                for j in 0..n_h {
                    let dh = d_out[t][j] + dh_rec[j];
                    dc[j] += dh * (1.0 - cache.h[j] * cache.h[j]);
                }
                let da_m: Vec<f64> = (0..n_h).map(|j| dc[j] * (1.0 - m[j] * m[j])).collect();
                accumulate_gate(&mut grads.gates[0], &da_m, &cache.x, &cache.h_prev);
                let mut dh_new = vec![0.0; n_h];
                weights.gates[0].u.matvec_t_add(&da_m, &mut dh_new);
                weights.gates[0].w.matvec_t_add(&da_m, &mut dx_seq[t]);
                dh_rec = dh_new;
                dc_rec = dc;
            }
            CellType::Lstm | CellType::Peephole => {
                let peep = weights.cell_type == CellType::Peephole;
                let (m, f, i, o) = (&cache.acts[0], &cache.acts[1], &cache.acts[2], &cache.acts[3]);
                let th: Vec<f64> = cache.c.iter().map(|&v| v.tanh()).collect();
                let dh: Vec<f64> = (0..n_h).map(|j| d_out[t][j] + dh_rec[j]).collect();
                let da_o: Vec<f64> = (0..n_h)
                    .map(|j| dh[j] * th[j] * o[j] * (1.0 - o[j]))
                    .collect();
                let mut dc: Vec<f64> = (0..n_h)
                    .map(|j| dh[j] * o[j] * (1.0 - th[j] * th[j]) + dc_rec[j])
                    .collect();
                if peep {
                    // The output gate reads c_t through its peephole.
                    for j in 0..n_h {
                        dc[j] += weights.peepholes[2][j] * da_o[j];
                    }
                }
                let da_f: Vec<f64> = (0..n_h)
                    .map(|j| dc[j] * cache.c_prev[j] * f[j] * (1.0 - f[j]))
                    .collect();
                let da_i: Vec<f64> = (0..n_h)
                    .map(|j| dc[j] * m[j] * i[j] * (1.0 - i[j]))
                    .collect();
                let da_m: Vec<f64> = (0..n_h)
                    .map(|j| dc[j] * i[j] * (1.0 - m[j] * m[j]))
                    .collect();
                let mut dc_new = ewise3(&dc, f, |d, fj| d * fj);
                if peep {
                    for j in 0..n_h {
                        dc_new[j] += weights.peepholes[0][j] * da_f[j]
                            + weights.peepholes[1][j] * da_i[j];
                    }
                    for j in 0..n_h {
                        grads.peepholes[0][j] += da_f[j] * cache.c_prev[j];
                        grads.peepholes[1][j] += da_i[j] * cache.c_prev[j];
                        grads.peepholes[2][j] += da_o[j] * cache.c[j];
                    }
                }
                let mut dh_new = vec![0.0; n_h];
                for (gi, da) in [(0, &da_m), (1, &da_f), (2, &da_i), (3, &da_o)] {
                    accumulate_gate(&mut grads.gates[gi], da, &cache.x, &cache.h_prev);
                    weights.gates[gi].u.matvec_t_add(da, &mut dh_new);
                    weights.gates[gi].w.matvec_t_add(da, &mut dx_seq[t]);
                }
                dh_rec = dh_new;
                dc_rec = dc_new;
            }
            CellType::Gru => {
                // h is c; both upstream paths land on dc.
                let (cand, z, r) = (&cache.acts[0], &cache.acts[1], &cache.acts[2]);
                let dc: Vec<f64> = (0..n_h)
                    .map(|j| d_out[t][j] + dh_rec[j] + dc_rec[j])
                    .collect();
                let da_z: Vec<f64> = (0..n_h)
                    .map(|j| dc[j] * (cand[j] - cache.c_prev[j]) * z[j] * (1.0 - z[j]))
                    .collect();
                let da_m: Vec<f64> = (0..n_h)
                    .map(|j| dc[j] * z[j] * (1.0 - cand[j] * cand[j]))
                    .collect();
                let mut v = vec![0.0; n_h];
                weights.gates[0].u.matvec_t_add(&da_m, &mut v);
                let da_r: Vec<f64> = (0..n_h)
                    .map(|j| cache.c_prev[j] * v[j] * r[j] * (1.0 - r[j]))
                    .collect();
                let mut dc_new: Vec<f64> = (0..n_h).map(|j| dc[j] * (1.0 - z[j]) + r[j] * v[j]).collect();
                weights.gates[1].u.matvec_t_add(&da_z, &mut dc_new);
                weights.gates[2].u.matvec_t_add(&da_r, &mut dc_new);

                let gated: Vec<f64> = (0..n_h).map(|j| r[j] * cache.c_prev[j]).collect();
                accumulate_gate(&mut grads.gates[0], &da_m, &cache.x, &gated);
                accumulate_gate(&mut grads.gates[1], &da_z, &cache.x, &cache.c_prev);
                accumulate_gate(&mut grads.gates[2], &da_r, &cache.x, &cache.c_prev);
                for (gi, da) in [(0, &da_m), (1, &da_z), (2, &da_r)] {
                    weights.gates[gi].w.matvec_t_add(da, &mut dx_seq[t]);
                }
                dh_rec = vec![0.0; n_h];
                dc_rec = dc_new;
            }
        }
    }
    (grads, dx_seq)
}

fn accumulate_gate(grads: &mut GateGrads, da: &[f64], x: &[f64], rec: &[f64]) {
    grads.w.rank1_add(da, x, 1.0);
    grads.u.rank1_add(da, rec, 1.0);
    crate::mat::add_scaled(&mut grads.b, da, 1.0);
}

/// Gradients for a dense layer.
#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl DenseGrads {
    pub fn zeros_like(layer: &DenseLayer) -> DenseGrads {
        DenseGrads {
            w: Mat::zeros(layer.w.rows, layer.w.cols),
            b: vec![0.0; layer.b.len()],
        }
    }

    pub fn add(&mut self, other: &DenseGrads) {
        self.w.add_scaled(&other.w, 1.0);
        crate::mat::add_scaled(&mut self.b, &other.b, 1.0);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.w.scale(alpha);
        for v in &mut self.b {
            *v *= alpha;
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w.data);
        out.extend_from_slice(&self.b);
    }
}

/// Accumulate dense-layer gradients for one sample and return dx.
pub fn dense_backward(layer: &DenseLayer, x: &[f64], dy: &[f64], grads: &mut DenseGrads) -> Vec<f64> {
    grads.w.rank1_add(dy, x, 1.0);
    crate::mat::add_scaled(&mut grads.b, dy, 1.0);
    let mut dx = vec![0.0; layer.w.cols];
    layer.w.matvec_t_add(dy, &mut dx);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{cell_step, layer_forward_cached, CellState};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    // Loss = sum of final h (c for GRU); checks d(loss)/d(params)
    // against central differences for every cell type.
    fn loss_for(weights: &CellWeights, c0: &[f64], seq: &[Vec<f64>]) -> f64 {
        let initial = CellState::with_c(c0);
        let (outputs, _) = layer_forward_cached(weights, &initial, seq).unwrap();
        outputs.last().unwrap().iter().sum()
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        for cell in CellType::ALL {
            let mut rng = ChaCha12Rng::seed_from_u64(42);
            let n_x = 3;
            let n_h = 4;
            let steps = 5;
            let weights = CellWeights::random(cell, n_x, n_h, &mut rng);
            let c0: Vec<f64> = (0..n_h).map(|_| rng.gen_range(-0.1..0.1)).collect();
            let seq: Vec<Vec<f64>> = (0..steps)
                .map(|_| (0..n_x).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();

            let initial = CellState::with_c(&c0);
            let (outputs, caches) = layer_forward_cached(&weights, &initial, &seq).unwrap();
            let mut d_out = vec![vec![0.0; n_h]; steps];
            d_out[steps - 1] = vec![1.0; n_h];
            let _ = outputs;
            let (grads, _) = layer_backward(&weights, &caches, &d_out);

            let mut flat_analytic = Vec::new();
            grads.flatten_into(&mut flat_analytic);

            let mut base = Vec::new();
            weights.flatten_into(&mut base);
            let eps = 1e-5;
            for (idx, _) in base.iter().enumerate() {
                let mut wp = weights.clone();
                let mut bumped = base.clone();
                bumped[idx] += eps;
                let mut pos = 0;
                wp.unflatten_from(&bumped, &mut pos);
                let lp = loss_for(&wp, &c0, &seq);
                let mut wm = weights.clone();
                bumped[idx] -= 2.0 * eps;
                let mut pos = 0;
                wm.unflatten_from(&bumped, &mut pos);
                let lm = loss_for(&wm, &c0, &seq);
                let numeric = (lp - lm) / (2.0 * eps);
                let analytic = flat_analytic[idx];
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    ((numeric - analytic) / denom).abs() < 1e-4,
                    "{cell:?} param {idx}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        for cell in CellType::ALL {
            let mut rng = ChaCha12Rng::seed_from_u64(5);
            let weights = CellWeights::random(cell, 2, 3, &mut rng);
            let c0 = vec![0.03, -0.02, 0.05];
            let seq: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let initial = CellState::with_c(&c0);
            let (_, caches) = layer_forward_cached(&weights, &initial, &seq).unwrap();
            let mut d_out = vec![vec![0.0; 3]; 4];
            d_out[3] = vec![1.0; 3];
            let (_, dx) = layer_backward(&weights, &caches, &d_out);

            let eps = 1e-6;
            for t in 0..4 {
                for k in 0..2 {
                    let mut sp = seq.clone();
                    sp[t][k] += eps;
                    let lp = loss_for(&weights, &c0, &sp);
                    sp[t][k] -= 2.0 * eps;
                    let lm = loss_for(&weights, &c0, &sp);
                    let numeric = (lp - lm) / (2.0 * eps);
                    let denom = numeric.abs().max(dx[t][k].abs()).max(1e-6);
                    assert!(
                        ((numeric - dx[t][k]) / denom).abs() < 1e-4,
                        "{cell:?} dx[{t}][{k}]"
                    );
                }
            }
        }
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let layer = DenseLayer::random(3, 5, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy = vec![0.2, -0.7, 0.5];
        let mut grads = DenseGrads::zeros_like(&layer);
        let dx = dense_backward(&layer, &x, &dy, &mut grads);

        let loss = |l: &DenseLayer, x: &[f64]| -> f64 {
            l.forward(x).unwrap().iter().zip(&dy).map(|(y, d)| y * d).sum()
        };
        let eps = 1e-6;
        for r in 0..3 {
            for c in 0..5 {
                let mut lp = layer.clone();
                lp.w.set(r, c, layer.w.get(r, c) + eps);
                let mut lm = layer.clone();
                lm.w.set(r, c, layer.w.get(r, c) - eps);
                let numeric = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps);
                assert!((numeric - grads.w.get(r, c)).abs() < 1e-7);
            }
        }
        for k in 0..5 {
            let mut xp = x.clone();
            xp[k] += eps;
            let mut xm = x.clone();
            xm[k] -= eps;
            let numeric = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * eps);
            assert!((numeric - dx[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let weights = CellWeights::random(CellType::Lstm, 2, 3, &mut rng);
        let (_, cache) = cell_step(&weights, &CellState::zeros(3), &[0.5, 0.5]).unwrap();
        let (grads, dx) = layer_backward(&weights, &[cache], &[vec![0.0; 3]]);
        let mut flat = Vec::new();
        grads.flatten_into(&mut flat);
        assert!(flat.iter().all(|&v| v == 0.0));
        assert!(dx[0].iter().all(|&v| v == 0.0));
    }
}
