//! Layers built on the autodiff tape: affine maps, perceptrons, and a gated
//! recurrent cell. Layers only hold [`ParamId`]s; values live in a
//! [`ParamStore`] so live and target networks share one architecture.

use crate::autodiff::{Graph, Mat, ParamId, ParamStore, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = store.add(format!("{name}.weight"), uniform(rng, in_dim, out_dim, bound));
        let b = store.add(format!("{name}.bias"), uniform(rng, 1, out_dim, bound));
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    /// Off-tape forward pass.
    pub fn eval(&self, store: &ParamStore, x: &Mat) -> Mat {
        x.dot(store.get(self.w)) + store.get(self.b)
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }

    /// Sets weight and bias to zero.
    pub fn zero(&self, store: &mut ParamStore) {
        store.get_mut(self.w).fill(0.0);
        store.get_mut(self.b).fill(0.0);
    }
}

/// Perceptron with ReLU between layers and a linear output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims` lists every width from input to output, e.g. `[in, 128, 128, out]`.
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h);
            if i != last {
                h = g.relu(h);
            }
        }
        h
    }

    /// Off-tape forward pass.
    pub fn eval(&self, store: &ParamStore, x: &Mat) -> Mat {
        let last = self.layers.len() - 1;
        let mut h = self.layers[0].eval(store, x);
        if last > 0 {
            h.mapv_inplace(|v| v.max(0.0));
        }
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            h = layer.eval(store, &h);
            if i != last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }

    pub fn output(&self) -> &Linear {
        self.layers.last().expect("non-empty")
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.output().out_dim
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Linear::params).collect()
    }
}

/// Gated recurrent unit with reset, update and candidate gates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GruCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
    pub in_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let h3 = 3 * hidden_dim;
        Self {
            w_input: store.add(format!("{name}.w_ih"), uniform(rng, in_dim, h3, bound)),
            w_hidden: store.add(format!("{name}.w_hh"), uniform(rng, hidden_dim, h3, bound)),
            b_input: store.add(format!("{name}.b_ih"), uniform(rng, 1, h3, bound)),
            b_hidden: store.add(format!("{name}.b_hh"), uniform(rng, 1, h3, bound)),
            in_dim,
            hidden_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Var {
        let hd = self.hidden_dim;
        let wi = g.param(store, self.w_input);
        let wh = g.param(store, self.w_hidden);
        let bi = g.param(store, self.b_input);
        let bh = g.param(store, self.b_hidden);
        let gi = g.matmul(x, wi);
        let gi = g.add_row(gi, bi);
        let gh = g.matmul(h, wh);
        let gh = g.add_row(gh, bh);

        let gi_rz = g.slice_cols(gi, 0, 2 * hd);
        let gh_rz = g.slice_cols(gh, 0, 2 * hd);
        let rz = g.add(gi_rz, gh_rz);
        let rz = g.sigmoid(rz);
        let reset = g.slice_cols(rz, 0, hd);
        let update = g.slice_cols(rz, hd, 2 * hd);

        let gi_n = g.slice_cols(gi, 2 * hd, 3 * hd);
        let gh_n = g.slice_cols(gh, 2 * hd, 3 * hd);
        let gated = g.mul(reset, gh_n);
        let cand = g.add(gi_n, gated);
        let cand = g.tanh(cand);

        // h' = n + z * (h - n)
        let diff = g.sub(h, cand);
        let keep = g.mul(update, diff);
        g.add(cand, keep)
    }

    /// Off-tape step, same arithmetic as [`GruCell::forward`].
    pub fn eval(&self, store: &ParamStore, x: &Mat, h: &Mat) -> Mat {
        let hd = self.hidden_dim;
        let gi = x.dot(store.get(self.w_input)) + store.get(self.b_input);
        let gh = h.dot(store.get(self.w_hidden)) + store.get(self.b_hidden);
        let sig = crate::autodiff::sigmoid;
        Mat::from_shape_fn(h.raw_dim(), |(r, j)| {
            let reset = sig(gi[[r, j]] + gh[[r, j]]);
            let update = sig(gi[[r, hd + j]] + gh[[r, hd + j]]);
            let cand = (gi[[r, 2 * hd + j]] + reset * gh[[r, 2 * hd + j]]).tanh();
            cand + update * (h[[r, j]] - cand)
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w_input, self.w_hidden, self.b_input, self.b_hidden]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gru_matches_gate_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 2, 3, &mut rng);
        let x = Mat::from_shape_vec((1, 2), vec![0.3, -0.7]).unwrap();
        let h = Mat::from_shape_vec((1, 3), vec![0.1, 0.2, -0.4]).unwrap();

        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let hv = g.constant(h.clone());
        let out = cell.forward(&mut g, &store, xv, hv);

        let gi = x.dot(store.get(cell.w_input)) + store.get(cell.b_input);
        let gh = h.dot(store.get(cell.w_hidden)) + store.get(cell.b_hidden);
        let sig = crate::autodiff::sigmoid;
        for j in 0..3 {
            let r = sig(gi[[0, j]] + gh[[0, j]]);
            let z = sig(gi[[0, 3 + j]] + gh[[0, 3 + j]]);
            let n = (gi[[0, 6 + j]] + r * gh[[0, 6 + j]]).tanh();
            let expected = (1.0 - z) * n + z * h[[0, j]];
            assert!((g.value(out)[[0, j]] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroed_linear_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", 4, 2, &mut rng);
        lin.zero(&mut store);
        let mut g = Graph::new();
        let x = g.constant(Mat::from_elem((3, 4), 5.0));
        let y = lin.forward(&mut g, &store, x);
        assert!(g.value(y).iter().all(|&v| v == 0.0));
    }
}
