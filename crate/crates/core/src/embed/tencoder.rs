//! Transformer encoder block used to weigh views within a ring and rings
//! within an object.
//!
//! Pre-norm residual layout, single-head scaled dot-product attention, no
//! positional encoding (the block is permutation-equivariant):
//!
//! ```text
//! h = x + softmax(LN1(x)Wq (LN1(x)Wk)^T / sqrt(d)) LN1(x)Wv Wo
//! y = h + W2 relu(W1 LN2(h) + b1) + b2
//! ```

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::layers::{xavier, LayerNorm, LayerNormCache, Linear};
use super::Parameters;

#[derive(Debug, Clone, PartialEq)]
pub struct TEncoder {
    pub ln1: LayerNorm,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

pub struct TEncoderCache {
    ln1: LayerNormCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    pub attention: Array2<f64>,
    heads: Array2<f64>,
    ln2: LayerNormCache,
    b: Array2<f64>,
    f1: Array2<f64>,
    r: Array2<f64>,
}

impl TEncoder {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        Self {
            ln1: LayerNorm::new(d),
            wq: xavier(rng, d, d),
            wk: xavier(rng, d, d),
            wv: xavier(rng, d, d),
            wo: xavier(rng, d, d),
            ln2: LayerNorm::new(d),
            ff1: Linear::new(rng, d, 4 * d),
            ff2: Linear::new(rng, 4 * d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, TEncoderCache) {
        let scale = 1.0 / (self.dim() as f64).sqrt();
        let (a, ln1) = self.ln1.forward(x);
        let q = a.dot(&self.wq);
        let k = a.dot(&self.wk);
        let v = a.dot(&self.wv);
        let mut attention = q.dot(&k.t()) * scale;
        for mut row in attention.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &s| acc.max(s));
            row.mapv_inplace(|s| (s - m).exp());
            let z = row.sum();
            row.mapv_inplace(|e| e / z);
        }
        let heads = attention.dot(&v);
        let h = x + &heads.dot(&self.wo);
        let (b, ln2) = self.ln2.forward(&h);
        let f1 = self.ff1.forward(&b);
        let r = f1.mapv(|v| v.max(0.0));
        let y = &h + &self.ff2.forward(&r);
        (
            y,
            TEncoderCache {
                ln1,
                a,
                q,
                k,
                v,
                attention,
                heads,
                ln2,
                b,
                f1,
                r,
            },
        )
    }

    pub fn backward(&self, c: &TEncoderCache, dy: &Array2<f64>, g: &mut TEncoder) -> Array2<f64> {
        let scale = 1.0 / (self.dim() as f64).sqrt();

        // Feed-forward branch.
        let mut dr = self.ff2.backward(&c.r, dy, &mut g.ff2);
        dr.zip_mut_with(&c.f1, |d, &f| {
            if f <= 0.0 {
                *d = 0.0;
            }
        });
        let db = self.ff1.backward(&c.b, &dr, &mut g.ff1);
        let dh = dy + &self.ln2.backward(&c.ln2, &db, &mut g.ln2);

        // Attention branch.
        g.wo += &c.heads.t().dot(&dh);
        let dheads = dh.dot(&self.wo.t());
        let dattn = dheads.dot(&c.v.t());
        let dv = c.attention.t().dot(&dheads);
        let mut ds = Array2::zeros(dattn.raw_dim());
        for i in 0..ds.nrows() {
            let row_dot: f64 = c.attention.row(i).dot(&dattn.row(i));
            for j in 0..ds.ncols() {
                ds[[i, j]] = c.attention[[i, j]] * (dattn[[i, j]] - row_dot) * scale;
            }
        }
        let dq = ds.dot(&c.k);
        let dk = ds.t().dot(&c.q);
        g.wq += &c.a.t().dot(&dq);
        g.wk += &c.a.t().dot(&dk);
        g.wv += &c.a.t().dot(&dv);
        let da = dq.dot(&self.wq.t()) + dk.dot(&self.wk.t()) + dv.dot(&self.wv.t());
        &dh + &self.ln1.backward(&c.ln1, &da, &mut g.ln1)
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Array2<f64>| Array2::zeros(m.raw_dim());
        Self {
            ln1: self.ln1.zeros_like(),
            wq: z(&self.wq),
            wk: z(&self.wk),
            wv: z(&self.wv),
            wo: z(&self.wo),
            ln2: self.ln2.zeros_like(),
            ff1: self.ff1.zeros_like(),
            ff2: self.ff2.zeros_like(),
        }
    }
}

impl Parameters for TEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        self.ln1.visit(&format!("{prefix}.ln1"), f);
        for (name, m) in [
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
        ] {
            f(
                format!("{prefix}.{name}"),
                m.shape().to_vec(),
                m.as_slice().expect("standard layout"),
            );
        }
        self.ln2.visit(&format!("{prefix}.ln2"), f);
        self.ff1.visit(&format!("{prefix}.ff1"), f);
        self.ff2.visit(&format!("{prefix}.ff2"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.ln1.visit_mut(f);
        for m in [&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo] {
            f(m.as_slice_mut().expect("standard layout"));
        }
        self.ln2.visit_mut(f);
        self.ff1.visit_mut(f);
        self.ff2.visit_mut(f);
    }
}

/// Row mean of a `(n, d)` matrix as a `(1, d)` matrix.
pub fn mean_rows(x: &Array2<f64>) -> Array2<f64> {
    let m: Array1<f64> = x.mean_axis(Axis(0)).expect("non-empty sequence");
    m.insert_axis(Axis(0))
}

/// Gradient of [`mean_rows`]: spreads `(1, d)` evenly over `n` rows.
pub fn mean_rows_backward(dy: &Array2<f64>, n: usize) -> Array2<f64> {
    let row = dy.row(0).mapv(|v| v / n as f64);
    Array2::from_shape_fn((n, dy.ncols()), |(_, c)| row[c])
}
