//! Dense layers with hand-written backward passes.
//!
//! Every layer is also its own gradient container: backward passes
//! accumulate into a zero-initialized value of the same type.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::Parameters;

/// Xavier-uniform matrix of shape `(fan_in, fan_out)`.
pub fn xavier<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-a..a))
}

/// `y = x W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize) -> Self {
        Self {
            w: xavier(rng, input, output),
            b: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, g: &mut Linear) -> Array2<f64> {
        g.w += &x.t().dot(dy);
        g.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

impl Parameters for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        f(
            format!("{prefix}.w"),
            self.w.shape().to_vec(),
            self.w.as_slice().expect("standard layout"),
        );
        f(
            format!("{prefix}.b"),
            self.b.shape().to_vec(),
            self.b.as_slice().expect("standard layout"),
        );
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.w.as_slice_mut().expect("standard layout"));
        f(self.b.as_slice_mut().expect("standard layout"));
    }
}

/// Whether dropout is active, and with which random stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn rand::RngCore),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Two-layer perceptron: linear, ReLU, dropout, linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
    pub dropout: f64,
}

pub struct MlpCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    /// Inverted-dropout multipliers, `None` in eval mode.
    mask: Option<Array2<f64>>,
    hidden: Array2<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        input: usize,
        hidden: usize,
        output: usize,
        dropout: f64,
    ) -> Self {
        Self {
            l1: Linear::new(rng, input, hidden),
            l2: Linear::new(rng, hidden, output),
            dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.l1.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.l2.output_dim()
    }

    pub fn forward(&self, x: &Array2<f64>, mode: &mut Mode<'_>) -> (Array2<f64>, MlpCache) {
        let pre = self.l1.forward(x);
        let mut hidden = pre.mapv(|v| v.max(0.0));
        let mask = match mode {
            Mode::Train(rng) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                let m = Array2::from_shape_fn(hidden.raw_dim(), |_| {
                    if keep > 0.0 && rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                hidden *= &m;
                Some(m)
            }
            _ => None,
        };
        let y = self.l2.forward(&hidden);
        (
            y,
            MlpCache {
                x: x.clone(),
                pre,
                mask,
                hidden,
            },
        )
    }

    pub fn backward(&self, cache: &MlpCache, dy: &Array2<f64>, g: &mut Mlp) -> Array2<f64> {
        let mut dh = self.l2.backward(&cache.hidden, dy, &mut g.l2);
        if let Some(mask) = &cache.mask {
            dh *= mask;
        }
        dh.zip_mut_with(&cache.pre, |d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        self.l1.backward(&cache.x, &dh, &mut g.l1)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            l1: self.l1.zeros_like(),
            l2: self.l2.zeros_like(),
            dropout: self.dropout,
        }
    }
}

impl Parameters for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        self.l1.visit(&format!("{prefix}.l1"), f);
        self.l2.visit(&format!("{prefix}.l2"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.l1.visit_mut(f);
        self.l2.visit_mut(f);
    }
}

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: Array1::ones(dim),
            bias: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / d;
            *s = 1.0 / (var + LN_EPS).sqrt();
            let scale = *s;
            row.mapv_inplace(|v| v * scale);
        }
        let y = &xhat * &self.gain + &self.bias;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        cache: &LayerNormCache,
        dy: &Array2<f64>,
        g: &mut LayerNorm,
    ) -> Array2<f64> {
        g.gain += &(dy * &cache.xhat).sum_axis(Axis(0));
        g.bias += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gain;
        let d = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for r in 0..dy.nrows() {
            let dh = dxhat.row(r);
            let xh = cache.xhat.row(r);
            let sum_dh = dh.sum();
            let sum_dh_xh = dh.dot(&xh);
            let s = cache.inv_std[r];
            for c in 0..dy.ncols() {
                dx[[r, c]] = s / d * (d * dh[c] - sum_dh - xh[c] * sum_dh_xh);
            }
        }
        dx
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gain: Array1::zeros(self.gain.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

impl Parameters for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        f(
            format!("{prefix}.gain"),
            self.gain.shape().to_vec(),
            self.gain.as_slice().expect("standard layout"),
        );
        f(
            format!("{prefix}.bias"),
            self.bias.shape().to_vec(),
            self.bias.as_slice().expect("standard layout"),
        );
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.gain.as_slice_mut().expect("standard layout"));
        f(self.bias.as_slice_mut().expect("standard layout"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_mlp_is_relu() {
        let eye = Array2::eye(3);
        let mlp = Mlp {
            l1: Linear {
                w: eye.clone(),
                b: Array1::zeros(3),
            },
            l2: Linear {
                w: eye,
                b: Array1::zeros(3),
            },
            dropout: 0.0,
        };
        let x = array![[1.0, -2.0, 0.5]];
        let (y, _) = mlp.forward(&x, &mut Mode::Eval);
        assert_eq!(y, array![[1.0, 0.0, 0.5]]);
    }

    #[test]
    fn full_dropout_leaves_output_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::new(&mut rng, 4, 6, 3, 1.0);
        mlp.l2.b = array![0.1, -0.2, 0.3];
        let x = array![[1.0, 2.0, 3.0, 4.0]];
        let mut drng = ChaCha8Rng::seed_from_u64(2);
        let (y, _) = mlp.forward(&x, &mut Mode::Train(&mut drng));
        assert_eq!(y, array![[0.1, -0.2, 0.3]]);
    }

    #[test]
    fn eval_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(&mut rng, 5, 7, 4, 0.3);
        let x: Vec<f64> = (0..5).map(|i| i as f64 * 0.3 - 0.6).collect();
        // Plain loops.
        let mut h = [0.0; 7];
        for j in 0..7 {
            h[j] = mlp.l1.b[j];
            for i in 0..5 {
                h[j] += x[i] * mlp.l1.w[[i, j]];
            }
            h[j] = h[j].max(0.0);
        }
        let mut expect = [0.0; 4];
        for k in 0..4 {
            expect[k] = mlp.l2.b[k];
            for j in 0..7 {
                expect[k] += h[j] * mlp.l2.w[[j, k]];
            }
        }
        let (y, _) = mlp.forward(&Array2::from_shape_vec((1, 5), x).unwrap(), &mut Mode::Eval);
        for k in 0..4 {
            assert!((y[[0, k]] - expect[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let ln = LayerNorm::new(4);
        let (y, _) = ln.forward(&array![[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 0.0, 5.0]]);
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-9);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
