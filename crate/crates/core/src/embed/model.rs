//! Sketch head and object encoder.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Mlp, MlpCache, Mode};
use super::tencoder::{mean_rows, mean_rows_backward, TEncoder, TEncoderCache};
use super::Parameters;
use crate::descriptors::cosine_sim;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Sketch feature length.
    pub sketch_dim: usize,
    /// Per-view object feature length.
    pub view_dim: usize,
    pub d_model: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    pub rings: usize,
    pub views_per_ring: usize,
}

impl ModelConfig {
    pub fn new(sketch_dim: usize, view_dim: usize) -> Self {
        Self {
            sketch_dim,
            view_dim,
            d_model: 64,
            hidden: 128,
            embed_dim: 64,
            dropout: 0.1,
            rings: 3,
            views_per_ring: 12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.sketch_dim,
            self.view_dim,
            self.d_model,
            self.hidden,
            self.embed_dim,
            self.rings,
            self.views_per_ring,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(
                "model dimensions must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectEncoder {
    pub input: Mlp,
    pub ring: TEncoder,
    pub object: Vec<TEncoder>,
    pub projection: Mlp,
    pub rings: usize,
    pub views_per_ring: usize,
}

pub struct ObjectCache {
    input: Vec<MlpCache>,
    ring: Vec<TEncoderCache>,
    object: Vec<TEncoderCache>,
    projection: MlpCache,
}

impl ObjectEncoder {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            input: Mlp::new(rng, cfg.view_dim, cfg.hidden, cfg.d_model, 0.0),
            ring: TEncoder::new(rng, cfg.d_model),
            object: vec![
                TEncoder::new(rng, cfg.d_model),
                TEncoder::new(rng, cfg.d_model),
            ],
            projection: Mlp::new(rng, cfg.d_model, cfg.hidden, cfg.embed_dim, cfg.dropout),
            rings: cfg.rings,
            views_per_ring: cfg.views_per_ring,
        }
    }

    fn check(&self, rings: &[Vec<Vec<f64>>]) -> Result<()> {
        if rings.len() != self.rings {
            return Err(Error::InvalidArgument(format!(
                "expected {} rings, got {}",
                self.rings,
                rings.len()
            )));
        }
        for ring in rings {
            if ring.len() != self.views_per_ring {
                return Err(Error::InvalidArgument(format!(
                    "expected {} views per ring, got {}",
                    self.views_per_ring,
                    ring.len()
                )));
            }
            for v in ring {
                if v.len() != self.input.input_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.input.input_dim(),
                        actual: v.len(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn forward(
        &self,
        rings: &[Vec<Vec<f64>>],
        mode: &mut Mode<'_>,
    ) -> Result<(Array2<f64>, ObjectCache)> {
        self.check(rings)?;
        let d = self.ring.dim();
        let mut input = Vec::with_capacity(rings.len());
        let mut ring_caches = Vec::with_capacity(rings.len());
        let mut ring_vectors = Array2::zeros((rings.len(), d));
        for (r, ring) in rings.iter().enumerate() {
            let flat: Vec<f64> = ring.iter().flatten().copied().collect();
            let x = Array2::from_shape_vec((ring.len(), self.input.input_dim()), flat)
                .expect("checked shape");
            let (e, ic) = self.input.forward(&x, mode);
            let (t, rc) = self.ring.forward(&e);
            ring_vectors.row_mut(r).assign(&mean_rows(&t).row(0));
            input.push(ic);
            ring_caches.push(rc);
        }
        let mut h = ring_vectors;
        let mut object = Vec::with_capacity(self.object.len());
        for block in &self.object {
            let (next, c) = block.forward(&h);
            h = next;
            object.push(c);
        }
        let (z, projection) = self.projection.forward(&mean_rows(&h), mode);
        Ok((
            z,
            ObjectCache {
                input,
                ring: ring_caches,
                object,
                projection,
            },
        ))
    }

    /// Backpropagates `dz` (shape `(1, P)`) into `g`.
    pub fn backward(&self, cache: &ObjectCache, dz: &Array2<f64>, g: &mut ObjectEncoder) {
        let dmean = self
            .projection
            .backward(&cache.projection, dz, &mut g.projection);
        let mut dh = mean_rows_backward(&dmean, self.rings);
        for ((block, c), gb) in self
            .object
            .iter()
            .zip(&cache.object)
            .zip(g.object.iter_mut())
            .rev()
        {
            dh = block.backward(c, &dh, gb);
        }
        for r in 0..self.rings {
            let drow = dh.row(r).to_owned().insert_axis(ndarray::Axis(0));
            let dt = mean_rows_backward(&drow, self.views_per_ring);
            let de = self.ring.backward(&cache.ring[r], &dt, &mut g.ring);
            self.input.backward(&cache.input[r], &de, &mut g.input);
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            input: self.input.zeros_like(),
            ring: self.ring.zeros_like(),
            object: self.object.iter().map(TEncoder::zeros_like).collect(),
            projection: self.projection.zeros_like(),
            rings: self.rings,
            views_per_ring: self.views_per_ring,
        }
    }
}

impl Parameters for ObjectEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        self.input.visit(&format!("{prefix}.input"), f);
        self.ring.visit(&format!("{prefix}.ring"), f);
        for (i, b) in self.object.iter().enumerate() {
            b.visit(&format!("{prefix}.object{i}"), f);
        }
        self.projection.visit(&format!("{prefix}.projection"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.input.visit_mut(f);
        self.ring.visit_mut(f);
        for b in &mut self.object {
            b.visit_mut(f);
        }
        self.projection.visit_mut(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub sketch_head: Mlp,
    pub object: ObjectEncoder,
}

impl Model {
    /// Xavier-uniform weights and zero biases drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sketch_head = Mlp::new(
            &mut rng,
            config.sketch_dim,
            config.hidden,
            config.embed_dim,
            config.dropout,
        );
        let object = ObjectEncoder::new(&config, &mut rng);
        Ok(Self {
            config,
            sketch_head,
            object,
        })
    }

    pub fn embed_sketch(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.config.sketch_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.sketch_dim,
                actual: x.len(),
            });
        }
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        Ok(self
            .sketch_head
            .forward(&x, &mut Mode::Eval)
            .0
            .into_raw_vec_and_offset()
            .0)
    }

    pub fn embed_object(&self, rings: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
        Ok(self
            .object
            .forward(rings, &mut Mode::Eval)?
            .0
            .into_raw_vec_and_offset()
            .0)
    }

    pub fn similarity(&self, rings: &[Vec<Vec<f64>>], sketch: &[f64]) -> Result<f64> {
        cosine_sim(&self.embed_object(rings)?, &self.embed_sketch(sketch)?)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            sketch_head: self.sketch_head.zeros_like(),
            object: self.object.zeros_like(),
        }
    }

    /// Rounds every weight to the nearest 32-bit float so that a model
    /// reloaded from a checkpoint is identical to the in-memory one.
    pub fn round_to_f32(&mut self) {
        self.visit_mut(&mut |t| t.iter_mut().for_each(|v| *v = *v as f32 as f64));
    }
}

impl Parameters for Model {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        let p = if prefix.is_empty() {
            String::new()
        } else {
            format!("{prefix}.")
        };
        self.sketch_head.visit(&format!("{p}sketch"), f);
        self.object.visit(&format!("{p}object"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.sketch_head.visit_mut(f);
        self.object.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            sketch_dim: 5,
            view_dim: 6,
            d_model: 4,
            hidden: 7,
            embed_dim: 3,
            dropout: 0.2,
            rings: 3,
            views_per_ring: 4,
        }
    }

    fn random_rings(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Vec<Vec<Vec<f64>>> {
        (0..cfg.rings)
            .map(|_| {
                (0..cfg.views_per_ring)
                    .map(|_| {
                        (0..cfg.view_dim)
                            .map(|_| rng.random_range(-1.0..1.0))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn output_has_embedding_dimension() {
        let cfg = small_config();
        let m = Model::new(cfg.clone(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(
            m.embed_object(&random_rings(&mut rng, &cfg)).unwrap().len(),
            3
        );
        assert_eq!(m.embed_sketch(&[0.1; 5]).unwrap().len(), 3);
    }

    #[test]
    fn shape_mismatches_are_errors() {
        let cfg = small_config();
        let m = Model::new(cfg.clone(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rings = random_rings(&mut rng, &cfg);
        rings.pop();
        assert!(m.embed_object(&rings).is_err());
        let mut rings = random_rings(&mut rng, &cfg);
        rings[1].pop();
        assert!(m.embed_object(&rings).is_err());
        assert!(m.embed_sketch(&[0.0; 4]).is_err());
    }

    #[test]
    fn identical_views_with_identity_blocks() {
        let cfg = small_config();
        let mut m = Model::new(cfg.clone(), 3).unwrap();
        m.object.ring.wo.fill(0.0);
        m.object.ring.ff2.w.fill(0.0);
        for b in &mut m.object.object {
            b.wo.fill(0.0);
            b.ff2.w.fill(0.0);
        }
        let view = vec![0.3, -0.2, 0.5, 0.9, -0.7, 0.1];
        let rings = vec![vec![view.clone(); cfg.views_per_ring]; cfg.rings];
        let z = m.embed_object(&rings).unwrap();
        let x = Array2::from_shape_vec((1, 6), view).unwrap();
        let e = m.object.input.forward(&x, &mut Mode::Eval).0;
        let expect = m.object.projection.forward(&e, &mut Mode::Eval).0;
        for (a, b) in z.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Model::new(small_config(), 9).unwrap();
        let b = Model::new(small_config(), 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Model::new(small_config(), 10).unwrap());
    }
}
