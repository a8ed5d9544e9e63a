//! Learned common embedding space for sketches and objects.
//!
//! A two-layer MLP head maps sketch features to `P` dimensions. Objects go
//! through a per-view MLP, a transformer block per ring, a mean over views,
//! two transformer blocks over the ring vectors, a mean over rings and a
//! projection MLP. Both sides are trained jointly with a multi-positive
//! NT-Xent loss. Everything runs on the CPU with explicit backward passes.

mod checkpoint;
mod layers;
mod loss;
mod model;
mod optim;
mod tencoder;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, model_from_bytes, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use layers::{LayerNorm, Linear, Mlp, Mode, LN_EPS};
pub use loss::{nt_xent, positives_from_groups, LossOutput};
pub use model::{Model, ModelConfig, ObjectEncoder};
pub use optim::{adamw_update, step_lr, AdamW, AdamWParams};
pub use tencoder::{mean_rows, mean_rows_backward, TEncoder};
pub use train::{
    assign_folds, batch_gradient, ensemble_similarity, train_kfold, write_train_log, EpochLog,
    FoldReport, KFoldResult, TrainConfig,
};

/// Per-ring, per-view descriptor vectors of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectFeatures {
    pub object_id: String,
    pub rings: Vec<Vec<Vec<f64>>>,
}

/// One (sketch, object) link. Samples sharing `group` are positives of each
/// other in every batch they meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub sketch: Vec<f64>,
    /// Index into the object list the pairs are trained with.
    pub object: usize,
    pub group: usize,
}

/// Walks the trainable tensors in a fixed order.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, _, v| out.extend_from_slice(v));
        out
    }

    fn tensors(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit("", &mut |_, _, v| out.push(v.to_vec()));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, v| n += v.len());
        n
    }

    /// Overwrites every parameter from a flat vector in visit order.
    fn set_flat(&mut self, values: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |t| {
            t.copy_from_slice(&values[at..at + t.len()]);
            at += t.len();
        });
    }
}
