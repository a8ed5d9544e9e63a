//! k-fold contrastive training and max-voting ensembles.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::Mode;
use super::loss::{nt_xent, positives_from_groups, LossOutput};
use super::model::{Model, ModelConfig};
use super::optim::{step_lr, AdamW, AdamWParams};
use super::{ObjectFeatures, TrainingPair};
use crate::error::{Error, Result};
use crate::seed::item_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_size: usize,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub folds: usize,
    pub seed: u64,
    pub temperature: f64,
    pub include_positive_in_denominator: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_size: 20,
            gamma: 0.5,
            epochs: 40,
            batch_size: 16,
            folds: 5,
            seed: 0,
            temperature: 0.1,
            include_positive_in_denominator: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr > 0.0) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0,1]", self.gamma));
        }
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.step_size == 0 {
            return bad("step_size must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2".into());
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWParams {
        AdamWParams {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub fold: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    /// Pair indices held out for validation.
    pub validation: Vec<usize>,
    /// Row 0 is the untrained model, evaluated without dropout.
    pub history: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct KFoldResult {
    pub models: Vec<Model>,
    pub reports: Vec<FoldReport>,
}

/// Fold of every pair: a seeded shuffle dealt round-robin.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

fn batches(indices: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = indices.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().expect("len > 1");
        out.last_mut().expect("len > 0").extend(tail);
    }
    out
}

fn has_negatives(data: &[TrainingPair], batch: &[usize]) -> bool {
    batch.iter().any(|&i| data[i].group != data[batch[0]].group)
}

/// Loss of one batch and, when `grad` is set, its gradient with respect to
/// every parameter. The batch holds `n` objects followed by `n` sketches.
pub fn batch_gradient(
    model: &Model,
    objects: &[ObjectFeatures],
    pairs: &[&TrainingPair],
    cfg: &TrainConfig,
    mode: &mut Mode<'_>,
    grad: bool,
) -> Result<(f64, Option<Model>)> {
    let n = pairs.len();
    let mut z = Vec::with_capacity(2 * n);
    let mut caches = Vec::with_capacity(n);
    for p in pairs {
        let obj = objects.get(p.object).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "pair refers to object {} of {}",
                p.object,
                objects.len()
            ))
        })?;
        let (zo, cache) = model.object.forward(&obj.rings, mode)?;
        z.push(zo.into_raw_vec_and_offset().0);
        caches.push(cache);
    }
    let sk_dim = model.config.sketch_dim;
    let mut xs = Vec::with_capacity(n * sk_dim);
    for p in pairs {
        if p.sketch.len() != sk_dim {
            return Err(Error::DimensionMismatch {
                expected: sk_dim,
                actual: p.sketch.len(),
            });
        }
        xs.extend_from_slice(&p.sketch);
    }
    let xs = ndarray::Array2::from_shape_vec((n, sk_dim), xs).expect("checked shape");
    let (zs, sk_cache) = model.sketch_head.forward(&xs, mode);
    z.extend(zs.rows().into_iter().map(|r| r.to_vec()));

    let groups: Vec<usize> = pairs
        .iter()
        .map(|p| p.group)
        .chain(pairs.iter().map(|p| p.group))
        .collect();
    let LossOutput { loss, grads, .. } = nt_xent(
        &z,
        &positives_from_groups(&groups),
        cfg.temperature,
        cfg.include_positive_in_denominator,
    )?;
    if !grad {
        return Ok((loss, None));
    }
    let mut g = model.zeros_like();
    for (cache, dz) in caches.iter().zip(&grads[..n]) {
        let dz = ndarray::Array2::from_shape_vec((1, dz.len()), dz.clone()).expect("row vector");
        model.object.backward(cache, &dz, &mut g.object);
    }
    let p_dim = model.config.embed_dim;
    let dzs =
        ndarray::Array2::from_shape_vec((n, p_dim), grads[n..].concat()).expect("embedding rows");
    model
        .sketch_head
        .backward(&sk_cache, &dzs, &mut g.sketch_head);
    Ok((loss, Some(g)))
}

fn mean_loss(
    model: &Model,
    objects: &[ObjectFeatures],
    pairs: &[TrainingPair],
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for b in batches(indices, cfg.batch_size) {
        if !has_negatives(pairs, &b) {
            continue;
        }
        let refs: Vec<&TrainingPair> = b.iter().map(|&i| &pairs[i]).collect();
        total += batch_gradient(model, objects, &refs, cfg, &mut Mode::Eval, false)?.0;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "no batch with both positives and negatives".into(),
        ));
    }
    Ok(total / count as f64)
}

fn train_fold(
    objects: &[ObjectFeatures],
    pairs: &[TrainingPair],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    folds: &[usize],
    fold: usize,
) -> Result<(Model, FoldReport)> {
    let train: Vec<usize> = (0..pairs.len()).filter(|&i| folds[i] != fold).collect();
    let validation: Vec<usize> = (0..pairs.len()).filter(|&i| folds[i] == fold).collect();
    let mut model = Model::new(
        model_cfg.clone(),
        item_seed(cfg.seed, &format!("fold{fold}/init")),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed(cfg.seed, &format!("fold{fold}/train")));
    let mut opt = AdamW::new(cfg.adamw(), &model);
    let mut history = vec![EpochLog {
        epoch: 0,
        fold,
        lr: cfg.lr,
        train_loss: mean_loss(&model, objects, pairs, &train, cfg)?,
        val_loss: mean_loss(&model, objects, pairs, &validation, cfg)?,
    }];
    let mut order = train.clone();
    for epoch in 1..=cfg.epochs {
        let lr = step_lr(cfg.lr, cfg.step_size, cfg.gamma, epoch - 1);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for b in batches(&order, cfg.batch_size) {
            if !has_negatives(pairs, &b) {
                continue;
            }
            let refs: Vec<&TrainingPair> = b.iter().map(|&i| &pairs[i]).collect();
            let (loss, g) = batch_gradient(
                &model,
                objects,
                &refs,
                cfg,
                &mut Mode::Train(&mut rng),
                true,
            )?;
            opt.step(&mut model, &g.expect("gradient requested"), lr);
            total += loss;
            count += 1;
        }
        history.push(EpochLog {
            epoch,
            fold,
            lr,
            train_loss: if count > 0 {
                total / count as f64
            } else {
                f64::NAN
            },
            val_loss: mean_loss(&model, objects, pairs, &validation, cfg)?,
        });
    }
    model.round_to_f32();
    Ok((
        model,
        FoldReport {
            fold,
            validation,
            history,
        },
    ))
}

/// Trains one model per fold on the other `k - 1` folds. Folds run in
/// parallel; each has its own seeded streams, so the result depends only on
/// the inputs and `cfg.seed`.
pub fn train_kfold(
    objects: &[ObjectFeatures],
    pairs: &[TrainingPair],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<KFoldResult> {
    cfg.validate()?;
    model_cfg.validate()?;
    let k = cfg.folds;
    let mut groups: Vec<usize> = pairs.iter().map(|p| p.group).collect();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} positive groups for {k} folds",
            groups.len()
        )));
    }
    if pairs.len() < 2 * k {
        return Err(Error::InvalidArgument(format!(
            "{} pairs is too few for {k} folds (need {})",
            pairs.len(),
            2 * k
        )));
    }
    let folds = assign_folds(pairs.len(), k, item_seed(cfg.seed, "folds"));
    let trained: Vec<(Model, FoldReport)> = (0..k)
        .into_par_iter()
        .map(|f| train_fold(objects, pairs, model_cfg, cfg, &folds, f))
        .collect::<Result<_>>()?;
    let (models, reports) = trained.into_iter().unzip();
    Ok(KFoldResult { models, reports })
}

/// CSV with columns `epoch,fold,lr,train_loss,val_loss`.
pub fn write_train_log<W: Write>(out: W, reports: &[FoldReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for row in &r.history {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Largest cosine similarity any model assigns to the pair.
pub fn ensemble_similarity(
    models: &[Model],
    object: &[Vec<Vec<f64>>],
    sketch: &[f64],
) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("empty model ensemble".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for m in models {
        best = best.max(m.similarity(object, sketch)?);
    }
    Ok(best)
}
