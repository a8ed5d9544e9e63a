//! Embedding model against a plain-loop re-implementation, loss and ensemble
//! properties, k-fold bookkeeping.

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringview::embed::{
    ensemble_similarity, nt_xent, positives_from_groups, train_kfold, LayerNorm, Linear, Mlp,
    Model, ModelConfig, Parameters, TEncoder, TrainConfig, LN_EPS,
};
use ringview::synth::{toy_contrastive_set, ToySetSpec};

type Rows = Vec<Vec<f64>>;

fn linear(x: &Rows, l: &Linear) -> Rows {
    x.iter()
        .map(|row| {
            (0..l.w.ncols())
                .map(|o| {
                    l.b[o]
                        + row
                            .iter()
                            .enumerate()
                            .map(|(i, v)| v * l.w[[i, o]])
                            .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

fn relu(x: Rows) -> Rows {
    x.into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect()
}

fn mlp(x: &Rows, m: &Mlp) -> Rows {
    linear(&relu(linear(x, &m.l1)), &m.l2)
}

fn layer_norm(x: &Rows, ln: &LayerNorm) -> Rows {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) / (var + LN_EPS).sqrt() * ln.gain[i] + ln.bias[i])
                .collect()
        })
        .collect()
}

fn matmul(x: &Rows, w: &ndarray::Array2<f64>) -> Rows {
    linear(
        x,
        &Linear {
            w: w.clone(),
            b: ndarray::Array1::zeros(w.ncols()),
        },
    )
}

fn add(a: &Rows, b: &Rows) -> Rows {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

fn encoder(x: &Rows, t: &TEncoder) -> Rows {
    let d = x[0].len() as f64;
    let a = layer_norm(x, &t.ln1);
    let (q, k, v) = (matmul(&a, &t.wq), matmul(&a, &t.wk), matmul(&a, &t.wv));
    let mut heads = Vec::new();
    for qi in &q {
        let logits: Vec<f64> = k
            .iter()
            .map(|kj| qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() / d.sqrt())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut row = vec![0.0; v[0].len()];
        for (j, vj) in v.iter().enumerate() {
            for (c, val) in vj.iter().enumerate() {
                row[c] += e[j] / z * val;
            }
        }
        heads.push(row);
    }
    let h = add(x, &matmul(&heads, &t.wo));
    let b = layer_norm(&h, &t.ln2);
    add(&h, &linear(&relu(linear(&b, &t.ff1)), &t.ff2))
}

fn mean(x: &Rows) -> Rows {
    let n = x.len() as f64;
    vec![(0..x[0].len())
        .map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n)
        .collect()]
}

fn naive_object_embedding(m: &Model, rings: &[Rows]) -> Vec<f64> {
    let o = &m.object;
    let ring_vectors: Rows = rings
        .iter()
        .map(|views| mean(&encoder(&mlp(views, &o.input), &o.ring)).remove(0))
        .collect();
    let mut h = ring_vectors;
    for block in &o.object {
        h = encoder(&h, block);
    }
    mlp(&mean(&h), &o.projection).remove(0)
}

fn small_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        hidden: 12,
        embed_dim: 6,
        rings: 3,
        views_per_ring: 4,
        ..ModelConfig::new(5, 7)
    }
}

fn random_rings(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Vec<Rows> {
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

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn object_embedding_matches_plain_loops() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..5 {
        let model = Model::new(cfg.clone(), seed).unwrap();
        let rings = random_rings(&cfg, &mut rng);
        let fast = model.embed_object(&rings).unwrap();
        let slow = naive_object_embedding(&model, &rings);
        assert_eq!(fast.len(), cfg.embed_dim);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn sketch_head_matches_plain_loops() {
    let cfg = small_config();
    let model = Model::new(cfg.clone(), 4).unwrap();
    let x = random_vec(cfg.sketch_dim, &mut ChaCha8Rng::seed_from_u64(2));
    let fast = model.embed_sketch(&x).unwrap();
    let slow = mlp(&vec![x], &model.sketch_head).remove(0);
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn ensemble_is_the_best_member() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let models: Vec<Model> = (0..5)
        .map(|s| Model::new(cfg.clone(), s).unwrap())
        .collect();
    for _ in 0..10 {
        let rings = random_rings(&cfg, &mut rng);
        let sketch = random_vec(cfg.sketch_dim, &mut rng);
        let each: Vec<f64> = models
            .iter()
            .map(|m| m.similarity(&rings, &sketch).unwrap())
            .collect();
        let ens = ensemble_similarity(&models, &rings, &sketch).unwrap();
        assert_eq!(ens, each.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        assert!(each.iter().all(|&s| ens >= s));
        assert_eq!(
            ensemble_similarity(&models[..1], &rings, &sketch).unwrap(),
            each[0]
        );
    }
}

#[test]
fn improving_one_member_never_lowers_the_ensemble() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pool: Vec<Model> = (0..12)
        .map(|s| Model::new(cfg.clone(), 100 + s).unwrap())
        .collect();
    let rings = random_rings(&cfg, &mut rng);
    let sketch = random_vec(cfg.sketch_dim, &mut rng);
    let score = |m: &Model| m.similarity(&rings, &sketch).unwrap();
    let members: Vec<Model> = pool[..4].to_vec();
    let base = ensemble_similarity(&members, &rings, &sketch).unwrap();
    for i in 0..members.len() {
        for candidate in &pool[4..] {
            if score(candidate) >= score(&members[i]) {
                let mut better = members.clone();
                better[i] = candidate.clone();
                assert!(ensemble_similarity(&better, &rings, &sketch).unwrap() >= base);
            }
        }
    }
}

fn toy(seed: u64) -> ToySetSpec {
    ToySetSpec {
        groups: 10,
        sketches_per_group: 5,
        view_dim: 7,
        sketch_dim: 5,
        rings: 3,
        views_per_ring: 4,
        noise: 0.3,
        seed,
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..Default::default()
    }
}

#[test]
fn five_folds_partition_fifty_pairs() {
    let (objects, pairs) = toy_contrastive_set(&toy(1));
    assert_eq!(pairs.len(), 50);
    let result = train_kfold(&objects, &pairs, &small_config(), &quick_train()).unwrap();
    assert_eq!(result.models.len(), 5);
    let mut seen = BTreeSet::new();
    for r in &result.reports {
        for &i in &r.validation {
            assert!(seen.insert(i), "pair {i} validated twice");
        }
    }
    assert_eq!(seen, (0..50).collect());
}

#[test]
fn same_seed_gives_identical_weights() {
    let (objects, pairs) = toy_contrastive_set(&toy(2));
    let a = train_kfold(&objects, &pairs, &small_config(), &quick_train()).unwrap();
    let b = train_kfold(&objects, &pairs, &small_config(), &quick_train()).unwrap();
    for (x, y) in a.models.iter().zip(&b.models) {
        assert_eq!(x.flat(), y.flat());
    }
    let other = TrainConfig {
        seed: 1,
        ..quick_train()
    };
    let c = train_kfold(&objects, &pairs, &small_config(), &other).unwrap();
    assert_ne!(a.models[0].flat(), c.models[0].flat());
}

proptest! {
    #![proptest_config(ProptestConfig::with_failure_persistence(FileFailurePersistence::Off))]

    #[test]
    fn loss_ignores_embedding_scale(
        seed in 0u64..10_000,
        n in 3usize..8,
        which in 0usize..8,
        scale in 0.01f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<Vec<f64>> = (0..n).map(|_| random_vec(4, &mut rng)).collect();
        let groups: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let pos = positives_from_groups(&groups);
        let mut scaled = z.clone();
        scaled[which % n].iter_mut().for_each(|v| *v *= scale);
        for include in [false, true] {
            let a = nt_xent(&z, &pos, 0.1, include).unwrap().loss;
            let b = nt_xent(&scaled, &pos, 0.1, include).unwrap().loss;
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }
}
