//! Gallery indexes, per-object scoring, score fusion and ranking.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::{cosine_sim, l2_distance, Descriptor, FeatureVector};
use crate::embed::Model;
use crate::error::{Error, IoContext, Result};
use crate::image::{ImageKind, ViewImage};
use crate::render::RingSet;
use crate::sketch::{prepare_sketch, sketchify_view, SketchParams, CROP_SIZE};
use crate::store::{read_u32, FeatureStore, RowLabel};

pub const INDEX_MAGIC: &[u8; 4] = b"RVIX";
pub const INDEX_VERSION: u32 = 1;
pub const TOP_K_PER_SETUP: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub object_id: String,
    /// Ring (or camera setup) numbers, parallel to `groups`.
    pub group_ids: Vec<usize>,
    /// Per group, per view feature values.
    pub groups: Vec<Vec<Vec<f64>>>,
}

impl GalleryEntry {
    pub fn views(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.groups.iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryIndex {
    pub descriptor: Descriptor,
    pub sketch: SketchParams,
    pub entries: Vec<GalleryEntry>,
}

/// Content image of a rendered view, as a gallery sees it: sketchify, then
/// crop and dilate exactly like a query. Views without any edge become an
/// empty content image.
pub fn gallery_view_image(view: &ViewImage, sketch: &SketchParams) -> Result<ViewImage> {
    match prepare_sketch(&sketchify_view(view, sketch), sketch) {
        Err(Error::EmptySketch) => Ok(ViewImage::filled(
            CROP_SIZE,
            CROP_SIZE,
            0,
            ImageKind::Sketch,
        )),
        other => other,
    }
}

/// Descriptor values rounded through `f32`, the precision the index file
/// keeps, so that a freshly built index equals a reloaded one.
fn stored_values(fv: FeatureVector) -> Vec<f64> {
    fv.values.into_iter().map(|v| v as f32 as f64).collect()
}

pub fn index_entry(
    rings: &RingSet,
    descriptor: &Descriptor,
    sketch: &SketchParams,
) -> Result<GalleryEntry> {
    let mut group_ids = Vec::new();
    let mut groups = Vec::new();
    for (&ring, views) in &rings.rings {
        let feats = views
            .iter()
            .map(|v| {
                Ok(stored_values(
                    descriptor.extract(&gallery_view_image(&v.image, sketch)?)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        group_ids.push(ring);
        groups.push(feats);
    }
    Ok(GalleryEntry {
        object_id: rings.object_id.clone(),
        group_ids,
        groups,
    })
}

impl GalleryIndex {
    /// Indexes every object in parallel; entry order follows `objects`.
    pub fn build(
        objects: &[RingSet],
        descriptor: Descriptor,
        sketch: SketchParams,
    ) -> Result<Self> {
        sketch.validate()?;
        let entries = objects
            .par_iter()
            .map(|r| index_entry(r, &descriptor, &sketch))
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(descriptor, sketch, entries)
    }

    pub fn from_entries(
        descriptor: Descriptor,
        sketch: SketchParams,
        entries: Vec<GalleryEntry>,
    ) -> Result<Self> {
        let mut ids: Vec<&str> = entries.iter().map(|e| e.object_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "duplicate object id {}",
                w[0]
            )));
        }
        let dim = entries
            .iter()
            .flat_map(GalleryEntry::views)
            .map(Vec::len)
            .next();
        for e in &entries {
            if e.groups.len() != e.group_ids.len() {
                return Err(Error::InvalidArgument(format!(
                    "{}: group ids do not match groups",
                    e.object_id
                )));
            }
            if let Some(v) = e.views().find(|v| Some(v.len()) != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim.unwrap_or(0),
                    actual: v.len(),
                });
            }
        }
        Ok(Self {
            descriptor,
            sketch,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries
            .iter()
            .flat_map(GalleryEntry::views)
            .map(Vec::len)
            .next()
            .unwrap_or(0)
    }

    pub fn object_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.object_id.clone()).collect()
    }

    pub fn entry(&self, object_id: &str) -> Option<&GalleryEntry> {
        self.entries.iter().find(|e| e.object_id == object_id)
    }

    /// Query features for a dark-on-light sketch.
    pub fn query_features(&self, sketch: &ViewImage) -> Result<FeatureVector> {
        self.descriptor
            .extract(&prepare_sketch(sketch, &self.sketch)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = IndexMeta {
            descriptor: self.descriptor,
            sketch: self.sketch.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| EntryMeta {
                    object_id: e.object_id.clone(),
                    group_ids: e.group_ids.clone(),
                    group_sizes: e.groups.iter().map(Vec::len).collect(),
                })
                .collect(),
        };
        let mut store = FeatureStore::new(self.descriptor.tag(), self.dim());
        for e in &self.entries {
            for (&g, views) in e.group_ids.iter().zip(&e.groups) {
                for (i, v) in views.iter().enumerate() {
                    store.push(
                        &FeatureVector::new(v.clone(), self.descriptor.tag()),
                        RowLabel::View {
                            object_id: e.object_id.clone(),
                            ring: g,
                            view: i,
                        },
                    )?;
                }
            }
        }
        let meta = serde_json::to_vec(&meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        store.write_matrix(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != INDEX_MAGIC {
            return Err(Error::Format("not an index file (bad magic)".into()));
        }
        let mut input = &bytes[4..];
        let version = read_u32(&mut input)?;
        if version != INDEX_VERSION {
            return Err(Error::Format(format!(
                "unsupported index version {version}"
            )));
        }
        let len = read_u32(&mut input)? as usize;
        if input.len() < len {
            return Err(Error::Format("truncated index header".into()));
        }
        let meta: IndexMeta = serde_json::from_slice(&input[..len])?;
        input = &input[len..];
        let store = FeatureStore::read_matrix(&mut input)?;
        if store.tag != meta.descriptor.tag() {
            return Err(Error::DescriptorMismatch {
                index: meta.descriptor.tag().to_string(),
                query: store.tag.to_string(),
            });
        }
        let expected: usize = meta.entries.iter().flat_map(|e| &e.group_sizes).sum();
        if store.rows.len() != expected {
            return Err(Error::Format(format!(
                "index holds {} feature rows, header describes {expected}",
                store.rows.len()
            )));
        }
        let mut rows = store.rows.into_iter();
        let entries = meta
            .entries
            .into_iter()
            .map(|m| GalleryEntry {
                object_id: m.object_id,
                group_ids: m.group_ids,
                groups: m
                    .group_sizes
                    .iter()
                    .map(|&n| {
                        rows.by_ref()
                            .take(n)
                            .map(|r| r.into_iter().map(f64::from).collect())
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        Self::from_entries(meta.descriptor, meta.sketch, entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).at(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct EntryMeta {
    object_id: String,
    group_ids: Vec<usize>,
    group_sizes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct IndexMeta {
    descriptor: Descriptor,
    sketch: SketchParams,
    entries: Vec<EntryMeta>,
}

/// Smallest L2 distance between the query and any view.
pub fn score_min_l2<'a>(
    query: &[f64],
    views: impl IntoIterator<Item = &'a Vec<f64>>,
) -> Result<f64> {
    let mut best: Option<f64> = None;
    for v in views {
        let d = l2_distance(query, v)?;
        best = Some(best.map_or(d, |b: f64| b.min(d)));
    }
    best.ok_or_else(|| Error::InvalidArgument("object has no views".into()))
}

/// Cosine similarity that treats a zero vector (a view with no edges) as
/// unrelated to everything.
fn cosine_or_zero(u: &[f64], v: &[f64]) -> Result<f64> {
    match cosine_sim(u, v) {
        Err(Error::ZeroVector) => Ok(0.0),
        other => other,
    }
}

/// Per group: sum of the six highest cosine similarities (all of them if the
/// group is smaller). Result: best group.
pub fn score_top6_sum_max(query: &[f64], groups: &[Vec<Vec<f64>>]) -> Result<f64> {
    if groups.is_empty() || groups.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument(
            "top-6 scoring needs non-empty view groups".into(),
        ));
    }
    let mut best = f64::NEG_INFINITY;
    for g in groups {
        let mut sims = g
            .iter()
            .map(|v| cosine_or_zero(query, v))
            .collect::<Result<Vec<f64>>>()?;
        sims.sort_by(|a, b| b.total_cmp(a));
        best = best.max(sims.iter().take(TOP_K_PER_SETUP).sum());
    }
    Ok(best)
}

/// `alpha * a + (1 - alpha) * b`.
pub fn fuse_scores(a: f64, b: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [0,1]"
        )));
    }
    Ok(alpha * a + (1.0 - alpha) * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOrder {
    /// Smaller is better (distances).
    Ascending,
    /// Larger is better (similarities).
    Descending,
}

/// One score per gallery entry, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub order: ScoreOrder,
    pub values: Vec<f64>,
}

impl Scores {
    fn better(&self, a: f64, b: f64) -> f64 {
        match self.order {
            ScoreOrder::Ascending => a.min(b),
            ScoreOrder::Descending => a.max(b),
        }
    }

    /// Min-max scaled to [0,1] with 1 the best; a constant list maps to 1.
    pub fn normalized_similarity(&self) -> Vec<f64> {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        self.values
            .iter()
            .map(|&v| {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
                match self.order {
                    ScoreOrder::Ascending => 1.0 - t,
                    ScoreOrder::Descending => t,
                }
            })
            .collect()
    }
}

/// Fuses two score lists over the same gallery after per-query min-max
/// normalization of each.
pub fn fuse(a: &Scores, b: &Scores, alpha: f64) -> Result<Scores> {
    if a.values.len() != b.values.len() {
        return Err(Error::DimensionMismatch {
            expected: a.values.len(),
            actual: b.values.len(),
        });
    }
    let values = a
        .normalized_similarity()
        .into_iter()
        .zip(b.normalized_similarity())
        .map(|(x, y)| fuse_scores(x, y, alpha))
        .collect::<Result<_>>()?;
    Ok(Scores {
        order: ScoreOrder::Descending,
        values,
    })
}

/// Max-voting ensemble of trained models with object embeddings cached.
#[derive(Debug, Clone)]
pub struct EmbeddingScorer {
    pub models: Vec<Model>,
    /// Per model, per gallery entry.
    object_embeddings: Vec<Vec<Vec<f64>>>,
}

impl EmbeddingScorer {
    pub fn new(models: Vec<Model>, index: &GalleryIndex) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidArgument("empty model ensemble".into()));
        }
        let object_embeddings = models
            .iter()
            .map(|m| {
                index
                    .entries
                    .par_iter()
                    .map(|e| m.embed_object(&e.groups))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            models,
            object_embeddings,
        })
    }

    fn scores(&self, query: &[f64]) -> Result<Vec<f64>> {
        let n = self.object_embeddings[0].len();
        let mut best = vec![f64::NEG_INFINITY; n];
        for (m, objects) in self.models.iter().zip(&self.object_embeddings) {
            let q = m.embed_sketch(query)?;
            for (b, o) in best.iter_mut().zip(objects) {
                *b = b.max(cosine_or_zero(o, &q)?);
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone)]
pub enum Scorer {
    MinL2,
    Top6SumMax,
    Embedding(Box<EmbeddingScorer>),
}

impl Scorer {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::MinL2 => "min_l2",
            Scorer::Top6SumMax => "top6_sum_max",
            Scorer::Embedding(_) => "embedding",
        }
    }

    pub fn order(&self) -> ScoreOrder {
        match self {
            Scorer::MinL2 => ScoreOrder::Ascending,
            _ => ScoreOrder::Descending,
        }
    }
}

/// Scores every gallery object against pre-extracted query features.
pub fn score_features(
    index: &GalleryIndex,
    query: &FeatureVector,
    scorer: &Scorer,
) -> Result<Scores> {
    if query.tag != index.descriptor.tag() {
        return Err(Error::DescriptorMismatch {
            index: index.descriptor.tag().to_string(),
            query: query.tag.to_string(),
        });
    }
    let q = &query.values;
    let values = match scorer {
        Scorer::MinL2 => index
            .entries
            .iter()
            .map(|e| score_min_l2(q, e.views()))
            .collect::<Result<Vec<_>>>()?,
        Scorer::Top6SumMax => index
            .entries
            .iter()
            .map(|e| score_top6_sum_max(q, &e.groups))
            .collect::<Result<Vec<_>>>()?,
        Scorer::Embedding(s) => s.scores(q)?,
    };
    Ok(Scores {
        order: scorer.order(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub object_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub order: ScoreOrder,
    pub ranking: Vec<RankedItem>,
}

impl RankedList {
    pub fn ids(&self) -> Vec<&str> {
        self.ranking.iter().map(|r| r.object_id.as_str()).collect()
    }
}

/// Sorts best first; equal scores fall back to object id order.
pub fn rank_scores(query_id: &str, ids: &[String], scores: &Scores) -> RankedList {
    let mut ranking: Vec<RankedItem> = ids
        .iter()
        .zip(&scores.values)
        .map(|(id, &score)| RankedItem {
            object_id: id.clone(),
            score,
        })
        .collect();
    ranking.sort_by(|a, b| {
        let by_score = match scores.order {
            ScoreOrder::Ascending => a.score.total_cmp(&b.score),
            ScoreOrder::Descending => b.score.total_cmp(&a.score),
        };
        match by_score {
            Ordering::Equal => a.object_id.cmp(&b.object_id),
            o => o,
        }
    });
    RankedList {
        query_id: query_id.to_string(),
        order: scores.order,
        ranking,
    }
}

/// One index paired with the scorer applied to it.
#[derive(Debug, Clone)]
pub struct Channel {
    pub index: GalleryIndex,
    pub scorer: Scorer,
}

/// A single channel, or two fused with weight `alpha` on the first.
#[derive(Debug, Clone)]
pub struct Retriever {
    pub primary: Channel,
    pub secondary: Option<Channel>,
    pub alpha: f64,
    pub tta_flip: bool,
}

impl Retriever {
    pub fn single(index: GalleryIndex, scorer: Scorer) -> Self {
        Self {
            primary: Channel { index, scorer },
            secondary: None,
            alpha: 1.0,
            tta_flip: false,
        }
    }

    pub fn fused(primary: Channel, secondary: Channel, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha {alpha} outside [0,1]"
            )));
        }
        if primary.index.object_ids() != secondary.index.object_ids() {
            return Err(Error::InvalidArgument(
                "fused indexes must list the same objects in the same order".into(),
            ));
        }
        Ok(Self {
            primary,
            secondary: Some(secondary),
            alpha,
            tta_flip: false,
        })
    }

    pub fn with_tta(mut self, on: bool) -> Self {
        self.tta_flip = on;
        self
    }

    fn channel_scores(c: &Channel, sketch: &ViewImage) -> Result<Scores> {
        score_features(&c.index, &c.index.query_features(sketch)?, &c.scorer)
    }

    fn scores_once(&self, sketch: &ViewImage) -> Result<Scores> {
        let a = Self::channel_scores(&self.primary, sketch)?;
        match &self.secondary {
            None => Ok(a),
            Some(c) => fuse(&a, &Self::channel_scores(c, sketch)?, self.alpha),
        }
    }

    /// Scores a dark-on-light sketch; with TTA the mirrored sketch is scored
    /// too and each object keeps its better score.
    pub fn scores(&self, sketch: &ViewImage) -> Result<Scores> {
        let mut s = self.scores_once(sketch)?;
        if self.tta_flip {
            let f = self.scores_once(&sketch.flip_horizontal())?;
            for (a, &b) in s.values.iter_mut().zip(&f.values) {
                *a = f.better(*a, b);
            }
        }
        Ok(s)
    }

    pub fn rank(&self, query_id: &str, sketch: &ViewImage) -> Result<RankedList> {
        Ok(rank_scores(
            query_id,
            &self.primary.index.object_ids(),
            &self.scores(sketch)?,
        ))
    }
}

/// CSV with columns `query_id,rank,object_id,score`; ranks start at 1.
pub fn write_rankings_csv<W: Write>(out: W, lists: &[RankedList]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query_id", "rank", "object_id", "score"])?;
    for l in lists {
        for (i, r) in l.ranking.iter().enumerate() {
            w.write_record([
                l.query_id.as_str(),
                &(i + 1).to_string(),
                r.object_id.as_str(),
                &format!("{:.9}", r.score),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads rankings back; rows are grouped by query in first-seen order.
pub fn read_rankings_csv(path: &Path) -> Result<Vec<RankedList>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format(format!("{}: {other:?}", path.display())),
    })?;
    let mut lists: Vec<RankedList> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Format(format!(
                "{}: expected 4 columns",
                path.display()
            )));
        }
        let score: f64 = rec[3]
            .parse()
            .map_err(|_| Error::Format(format!("bad score {:?}", &rec[3])))?;
        let item = RankedItem {
            object_id: rec[2].to_string(),
            score,
        };
        match lists.last_mut() {
            Some(l) if l.query_id == rec[0] => l.ranking.push(item),
            _ => lists.push(RankedList {
                query_id: rec[0].to_string(),
                order: ScoreOrder::Descending,
                ranking: vec![item],
            }),
        }
    }
    Ok(lists)
}
