//! End-to-end pipeline driven by one config file: ingest, render, sketchify,
//! index, train, retrieve, evaluate.
//!
//! Every stage reads the artifacts of the previous ones from the output
//! directory, so stages can be rerun one at a time. Random choices use
//! per-item streams derived from the master seed, which makes every
//! artifact independent of thread scheduling.
//!
//! Output layout:
//!
//! ```text
//! manifest.json                      ingested objects and per-file errors
//! meshes/<id>.obj                    normalized, reoriented meshes
//! renders/<id>/ring<k>/view<j>.png   gallery renders
//! sketches/<id>/s<i>.png             generated training sketches
//! sketches/manifest.jsonl            one line per training sketch
//! index.bin, index_secondary.bin     gallery indexes
//! checkpoints/fold<k>.ckpt           one model per fold
//! train_log.csv                      epoch,fold,lr,train_loss,val_loss
//! rankings.csv, rankings.json        ranked lists per query
//! leaderboard.csv, metrics.json, pr_curve.csv
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::descriptors::Descriptor;
use crate::embed::{
    load_checkpoint, save_checkpoint, train_kfold, write_train_log, KFoldResult, Model,
    ModelConfig, ObjectFeatures, TrainConfig, TrainingPair,
};
use crate::error::{Error, IoContext, Result};
use crate::eval::{
    evaluate_all, pr_curve, write_leaderboard, write_pr_curve, EvalOptions, GroundTruth,
    MetricsReport,
};
use crate::image::{ImageKind, ViewImage};
use crate::mesh::{apply_rotations, normalize_to_box, parse_obj, write_obj, Axis, Mesh, Rotation};
use crate::render::{orbit_pose, render_rings, render_view, RenderConfig, RenderedView, RingSet};
use crate::retrieval::{
    read_rankings_csv, write_rankings_csv, Channel, EmbeddingScorer, GalleryIndex, RankedList,
    Retriever, Scorer,
};
use crate::seed::{item_rng, item_seed};
use crate::sketch::{
    canny, generate_training_queries, invert, random_edge_removal, AugmentParams, SketchParams,
    TransformLog,
};
use crate::synth::creature_corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerChoice {
    MinL2,
    Top6SumMax,
    Embedding,
}

impl FromStr for ScorerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min_l2" => Ok(Self::MinL2),
            "top6_sum_max" => Ok(Self::Top6SumMax),
            "embedding" => Ok(Self::Embedding),
            other => Err(Error::InvalidArgument(format!(
                "unknown scorer {other:?} (expected min_l2, top6_sum_max or embedding)"
            ))),
        }
    }
}

/// A single scorer, or the configured fusion of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Single(ScorerChoice),
    Fused,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "fused" {
            Ok(Strategy::Fused)
        } else {
            s.parse().map(Strategy::Single)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reorientation {
    pub object_id: String,
    pub axis: Axis,
    pub degrees: f64,
}

impl Default for Reorientation {
    fn default() -> Self {
        Self {
            object_id: String::new(),
            axis: Axis::X,
            degrees: 90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub mesh_dir: PathBuf,
    /// PNG sketches; the file stem is the query id.
    pub queries_dir: Option<PathBuf>,
    /// `query_id,object_id` CSV.
    pub ground_truth: Option<PathBuf>,
    pub reorient: Vec<Reorientation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub d_model: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub dropout: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            d_model: 64,
            hidden: 128,
            embed_dim: 64,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub scorer: ScorerChoice,
    /// Second scorer fused with `scorer`; weight `alpha` goes to `scorer`.
    pub fuse_with: Option<ScorerChoice>,
    pub alpha: f64,
    /// Descriptor of the second index used by `fuse_with`; defaults to the
    /// main descriptor.
    pub secondary_descriptor: Option<Descriptor>,
    pub tta_flip: bool,
    pub run_name: String,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            scorer: ScorerChoice::MinL2,
            fuse_with: None,
            alpha: 0.7,
            secondary_descriptor: None,
            tta_flip: false,
            run_name: "ringview".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub render: RenderConfig,
    pub sketch: SketchParams,
    pub augment: AugmentParams,
    pub descriptor: Descriptor,
    pub model: ModelOptions,
    pub train: TrainConfig,
    pub retrieval: RetrievalConfig,
    pub eval: EvalOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            render: RenderConfig::default(),
            sketch: SketchParams::default(),
            augment: AugmentParams::default(),
            descriptor: Descriptor::Grid,
            model: ModelOptions::default(),
            train: TrainConfig::default(),
            retrieval: RetrievalConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses TOML (or JSON for a `.json` file). Relative paths are taken
    /// relative to the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.data.mesh_dir);
        if let Some(p) = self.data.queries_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.ground_truth.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.sketch.validate().map_err(cfg_err)?;
        self.augment.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        if !(0.0..=1.0).contains(&self.retrieval.alpha) {
            return Err(Error::Config(format!(
                "alpha {} outside [0,1]",
                self.retrieval.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub object_id: String,
    pub file: String,
    pub sha256: String,
    pub vertices: usize,
    pub triangles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestError {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub objects: Vec<ManifestEntry>,
    pub errors: Vec<IngestError>,
}

/// One line of `sketches/manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchRecord {
    /// Relative to the output directory.
    pub query_image_path: String,
    pub object_id: String,
    pub ring: usize,
    pub transform_log: TransformLog,
    pub seed: u64,
}

fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .at(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).at(path)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).at(path)
}

/// Loads a mesh, applies the configured fix-up rotations and normalizes it
/// into the 2x2x2 box.
pub fn prepare_mesh(id: &str, bytes: &[u8], rotations: &[Rotation]) -> Result<Mesh> {
    let mesh = parse_obj(id, bytes)?;
    normalize_to_box(&apply_rotations(&mesh, rotations))
}

/// Renders a single sketch query from an arbitrary viewpoint: Canny edges,
/// random stroke removal, then inverted to dark-on-light.
pub fn held_out_sketch<R: Rng + ?Sized>(
    mesh: &Mesh,
    render: &RenderConfig,
    sketch: &SketchParams,
    elevation_deg: f64,
    azimuth_deg: f64,
    removal: f64,
    rng: &mut R,
) -> Result<ViewImage> {
    let pose = orbit_pose(elevation_deg, azimuth_deg, render.distance);
    let view = render_view(mesh, &pose, render)?;
    let edges = random_edge_removal(&canny(&view, sketch), removal, rng);
    Ok(invert(&edges).with_kind(ImageKind::Sketch))
}

/// Elevation of a gallery ring and an azimuth at least 5 degrees away from
/// every gallery azimuth (views are 30 degrees apart).
pub fn held_out_viewpoint<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let elevation = [-30.0, 0.0, 30.0][rng.random_range(0..3)];
    let azimuth = 30.0 * rng.random_range(0..12) as f64 + rng.random_range(5.0..25.0);
    (elevation, azimuth)
}

pub struct Pipeline {
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self { config }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(PipelineConfig::load(path)?))
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.config.output_dir.join(rel)
    }

    pub fn render_path(&self, object_id: &str, ring: usize, view: usize) -> PathBuf {
        self.config
            .output_dir
            .join("renders")
            .join(object_id)
            .join(format!("ring{ring}"))
            .join(format!("view{view}.png"))
    }

    pub fn index_path(&self) -> PathBuf {
        self.out("index.bin")
    }

    pub fn secondary_index_path(&self) -> PathBuf {
        self.out("index_secondary.bin")
    }

    fn checkpoint_path(&self, fold: usize) -> PathBuf {
        self.out("checkpoints").join(format!("fold{fold}.ckpt"))
    }

    /// Parses every OBJ in the mesh directory. Unreadable files are recorded
    /// in the manifest and skipped.
    pub fn ingest(&self) -> Result<Manifest> {
        let files = sorted_files(&self.config.data.mesh_dir, "obj")?;
        let results: Vec<std::result::Result<(ManifestEntry, Mesh), IngestError>> = files
            .par_iter()
            .map(|path| {
                let id = stem(path);
                let file = path
                    .file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let fail = |e: Error| IngestError {
                    file: file.clone(),
                    error: e.to_string(),
                };
                let bytes = std::fs::read(path).at(path).map_err(fail)?;
                let rotations: Vec<Rotation> = self
                    .config
                    .data
                    .reorient
                    .iter()
                    .filter(|r| r.object_id == id)
                    .map(|r| Rotation {
                        axis: r.axis,
                        degrees: r.degrees,
                    })
                    .collect();
                let mesh = prepare_mesh(&id, &bytes, &rotations).map_err(fail)?;
                Ok((
                    ManifestEntry {
                        object_id: id,
                        file: file.clone(),
                        sha256: hex(&Sha256::digest(&bytes)),
                        vertices: mesh.vertex_count(),
                        triangles: mesh.triangle_count(),
                    },
                    mesh,
                ))
            })
            .collect();
        let mut manifest = Manifest::default();
        for r in results {
            match r {
                Ok((entry, mesh)) => {
                    write_file(
                        &self.out("meshes").join(format!("{}.obj", entry.object_id)),
                        write_obj(&mesh),
                    )?;
                    manifest.objects.push(entry);
                }
                Err(e) => {
                    tracing::warn!(file = %e.file, error = %e.error, "skipping mesh");
                    manifest.errors.push(e);
                }
            }
        }
        write_file(
            &self.out("manifest.json"),
            serde_json::to_vec_pretty(&manifest)?,
        )?;
        Ok(manifest)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.out("manifest.json");
        Ok(serde_json::from_slice(&std::fs::read(&path).at(&path)?)?)
    }

    fn load_mesh(&self, object_id: &str) -> Result<Mesh> {
        let path = self.out("meshes").join(format!("{object_id}.obj"));
        parse_obj(object_id, &std::fs::read(&path).at(&path)?)
    }

    /// Renders the configured view layout of every ingested object.
    pub fn render(&self) -> Result<usize> {
        let manifest = self.manifest()?;
        let counts = manifest
            .objects
            .par_iter()
            .map(|e| {
                let rings = render_rings(&self.load_mesh(&e.object_id)?, &self.config.render)?;
                for views in rings.rings.values() {
                    for v in views {
                        let path =
                            self.render_path(&e.object_id, v.pose.ring_index, v.pose.azimuth_index);
                        write_file(&path, v.image.to_png_bytes()?)?;
                    }
                }
                Ok(rings.view_count())
            })
            .collect::<Result<Vec<usize>>>()?;
        Ok(counts.iter().sum())
    }

    /// Reads an object's renders back from disk.
    pub fn load_rings(&self, object_id: &str) -> Result<RingSet> {
        let mut rings = RingSet {
            object_id: object_id.to_string(),
            rings: Default::default(),
        };
        for pose in self
            .config
            .render
            .layout
            .poses(self.config.render.distance)?
        {
            let path = self.render_path(object_id, pose.ring_index, pose.azimuth_index);
            let image = ViewImage::load(&path, ImageKind::Shaded)?;
            rings
                .rings
                .entry(pose.ring_index)
                .or_default()
                .push(RenderedView { pose, image });
        }
        Ok(rings)
    }

    /// Generates augmented training sketches from the renders.
    pub fn sketchify(&self) -> Result<Vec<SketchRecord>> {
        let manifest = self.manifest()?;
        let per_object = manifest
            .objects
            .par_iter()
            .map(|e| {
                let rings = self.load_rings(&e.object_id)?;
                let seed = item_seed(self.config.seed, &format!("sketchify/{}", e.object_id));
                let mut rng = item_rng(self.config.seed, &format!("sketchify/{}", e.object_id));
                let queries = generate_training_queries(
                    &rings,
                    &self.config.augment,
                    &self.config.sketch,
                    &mut rng,
                )?;
                let mut records = Vec::with_capacity(queries.len());
                for (i, q) in queries.into_iter().enumerate() {
                    let rel = format!("sketches/{}/s{i}.png", e.object_id);
                    write_file(&self.out(&rel), q.image.to_png_bytes()?)?;
                    records.push(SketchRecord {
                        query_image_path: rel,
                        object_id: q.object_id,
                        ring: q.ring,
                        transform_log: q.transform,
                        seed,
                    });
                }
                Ok(records)
            })
            .collect::<Result<Vec<_>>>()?;
        let records: Vec<SketchRecord> = per_object.into_iter().flatten().collect();
        let mut jsonl = String::new();
        for r in &records {
            jsonl.push_str(&serde_json::to_string(r)?);
            jsonl.push('\n');
        }
        write_file(&self.out("sketches/manifest.jsonl"), jsonl)?;
        Ok(records)
    }

    pub fn sketch_records(&self) -> Result<Vec<SketchRecord>> {
        let path = self.out("sketches/manifest.jsonl");
        let text = std::fs::read_to_string(&path).at(&path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }

    fn secondary_descriptor(&self) -> Option<Descriptor> {
        let r = &self.config.retrieval;
        r.fuse_with
            .map(|_| r.secondary_descriptor.unwrap_or(self.config.descriptor))
    }

    /// Builds the gallery index (and the secondary one when fusion uses a
    /// different descriptor).
    pub fn index(&self) -> Result<GalleryIndex> {
        let manifest = self.manifest()?;
        let rings = manifest
            .objects
            .par_iter()
            .map(|e| self.load_rings(&e.object_id))
            .collect::<Result<Vec<_>>>()?;
        let index =
            GalleryIndex::build(&rings, self.config.descriptor, self.config.sketch.clone())?;
        index.save(&self.index_path())?;
        if let Some(d) = self
            .secondary_descriptor()
            .filter(|d| *d != self.config.descriptor)
        {
            GalleryIndex::build(&rings, d, self.config.sketch.clone())?
                .save(&self.secondary_index_path())?;
        }
        Ok(index)
    }

    pub fn load_index(&self) -> Result<GalleryIndex> {
        GalleryIndex::load(&self.index_path())
    }

    /// Object features and (sketch, object) pairs for training. Each object
    /// is its own positive group.
    pub fn training_data(
        &self,
        index: &GalleryIndex,
    ) -> Result<(Vec<ObjectFeatures>, Vec<TrainingPair>, ModelConfig)> {
        let first = index
            .entries
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty gallery index".into()))?;
        let rings = first.groups.len();
        let views = first.groups.first().map_or(0, Vec::len);
        if index
            .entries
            .iter()
            .any(|e| e.groups.len() != rings || e.groups.iter().any(|g| g.len() != views))
        {
            return Err(Error::InvalidArgument(
                "training needs the same ring layout for every object".into(),
            ));
        }
        let objects: Vec<ObjectFeatures> = index
            .entries
            .iter()
            .map(|e| ObjectFeatures {
                object_id: e.object_id.clone(),
                rings: e.groups.clone(),
            })
            .collect();
        let members = self.training_groups(index)?;
        let records = self.sketch_records()?;
        let pairs = records
            .par_iter()
            .map(|r| {
                let object = index
                    .entries
                    .iter()
                    .position(|e| e.object_id == r.object_id)
                    .ok_or_else(|| Error::NotFound(format!("object {} in index", r.object_id)))?;
                let Some((group, targets)) =
                    members.iter().enumerate().find(|(_, m)| m[0] == object)
                else {
                    return Ok(Vec::new());
                };
                let img = ViewImage::load(&self.out(&r.query_image_path), ImageKind::Sketch)?;
                match index.query_features(&img) {
                    Ok(f) => Ok(targets
                        .iter()
                        .map(|&object| TrainingPair {
                            sketch: f.values.clone(),
                            object,
                            group,
                        })
                        .collect()),
                    Err(Error::EmptySketch) => Ok(Vec::new()),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<TrainingPair> = pairs.into_iter().flatten().collect();
        let m = &self.config.model;
        let model = ModelConfig {
            sketch_dim: index.dim(),
            view_dim: index.dim(),
            d_model: m.d_model,
            hidden: m.hidden,
            embed_dim: m.embed_dim,
            dropout: m.dropout,
            rings,
            views_per_ring: views,
        };
        Ok((objects, pairs, model))
    }

    /// Training groups as lists of index positions, representative first.
    /// Without clustering every object is its own group; otherwise objects
    /// are grouped by nearest centroid of their per-ring mean descriptors and
    /// the member with the most vertices represents the group.
    pub fn training_groups(&self, index: &GalleryIndex) -> Result<Vec<Vec<usize>>> {
        let n = index.len();
        let k = self.config.augment.clusters;
        if k == 0 || k >= n {
            return Ok((0..n).map(|i| vec![i]).collect());
        }
        let manifest = self.manifest()?;
        let vertices: Vec<usize> = index
            .entries
            .iter()
            .map(|e| {
                manifest
                    .objects
                    .iter()
                    .find(|o| o.object_id == e.object_id)
                    .map(|o| o.vertices)
                    .ok_or_else(|| Error::NotFound(format!("object {} in manifest", e.object_id)))
            })
            .collect::<Result<_>>()?;
        let points: Vec<Vec<f64>> = index
            .entries
            .iter()
            .map(|e| {
                e.groups
                    .iter()
                    .flat_map(|views| {
                        let dim = views.first().map_or(0, Vec::len);
                        (0..dim).map(move |c| {
                            views.iter().map(|v| v[c]).sum::<f64>() / views.len() as f64
                        })
                    })
                    .collect()
            })
            .collect();
        let labels = nearest_centroid_groups(&points, k);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &g) in labels.iter().enumerate() {
            groups[g].push(i);
        }
        groups.retain(|g| !g.is_empty());
        for g in &mut groups {
            let rep = *g
                .iter()
                .max_by_key(|&&i| (vertices[i], std::cmp::Reverse(i)))
                .expect("non-empty");
            g.retain(|&i| i != rep);
            g.insert(0, rep);
        }
        Ok(groups)
    }

    /// k-fold training; writes one checkpoint per fold and the training log.
    pub fn train(&self) -> Result<KFoldResult> {
        let index = self.load_index()?;
        let (objects, pairs, model_cfg) = self.training_data(&index)?;
        let cfg = TrainConfig {
            seed: item_seed(self.config.seed, "train"),
            ..self.config.train.clone()
        };
        let result = train_kfold(&objects, &pairs, &model_cfg, &cfg)?;
        create_dir(&self.out("checkpoints"))?;
        for (k, m) in result.models.iter().enumerate() {
            save_checkpoint(m, &self.checkpoint_path(k))?;
        }
        let mut log = Vec::new();
        write_train_log(&mut log, &result.reports)?;
        write_file(&self.out("train_log.csv"), log)?;
        Ok(result)
    }

    pub fn load_models(&self) -> Result<Vec<Model>> {
        let mut models = Vec::new();
        for k in 0..self.config.train.folds {
            let path = self.checkpoint_path(k);
            if !path.exists() {
                return Err(Error::NotFound(format!("checkpoint {}", path.display())));
            }
            models.push(load_checkpoint(&path)?);
        }
        Ok(models)
    }

    fn scorer(&self, choice: ScorerChoice, index: &GalleryIndex) -> Result<Scorer> {
        Ok(match choice {
            ScorerChoice::MinL2 => Scorer::MinL2,
            ScorerChoice::Top6SumMax => Scorer::Top6SumMax,
            ScorerChoice::Embedding => {
                Scorer::Embedding(Box::new(EmbeddingScorer::new(self.load_models()?, index)?))
            }
        })
    }

    pub fn default_strategy(&self) -> Strategy {
        if self.config.retrieval.fuse_with.is_some() {
            Strategy::Fused
        } else {
            Strategy::Single(self.config.retrieval.scorer)
        }
    }

    /// Retriever over the on-disk index for the given strategy.
    pub fn retriever(&self, strategy: Strategy) -> Result<Retriever> {
        let r = &self.config.retrieval;
        let index = self.load_index()?;
        let retriever = match strategy {
            Strategy::Single(choice) => {
                let scorer = self.scorer(choice, &index)?;
                Retriever::single(index, scorer)
            }
            Strategy::Fused => {
                let second = r.fuse_with.ok_or_else(|| {
                    Error::Config("fused scoring needs retrieval.fuse_with".into())
                })?;
                let secondary_index = match self.secondary_descriptor() {
                    Some(d) if d != self.config.descriptor => {
                        GalleryIndex::load(&self.secondary_index_path())?
                    }
                    _ => index.clone(),
                };
                let primary = Channel {
                    scorer: self.scorer(r.scorer, &index)?,
                    index,
                };
                let secondary = Channel {
                    scorer: self.scorer(second, &secondary_index)?,
                    index: secondary_index,
                };
                Retriever::fused(primary, secondary, r.alpha)?
            }
        };
        Ok(retriever.with_tta(r.tta_flip))
    }

    /// Ranks every query sketch; writes `rankings.csv` and `rankings.json`.
    pub fn retrieve(&self) -> Result<Vec<RankedList>> {
        let dir = self
            .config
            .data
            .queries_dir
            .as_ref()
            .ok_or_else(|| Error::Config("data.queries_dir is not set".into()))?;
        let retriever = self.retriever(self.default_strategy())?;
        let lists = sorted_files(dir, "png")?
            .par_iter()
            .map(|p| retriever.rank(&stem(p), &ViewImage::load(p, ImageKind::Sketch)?))
            .collect::<Result<Vec<_>>>()?;
        let mut csv = Vec::new();
        write_rankings_csv(&mut csv, &lists)?;
        write_file(&self.out("rankings.csv"), csv)?;
        write_file(
            &self.out("rankings.json"),
            serde_json::to_vec_pretty(&lists)?,
        )?;
        Ok(lists)
    }

    /// Scores `rankings.csv` against the ground truth; writes the
    /// leaderboard, per-query metrics and the precision-recall curve.
    pub fn evaluate(&self) -> Result<MetricsReport> {
        let gt_path = self
            .config
            .data
            .ground_truth
            .as_ref()
            .ok_or_else(|| Error::Config("data.ground_truth is not set".into()))?;
        let gallery = self.manifest()?.objects.len();
        let gt = GroundTruth::from_csv(gt_path, gallery)?;
        let lists = read_rankings_csv(&self.out("rankings.csv"))?;
        let report = evaluate_all(&lists, &gt, &self.config.eval)?;
        let mut board = Vec::new();
        write_leaderboard(
            &mut board,
            &[(self.config.retrieval.run_name.clone(), report.clone())],
        )?;
        write_file(&self.out("leaderboard.csv"), board)?;
        write_file(
            &self.out("metrics.json"),
            serde_json::to_vec_pretty(&report)?,
        )?;
        let mut pr = Vec::new();
        write_pr_curve(&mut pr, &pr_curve(&lists, &gt)?)?;
        write_file(&self.out("pr_curve.csv"), pr)?;
        Ok(report)
    }

    /// All stages in order. Training runs only when a scorer needs it.
    pub fn run_all(&self) -> Result<MetricsReport> {
        self.ingest()?;
        self.render()?;
        self.sketchify()?;
        self.index()?;
        let r = &self.config.retrieval;
        if r.scorer == ScorerChoice::Embedding || r.fuse_with == Some(ScorerChoice::Embedding) {
            self.train()?;
        }
        self.retrieve()?;
        self.evaluate()
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub objects: usize,
    pub queries_per_object: usize,
    pub seed: u64,
    pub edge_removal: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            objects: 20,
            queries_per_object: 1,
            seed: 0,
            edge_removal: 0.2,
        }
    }
}

/// Writes a synthetic dataset: creature meshes, sketch queries drawn from
/// viewpoints between the gallery azimuths, ground truth and a config file
/// pointing at all of it.
pub fn synth_dataset(dir: &Path, spec: &SynthSpec) -> Result<PipelineConfig> {
    if spec.objects == 0 {
        return Err(Error::InvalidArgument(
            "synthetic corpus needs at least one object".into(),
        ));
    }
    let meshes = creature_corpus(spec.objects, spec.seed);
    let render = RenderConfig::default();
    let sketch = SketchParams::default();
    let mut gt = GroundTruth::new(meshes.len());
    let queries = meshes
        .par_iter()
        .map(|m| {
            write_file(
                &dir.join("meshes").join(format!("{}.obj", m.id)),
                write_obj(m),
            )?;
            let normalized = normalize_to_box(m)?;
            let mut out = Vec::new();
            for j in 0..spec.queries_per_object {
                let qid = format!("q_{}_{j}", m.id);
                let mut rng = item_rng(spec.seed, &format!("synth-query/{qid}"));
                let (elevation, azimuth) = held_out_viewpoint(&mut rng);
                let img = held_out_sketch(
                    &normalized,
                    &render,
                    &sketch,
                    elevation,
                    azimuth,
                    spec.edge_removal,
                    &mut rng,
                )?;
                write_file(
                    &dir.join("queries").join(format!("{qid}.png")),
                    img.to_png_bytes()?,
                )?;
                out.push((qid, m.id.clone()));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    for (q, o) in queries.into_iter().flatten() {
        gt.add(&q, &o);
    }
    let mut buf = Vec::new();
    gt.write_csv(&mut buf)?;
    write_file(&dir.join("ground_truth.csv"), buf)?;
    let cfg = PipelineConfig {
        seed: spec.seed,
        output_dir: PathBuf::from("out"),
        data: DataConfig {
            mesh_dir: PathBuf::from("meshes"),
            queries_dir: Some(PathBuf::from("queries")),
            ground_truth: Some(PathBuf::from("ground_truth.csv")),
            reorient: Vec::new(),
        },
        ..Default::default()
    };
    write_file(&dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(cfg)
}


/// Lloyd's k-means with farthest-point seeding from the first point; returns
/// one cluster label per point. Deterministic, ties go to the lower index.
pub fn nearest_centroid_groups(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    let k = k.clamp(1, n.max(1));
    if n == 0 {
        return Vec::new();
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut centroids = vec![points[0].clone()];
    while centroids.len() < k {
        let far = (0..n)
            .map(|i| {
                centroids
                    .iter()
                    .map(|c| dist(&points[i], c))
                    .fold(f64::INFINITY, f64::min)
            })
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, d)| {
                if d > best.1 {
                    (i, d)
                } else {
                    best
                }
            })
            .0;
        centroids.push(points[far].clone());
    }
    let nearest = |p: &[f64], cs: &[Vec<f64>]| {
        (0..cs.len())
            .map(|c| (c, dist(p, &cs[c])))
            .fold(
                (0, f64::INFINITY),
                |best, (c, d)| if d < best.1 { (c, d) } else { best },
            )
            .0
    };
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..100 {
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (d, v) in centroid.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}
