//! Retrieval metrics: NN, P@10, NDCG, mAP, first and second tier, fallout.
//!
//! All metrics use binary relevance and are macro-averaged over queries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::RankedList;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub relevant: BTreeMap<String, BTreeSet<String>>,
    pub gallery_size: usize,
}

impl GroundTruth {
    pub fn new(gallery_size: usize) -> Self {
        Self {
            relevant: BTreeMap::new(),
            gallery_size,
        }
    }

    pub fn add(&mut self, query_id: &str, object_id: &str) {
        self.relevant
            .entry(query_id.to_string())
            .or_default()
            .insert(object_id.to_string());
    }

    /// Reads a `query_id,object_id` CSV with a header row.
    pub fn from_csv(path: &Path, gallery_size: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv_bytes(&bytes, gallery_size)
    }

    pub fn from_csv_bytes(bytes: &[u8], gallery_size: usize) -> Result<Self> {
        let mut gt = Self::new(gallery_size);
        let mut r = csv::Reader::from_reader(bytes);
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Format(
                    "ground truth rows need query_id,object_id".into(),
                ));
            }
            gt.add(&rec[0], &rec[1]);
        }
        Ok(gt)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["query_id", "object_id"])?;
        for (q, objs) in &self.relevant {
            for o in objs {
                w.write_record([q, o])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub precision_k: usize,
    pub fallout_cutoff: usize,
    /// Divide AP by the number of retrieved relevant items once more, as the
    /// formula is sometimes written.
    pub paper_literal_map: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            precision_k: 10,
            fallout_cutoff: 10,
            paper_literal_map: false,
        }
    }
}

/// Relevance flags of a ranking, in rank order.
pub fn relevance(ranking: &RankedList, relevant: &BTreeSet<String>) -> Vec<bool> {
    ranking
        .ranking
        .iter()
        .map(|r| relevant.contains(&r.object_id))
        .collect()
}

fn hits(rel: &[bool], k: usize) -> usize {
    rel.iter().take(k).filter(|&&r| r).count()
}

pub fn nearest_neighbor(rel: &[bool]) -> f64 {
    if rel.first().copied().unwrap_or(false) {
        1.0
    } else {
        0.0
    }
}

/// Relevant items among the first `k`, divided by `k` even when the list is
/// shorter.
pub fn precision_at(rel: &[bool], k: usize) -> f64 {
    hits(rel, k) as f64 / k as f64
}

/// DCG over the whole ranking divided by the DCG of `m` relevant items
/// ranked first.
pub fn ndcg(rel: &[bool], m: usize) -> f64 {
    let dcg: f64 = rel
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..m).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

/// Sum of precision at each relevant hit times the recall step `1/m`.
pub fn average_precision(rel: &[bool], m: usize, paper_literal: bool) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mut found = 0usize;
    let mut ap = 0.0;
    for (i, &r) in rel.iter().enumerate() {
        if r {
            found += 1;
            ap += found as f64 / (i + 1) as f64 / m as f64;
        }
    }
    if paper_literal && found > 0 {
        ap / found as f64
    } else {
        ap
    }
}

pub fn first_tier(rel: &[bool], m: usize) -> f64 {
    if m == 0 {
        0.0
    } else {
        hits(rel, m) as f64 / m as f64
    }
}

pub fn second_tier(rel: &[bool], m: usize) -> f64 {
    if m == 0 {
        0.0
    } else {
        hits(rel, 2 * m) as f64 / m as f64
    }
}

/// Non-relevant items in the first `cutoff` over all non-relevant items.
pub fn fallout(rel: &[bool], m: usize, gallery_size: usize, cutoff: usize) -> f64 {
    let non_relevant = gallery_size.saturating_sub(m);
    if non_relevant == 0 {
        return 0.0;
    }
    let k = cutoff.min(rel.len());
    (k - hits(rel, k)) as f64 / non_relevant as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub nn: f64,
    pub p_at_10: f64,
    pub ndcg: f64,
    pub ap: f64,
    pub ft: f64,
    pub st: f64,
    pub fr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nn: f64,
    pub p_at_10: f64,
    pub ndcg: f64,
    pub map: f64,
    pub ft: f64,
    pub st: f64,
    pub fr: f64,
    pub per_query: Vec<QueryMetrics>,
}

impl MetricsReport {
    pub fn values(&self) -> [f64; 7] {
        [
            self.nn,
            self.p_at_10,
            self.ndcg,
            self.map,
            self.ft,
            self.st,
            self.fr,
        ]
    }
}

pub fn query_metrics(
    ranking: &RankedList,
    relevant: &BTreeSet<String>,
    gallery_size: usize,
    opt: &EvalOptions,
) -> QueryMetrics {
    let rel = relevance(ranking, relevant);
    let m = relevant.len();
    QueryMetrics {
        query_id: ranking.query_id.clone(),
        nn: nearest_neighbor(&rel),
        p_at_10: precision_at(&rel, opt.precision_k),
        ndcg: ndcg(&rel, m),
        ap: average_precision(&rel, m, opt.paper_literal_map),
        ft: first_tier(&rel, m),
        st: second_tier(&rel, m),
        fr: fallout(&rel, m, gallery_size, opt.fallout_cutoff),
    }
}

pub fn evaluate_all(
    rankings: &[RankedList],
    gt: &GroundTruth,
    opt: &EvalOptions,
) -> Result<MetricsReport> {
    if rankings.is_empty() {
        return Err(Error::InvalidArgument("no queries to evaluate".into()));
    }
    if opt.precision_k == 0 {
        return Err(Error::InvalidArgument(
            "precision cutoff must be positive".into(),
        ));
    }
    let mut per_query = Vec::with_capacity(rankings.len());
    for r in rankings {
        let relevant = gt
            .relevant
            .get(&r.query_id)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::NotFound(format!("ground truth for query {}", r.query_id)))?;
        per_query.push(query_metrics(r, relevant, gt.gallery_size, opt));
    }
    let n = per_query.len() as f64;
    let mean = |f: fn(&QueryMetrics) -> f64| per_query.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        nn: mean(|q| q.nn),
        p_at_10: mean(|q| q.p_at_10),
        ndcg: mean(|q| q.ndcg),
        map: mean(|q| q.ap),
        ft: mean(|q| q.ft),
        st: mean(|q| q.st),
        fr: mean(|q| q.fr),
        per_query,
    })
}

pub const LEADERBOARD_HEADER: [&str; 8] =
    ["Team/Run", "NN", "P@10", "NDCG", "mAP", "FT", "ST", "FR"];

/// Leaderboard table, one row per run, six decimals.
pub fn write_leaderboard<W: Write>(out: W, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEADERBOARD_HEADER)?;
    for (name, r) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(r.values().iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// 11-point interpolated precision (recall 0.0, 0.1, ..., 1.0) averaged
/// over queries.
pub fn pr_curve(rankings: &[RankedList], gt: &GroundTruth) -> Result<Vec<(f64, f64)>> {
    if rankings.is_empty() {
        return Err(Error::InvalidArgument("no queries".into()));
    }
    let mut acc = [0.0; 11];
    for r in rankings {
        let relevant = gt
            .relevant
            .get(&r.query_id)
            .ok_or_else(|| Error::NotFound(format!("ground truth for query {}", r.query_id)))?;
        let rel = relevance(r, relevant);
        let m = relevant.len().max(1) as f64;
        let mut points = Vec::new();
        let mut found = 0usize;
        for (i, &x) in rel.iter().enumerate() {
            if x {
                found += 1;
                points.push((found as f64 / m, found as f64 / (i + 1) as f64));
            }
        }
        for (level, a) in acc.iter_mut().enumerate() {
            let recall = level as f64 / 10.0;
            *a += points
                .iter()
                .filter(|(rc, _)| *rc >= recall - 1e-12)
                .map(|&(_, p)| p)
                .fold(0.0, f64::max);
        }
    }
    let n = rankings.len() as f64;
    Ok(acc
        .iter()
        .enumerate()
        .map(|(l, a)| (l as f64 / 10.0, a / n))
        .collect())
}

pub fn write_pr_curve<W: Write>(out: W, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["recall", "precision"])?;
    for (r, p) in points {
        w.write_record([format!("{r:.1}"), format!("{p:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{RankedItem, ScoreOrder};
    use proptest::prelude::*;

    fn b(bits: &[u8]) -> Vec<bool> {
        bits.iter().map(|&x| x == 1).collect()
    }

    fn list(q: &str, ids: &[&str]) -> RankedList {
        RankedList {
            query_id: q.into(),
            order: ScoreOrder::Descending,
            ranking: ids
                .iter()
                .enumerate()
                .map(|(i, id)| RankedItem {
                    object_id: id.to_string(),
                    score: -(i as f64),
                })
                .collect(),
        }
    }

    #[test]
    fn hand_examples() {
        assert_eq!(nearest_neighbor(&b(&[1, 0])), 1.0);
        assert_eq!(nearest_neighbor(&b(&[0, 1])), 0.0);
        assert!((precision_at(&b(&[1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 1]), 10) - 0.3).abs() < 1e-12);
        // 1.5 / (1 + 1/log2 3)
        assert!((ndcg(&b(&[1, 0, 1]), 2) - 0.919_720_789).abs() < 1e-9);
        assert!((average_precision(&b(&[1, 0, 1]), 2, false) - 0.83333).abs() < 1e-5);
        assert!((average_precision(&b(&[0, 0, 0, 1]), 1, false) - 0.25).abs() < 1e-12);
        assert_eq!(first_tier(&b(&[1, 0, 1]), 2), 0.5);
        assert_eq!(second_tier(&b(&[1, 0, 1, 0]), 2), 1.0);
        assert_eq!(second_tier(&b(&[1, 0, 0, 0, 1]), 2), 0.5);
        let mut rel = b(&[1, 1, 0, 1, 0, 0, 0, 0, 0, 0]);
        rel.extend(vec![false; 9]);
        rel.push(true);
        assert!((fallout(&rel, 4, 20, 10) - 7.0 / 16.0).abs() < 1e-12);
        assert_eq!(fallout(&b(&[1, 1]), 2, 20, 2), 0.0);
        assert!((fallout(&vec![false; 717], 10, 717, 10) - 10.0 / 707.0).abs() < 1e-12);
    }

    #[test]
    fn paper_literal_map_divides_again() {
        assert!((average_precision(&b(&[1, 0, 1]), 2, true) - 0.83333 / 2.0).abs() < 1e-5);
    }

    #[test]
    fn perfect_single_query() {
        let mut gt = GroundTruth::new(30);
        let ids: Vec<String> = (0..30).map(|i| format!("o{i:02}")).collect();
        for id in &ids[..10] {
            gt.add("q", id);
        }
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let r = evaluate_all(&[list("q", &refs)], &gt, &EvalOptions::default()).unwrap();
        for (v, e) in r.values().iter().zip([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let gt = GroundTruth::new(3);
        assert!(evaluate_all(&[], &gt, &EvalOptions::default()).is_err());
        assert!(evaluate_all(&[list("q", &["a"])], &gt, &EvalOptions::default()).is_err());
    }

    #[test]
    fn csv_round_trip_and_leaderboard() {
        let mut gt = GroundTruth::new(4);
        gt.add("q1", "a");
        gt.add("q2", "b");
        let mut buf = Vec::new();
        gt.write_csv(&mut buf).unwrap();
        assert_eq!(GroundTruth::from_csv_bytes(&buf, 4).unwrap(), gt);
        let r = evaluate_all(
            &[list("q1", &["a", "b"]), list("q2", &["a", "b"])],
            &gt,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.nn, 0.5);
        let mut out = Vec::new();
        write_leaderboard(&mut out, &[("run".into(), r)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("Team/Run,NN,P@10,NDCG,mAP,FT,ST,FR\nrun,0.500000,"));
    }

    #[test]
    fn pr_curve_of_perfect_ranking_is_flat() {
        let mut gt = GroundTruth::new(3);
        gt.add("q", "a");
        let pts = pr_curve(&[list("q", &["a", "b", "c"])], &gt).unwrap();
        assert_eq!(pts.len(), 11);
        assert!(pts.iter().all(|&(_, p)| p == 1.0));
    }

    proptest! {
        #[test]
        fn bounded_and_ordered(bits in prop::collection::vec(any::<bool>(), 1..40)) {
            let m = bits.iter().filter(|&&x| x).count();
            prop_assume!(m > 0);
            let vals = [
                nearest_neighbor(&bits), precision_at(&bits, 10), ndcg(&bits, m),
                average_precision(&bits, m, false), first_tier(&bits, m), second_tier(&bits, m),
                fallout(&bits, m, bits.len(), 10),
            ];
            for v in vals {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
            prop_assert!(second_tier(&bits, m) >= first_tier(&bits, m));
            let sorted = bits.iter().take_while(|&&x| x).count() == m;
            prop_assert_eq!((ndcg(&bits, m) - 1.0).abs() < 1e-12, sorted);
        }

        #[test]
        fn promoting_a_hit_never_hurts(mut bits in prop::collection::vec(any::<bool>(), 2..40), at in 0usize..39) {
            let at = at % (bits.len() - 1);
            bits[at] = false;
            bits[at + 1] = true;
            let m = bits.iter().filter(|&&x| x).count();
            let mut better = bits.clone();
            better.swap(at, at + 1);
            prop_assert!(nearest_neighbor(&better) >= nearest_neighbor(&bits));
            prop_assert!(precision_at(&better, 10) >= precision_at(&bits, 10));
            prop_assert!(ndcg(&better, m) >= ndcg(&bits, m) - 1e-12);
            prop_assert!(average_precision(&better, m, false) >= average_precision(&bits, m, false) - 1e-12);
            prop_assert!(fallout(&better, m, bits.len(), 10) <= fallout(&bits, m, bits.len(), 10));
        }
    }
}
