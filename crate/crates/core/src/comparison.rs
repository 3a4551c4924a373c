//! Scoring a design against liked references: pairwise match scores, median
//! aggregation, the like/dislike decision and top-k retrieval.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ImageTensor;
use crate::error::{Error, Result};
use crate::models::{Embedding, JuxtapositionNetwork};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Median of a non-empty list; an even count averages the two middle values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::contract("median of an empty list"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Like,
    Dislike,
}

impl Decision {
    /// Like only when strictly above the threshold.
    pub fn from_score(score: f64, threshold: f64) -> Self {
        if score > threshold {
            Decision::Like
        } else {
            Decision::Dislike
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchVerdict {
    /// One score per liked reference, in reference order.
    pub scores: Vec<f64>,
    pub aggregate: f64,
    pub decision: Decision,
    pub threshold: f64,
}

impl MatchVerdict {
    pub fn from_scores(scores: Vec<f64>, threshold: f64) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::contract("no liked references to compare against"));
        }
        let aggregate = median(&scores)?;
        Ok(MatchVerdict { decision: Decision::from_score(aggregate, threshold), scores, aggregate, threshold })
    }
}

/// Anything that can turn an image into a comparable key and compare two keys.
/// Encoding once per image keeps scoring against many references cheap.
pub trait MatchModel: Sync {
    type Key: Send + Sync;

    fn encode(&self, img: &ImageTensor) -> Result<Self::Key>;

    fn compare(&self, a: &Self::Key, b: &Self::Key) -> f64;
}

impl MatchModel for JuxtapositionNetwork {
    type Key = Embedding;

    fn encode(&self, img: &ImageTensor) -> Result<Embedding> {
        self.embed(img)
    }

    fn compare(&self, a: &Embedding, b: &Embedding) -> f64 {
        self.score_embeddings(a, b)
    }
}

/// Encoded liked references. Disliked examples are never scored against.
pub struct Support<K> {
    keys: Vec<K>,
}

impl<K: Send + Sync> Support<K> {
    pub fn encode<M: MatchModel<Key = K>>(model: &M, positives: &[&ImageTensor]) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::contract("no liked references to compare against"));
        }
        let keys = positives.par_iter().map(|img| model.encode(img)).collect::<Result<Vec<_>>>()?;
        Ok(Support { keys })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn verdict<M: MatchModel<Key = K>>(&self, model: &M, key: &K, threshold: f64) -> Result<MatchVerdict> {
        let scores = self.keys.iter().map(|r| model.compare(key, r)).collect();
        MatchVerdict::from_scores(scores, threshold)
    }
}

/// `M̂(test) = median over S⁺ of M(test, r)`, classified against `threshold`.
pub fn aggregate_match<M: MatchModel>(
    model: &M,
    test: &ImageTensor,
    positives: &[&ImageTensor],
    threshold: f64,
) -> Result<MatchVerdict> {
    let support = Support::encode(model, positives)?;
    support.verdict(model, &model.encode(test)?, threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    /// Position in the database as given.
    pub index: usize,
    pub score: f64,
}

/// The `k` database items with the highest aggregate score, best first.
/// Ties keep database order.
pub fn rank_database<M: MatchModel>(
    model: &M,
    db: &[&ImageTensor],
    positives: &[&ImageTensor],
    k: usize,
) -> Result<Vec<Ranked>> {
    if db.is_empty() {
        return Err(Error::contract("retrieval database is empty"));
    }
    if k > db.len() {
        return Err(Error::contract(format!("asked for top {k} of a {}-item database", db.len())));
    }
    let support = Support::encode(model, positives)?;
    let scores = db
        .par_iter()
        .map(|img| Ok(support.verdict(model, &model.encode(img)?, DEFAULT_THRESHOLD)?.aggregate))
        .collect::<Result<Vec<f64>>>()?;
    Ok(top_k(&scores, k))
}

/// Stable descending selection over precomputed scores.
pub fn top_k(scores: &[f64], k: usize) -> Vec<Ranked> {
    let mut ranked: Vec<Ranked> = scores.iter().enumerate().map(|(index, &score)| Ranked { index, score }).collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(k);
    ranked
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub path: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

pub fn gallery_entries(ranked: &[Ranked], paths: &[String]) -> Vec<GalleryEntry> {
    ranked
        .iter()
        .enumerate()
        .map(|(i, r)| GalleryEntry { path: paths[r.index].clone(), score: r.score, rank: i + 1 })
        .collect()
}

/// Writes `gallery.json` and `gallery.html` into `dir`.
pub fn write_gallery(dir: &Path, entries: &[GalleryEntry]) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let json = dir.join("gallery.json");
    fs::write(&json, serde_json::to_string_pretty(entries)?)?;

    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Top matches</title>\n\
         <style>body{font-family:sans-serif}figure{display:inline-block;margin:8px;text-align:center}\
         img{width:160px;height:160px;image-rendering:pixelated}</style></head><body>\n<h1>Top matches</h1>\n",
    );
    for e in entries {
        let src = escape(&e.path);
        let _ = writeln!(
            html,
            "<figure><img src=\"{src}\" alt=\"{src}\"><figcaption>#{} &middot; {:.4}</figcaption></figure>",
            e.rank, e.score
        );
    }
    html.push_str("</body></html>\n");
    let page = dir.join("gallery.html");
    fs::write(&page, html)?;
    Ok((json, page))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('"', "&quot;").replace('<', "&lt;").replace('>', "&gt;")
}
