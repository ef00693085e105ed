//! Query/target pair mining, seen/unseen labelling and dataset statistics.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::Corpus;
use crate::layout::{BBox, Page, PageRef, Snippet};
use crate::similarity::{
    consolidate_matches, find_similar_subsequences, Dedup, MatchRegion, DEFAULT_REGION_NMS_IOU, DEFAULT_TH_SIM,
};

/// Snippet extraction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractParams {
    pub min_len: usize,
    pub max_len: usize,
    pub samples_per_page: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            min_len: 2,
            max_len: 8,
            samples_per_page: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MineParams {
    pub th_sim: f64,
    pub extract: ExtractParams,
    pub seed: u64,
    pub region_nms_iou: f64,
    pub parallel: bool,
}

impl Default for MineParams {
    fn default() -> Self {
        Self {
            th_sim: DEFAULT_TH_SIM,
            extract: ExtractParams::default(),
            seed: 0,
            region_nms_iou: DEFAULT_REGION_NMS_IOU,
            parallel: true,
        }
    }
}

/// Page-local rng so extraction does not depend on visiting order.
fn page_rng(page: &Page, seed: u64) -> ChaCha8Rng {
    // FNV-1a over the page address; std's hasher is not stable across releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in page.doc_id.bytes().chain(page.page_no.to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Draw up to `samples_per_page` query snippets from a reading-ordered page.
///
/// Each snippet is a contiguous run of `min_len..=max_len` elements. Runs
/// whose layout string was already drawn on this page are discarded; at
/// most `4 * samples_per_page` draws are made. Output is sorted by run.
pub fn extract_query_snippets(corpus: &Corpus, page_idx: usize, params: &ExtractParams, seed: u64) -> Vec<Snippet> {
    let page = &corpus.pages[page_idx];
    let n = page.elements.len();
    if params.min_len == 0 || params.min_len > params.max_len || n < params.min_len {
        return Vec::new();
    }
    let max_len = params.max_len.min(n);
    let lstr = corpus.lstrs[page_idx].as_str();
    let mut rng = page_rng(page, seed);
    let mut seen = HashSet::new();
    let mut runs = Vec::new();
    for _ in 0..params.samples_per_page * 4 {
        if runs.len() == params.samples_per_page {
            break;
        }
        let len = rng.gen_range(params.min_len..=max_len);
        let start = rng.gen_range(0..=n - len);
        if seen.insert(&lstr[start..start + len]) {
            runs.push(start..start + len);
        }
    }
    runs.sort_by_key(|r| (r.start, r.end));
    runs.into_iter()
        .map(|r| corpus.run_snippet(page_idx, r).expect("ingested page encodes"))
        .collect()
}

/// One mined `(query, target)` sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub query: Snippet,
    pub target: PageRef,
    pub gt_regions: Vec<MatchRegion>,
}

/// Regions of `target_idx` similar to `query`, excluding the query's own
/// run when the target is the query's page.
pub fn match_query_on_page(
    corpus: &Corpus,
    query: &Snippet,
    target_idx: usize,
    th_sim: f64,
    region_nms_iou: f64,
) -> Vec<MatchRegion> {
    let page = &corpus.pages[target_idx];
    let lstr = &corpus.lstrs[target_idx];
    let Ok(matches) = find_similar_subsequences(query.lstr.as_bytes(), lstr.as_bytes(), th_sim, Dedup::BestPerStart)
    else {
        return Vec::new();
    };
    if matches.is_empty() {
        return Vec::new();
    }
    let mut regions = consolidate_matches(&matches, page, lstr, region_nms_iou);
    if page.doc_id == query.source.doc && page.page_no == query.source.page {
        let own = query.element_range();
        regions.retain(|r| r.element_range != own);
    }
    regions
}

fn mine_query(corpus: &Corpus, query: &Snippet, th_sim: f64, nms: f64) -> Vec<PairRecord> {
    (0..corpus.pages.len())
        .filter_map(|t| {
            let gt = match_query_on_page(corpus, query, t, th_sim, nms);
            (!gt.is_empty()).then(|| PairRecord {
                query: query.clone(),
                target: corpus.pages[t].page_ref(),
                gt_regions: gt,
            })
        })
        .collect()
}

fn sort_key(r: &PairRecord) -> (&str, usize, usize, usize, &str, usize) {
    let q = r.query.element_range();
    (&r.query.source.doc, r.query.source.page, q.start, q.end, &r.target.doc, r.target.page)
}

/// Mine pairs for the given query snippets against every page of the corpus.
pub fn mine_for_queries(
    corpus: &Corpus,
    queries: &[Snippet],
    th_sim: f64,
    region_nms_iou: f64,
    parallel: bool,
) -> Vec<PairRecord> {
    let mut out: Vec<PairRecord> = if parallel {
        queries
            .par_iter()
            .flat_map_iter(|q| mine_query(corpus, q, th_sim, region_nms_iou))
            .collect()
    } else {
        queries
            .iter()
            .flat_map(|q| mine_query(corpus, q, th_sim, region_nms_iou))
            .collect()
    };
    out.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    out
}

/// Extract query snippets from every page and mine their pairs.
pub fn mine_pairs(corpus: &Corpus, params: &MineParams) -> Vec<PairRecord> {
    let queries: Vec<Snippet> = (0..corpus.pages.len())
        .flat_map(|p| extract_query_snippets(corpus, p, &params.extract, params.seed))
        .collect();
    mine_for_queries(corpus, &queries, params.th_sim, params.region_nms_iou, params.parallel)
}

/// Wire form of a pair: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLine {
    pub query: QueryLine,
    pub target: PageRef,
    pub gt: Vec<RegionLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLine {
    pub doc: String,
    pub page: usize,
    pub bbox: BBox,
    pub lstr: String,
    pub elem_range: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLine {
    pub bbox: BBox,
    pub score: f64,
    pub elem_range: [usize; 2],
}

impl From<&PairRecord> for PairLine {
    fn from(r: &PairRecord) -> Self {
        let q = r.query.element_range();
        PairLine {
            query: QueryLine {
                doc: r.query.source.doc.clone(),
                page: r.query.source.page,
                bbox: r.query.bbox,
                lstr: r.query.lstr.symbols.clone(),
                elem_range: [q.start, q.end],
            },
            target: r.target.clone(),
            gt: r
                .gt_regions
                .iter()
                .map(|g| RegionLine {
                    bbox: g.bbox,
                    score: g.score,
                    elem_range: [g.element_range.start, g.element_range.end],
                })
                .collect(),
        }
    }
}

impl PairLine {
    pub fn query_range(&self) -> Range<usize> {
        self.query.elem_range[0]..self.query.elem_range[1]
    }
}

pub fn write_pairs<W: Write>(mut w: W, pairs: &[PairRecord]) -> io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, &PairLine::from(p))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_pair_lines<R: BufRead>(r: R) -> io::Result<Vec<PairLine>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeenLabel {
    Seen,
    Unseen,
}

/// Label each test query by whether its exact layout string occurs among
/// the training queries.
pub fn split_seen_unseen<'a>(
    train_lstrs: impl IntoIterator<Item = &'a str>,
    test_lstrs: impl IntoIterator<Item = &'a str>,
) -> Vec<SeenLabel> {
    let train: HashSet<&str> = train_lstrs.into_iter().collect();
    test_lstrs
        .into_iter()
        .map(|l| if train.contains(l) { SeenLabel::Seen } else { SeenLabel::Unseen })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_pairs: usize,
    pub n_unique_layout_strings: usize,
    /// Query layout-string length -> number of pairs.
    pub length_histogram: BTreeMap<usize, usize>,
}

impl DatasetStats {
    /// Statistics over a list of query layout strings, one per pair.
    pub fn from_lstrs<'a>(lstrs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut stats = DatasetStats::default();
        let mut unique = HashSet::new();
        for l in lstrs {
            stats.n_pairs += 1;
            unique.insert(l);
            *stats.length_histogram.entry(l.len()).or_default() += 1;
        }
        stats.n_unique_layout_strings = unique.len();
        stats
    }
}

pub fn dataset_stats(pairs: &[PairRecord]) -> DatasetStats {
    DatasetStats::from_lstrs(pairs.iter().map(|p| p.query.lstr.as_str()))
}
