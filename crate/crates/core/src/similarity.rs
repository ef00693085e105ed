//! Edit distance, the layout-string similarity score and thresholded
//! contiguous-subsequence search.
//!
//! The score of a candidate `b` against a query `a` is
//! `1 - d(a, b) / |a|` with `d` the unit-cost Levenshtein distance. It is
//! normalized by the query length only, so it is not symmetric and can go
//! negative. A candidate qualifies when its score is strictly greater than
//! the threshold.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{BBox, LayoutString, Page, PageRef};

pub const DEFAULT_TH_SIM: f64 = 0.92;
pub const DEFAULT_REGION_NMS_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimilarityError {
    #[error("query layout string is empty")]
    EmptyQuery,
    #[error("similarity threshold must lie in (0, 1]")]
    InvalidThreshold,
}

/// Minimal number of unit-cost insertions, deletions and substitutions
/// turning `a` into `b`.
pub fn edit_distance(a: &[u8], b: &[u8]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    row[b.len()]
}

/// Outcome of a distance computation with a cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bounded {
    Within(usize),
    Exceeded,
}

impl Bounded {
    pub fn within(self) -> Option<usize> {
        match self {
            Bounded::Within(d) => Some(d),
            Bounded::Exceeded => None,
        }
    }
}

/// Distances from `query` to every prefix `text[..j]`, `j` in `0..=text.len()`,
/// restricted to a diagonal band of half-width `k`. Entries whose distance
/// exceeds `k` (or fall outside the band) are `None`.
///
/// Only two band rows of `2k + 1` cells are kept in memory.
pub fn banded_prefix_distances(query: &[u8], text: &[u8], k: usize) -> Vec<Option<usize>> {
    let m = query.len();
    let n = text.len().min(m + k);
    let width = 2 * k + 1;
    let inf = k + 1;
    // band cell c of row i holds column j = i + c - k
    let mut prev = vec![inf; width];
    let mut cur = vec![inf; width];
    for (j, cell) in prev[k..].iter_mut().enumerate() {
        if j <= n {
            *cell = j;
        }
    }
    for i in 1..=m {
        cur.fill(inf);
        for c in 0..width {
            let j = i as isize + c as isize - k as isize;
            if j < 0 || j as usize > n {
                continue;
            }
            let j = j as usize;
            if j == 0 {
                cur[c] = i.min(inf);
                continue;
            }
            // diag: prev row, column j-1 -> same band cell
            let diag = prev[c] + usize::from(query[i - 1] != text[j - 1]);
            // up: prev row, column j -> cell c+1
            let up = if c + 1 < width { prev[c + 1] + 1 } else { inf };
            // left: this row, column j-1 -> cell c-1
            let left = if c > 0 { cur[c - 1] + 1 } else { inf };
            cur[c] = diag.min(up).min(left).min(inf);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (0..=text.len())
        .map(|j| {
            if j > n || j + k < m {
                return None;
            }
            let c = j + k - m;
            (prev[c] <= k).then_some(prev[c])
        })
        .collect()
}

/// Exact distance when `d(a, b) <= k`, otherwise [`Bounded::Exceeded`].
pub fn edit_distance_bounded(a: &[u8], b: &[u8], k: usize) -> Bounded {
    if a.len().abs_diff(b.len()) > k {
        return Bounded::Exceeded;
    }
    match banded_prefix_distances(a, b, k)[b.len()] {
        Some(d) => Bounded::Within(d),
        None => Bounded::Exceeded,
    }
}

/// Similarity score of `candidate` against `query`.
pub fn g_sim(query: &[u8], candidate: &[u8]) -> Result<f64, SimilarityError> {
    if query.is_empty() {
        return Err(SimilarityError::EmptyQuery);
    }
    Ok(score_from_distance(edit_distance(query, candidate), query.len()))
}

pub fn score_from_distance(distance: usize, query_len: usize) -> f64 {
    1.0 - distance as f64 / query_len as f64
}

/// Largest distance whose score still clears `th_sim` strictly, or `None`
/// when even an exact match does not.
pub fn max_qualifying_distance(query_len: usize, th_sim: f64) -> Option<usize> {
    (0..=query_len)
        .take_while(|&d| score_from_distance(d, query_len) > th_sim)
        .last()
}

/// A qualifying contiguous run `start..end` of the target string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubseqMatch {
    pub start: usize,
    pub end: usize,
    pub distance: usize,
    pub score: f64,
}

/// How overlapping qualifying candidates are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dedup {
    /// Every qualifying `(start, end)`.
    All,
    /// One candidate per start: smallest distance, then length closest to
    /// the query, then the shorter end.
    #[default]
    BestPerStart,
}

/// All contiguous runs of `target` whose score against `query` is strictly
/// above `th_sim`, reduced according to `dedup`. Sorted by start, then
/// descending score, then end.
pub fn find_similar_subsequences(
    query: &[u8],
    target: &[u8],
    th_sim: f64,
    dedup: Dedup,
) -> Result<Vec<SubseqMatch>, SimilarityError> {
    if query.is_empty() {
        return Err(SimilarityError::EmptyQuery);
    }
    if !(th_sim > 0.0 && th_sim <= 1.0) {
        return Err(SimilarityError::InvalidThreshold);
    }
    let m = query.len();
    let Some(k) = max_qualifying_distance(m, th_sim) else {
        return Ok(Vec::new());
    };
    let min_len = m.saturating_sub(k).max(1);
    let mut out = Vec::new();
    for start in 0..target.len() {
        if target.len() - start < min_len {
            break;
        }
        let window = &target[start..target.len().min(start + m + k)];
        let dists = banded_prefix_distances(query, window, k);
        let mut found = dists
            .iter()
            .enumerate()
            .skip(min_len)
            .filter_map(|(len, d)| d.map(|d| (len, d)))
            .map(|(len, d)| SubseqMatch {
                start,
                end: start + len,
                distance: d,
                score: score_from_distance(d, m),
            })
            .filter(|c| c.score > th_sim)
            .collect::<Vec<_>>();
        match dedup {
            Dedup::All => {
                found.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.end.cmp(&b.end)));
                out.extend(found);
            }
            Dedup::BestPerStart => {
                if let Some(best) = found.into_iter().min_by_key(|c| (c.distance, (c.end - c.start).abs_diff(m), c.end)) {
                    out.push(best);
                }
            }
        }
    }
    Ok(out)
}

/// A matched region of a target page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRegion {
    pub target: PageRef,
    pub bbox: BBox,
    /// Half-open element index range on the target page.
    pub element_range: Range<usize>,
    pub score: f64,
}

/// Map symbol-range matches to element boxes and drop regions that overlap
/// a better one by IoU above `region_nms_iou`. Sorted by descending score.
pub fn consolidate_matches(
    matches: &[SubseqMatch],
    target_page: &Page,
    target_lstr: &LayoutString,
    region_nms_iou: f64,
) -> Vec<MatchRegion> {
    let mut regions: Vec<MatchRegion> = matches
        .iter()
        .filter(|m| m.start < m.end && m.end <= target_lstr.len())
        .map(|m| {
            let idx = &target_lstr.element_index[m.start..m.end];
            let bbox = BBox::union_all(idx.iter().map(|&i| &target_page.elements[i].bbox))
                .expect("non-empty match");
            let lo = *idx.iter().min().expect("non-empty match");
            let hi = *idx.iter().max().expect("non-empty match");
            MatchRegion {
                target: target_page.page_ref(),
                bbox,
                element_range: lo..hi + 1,
                score: m.score,
            }
        })
        .collect();
    // stable: equal scores keep match order
    regions.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<MatchRegion> = Vec::with_capacity(regions.len());
    for r in regions {
        if kept.iter().all(|k| k.bbox.iou(&r.bbox) <= region_nms_iou) {
            kept.push(r);
        }
    }
    kept
}
