//! One-shot snippet search over a corpus.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Corpus;
use crate::layout::{snippet_clip, BBox, LayoutError, DEFAULT_CONTAINMENT};
use crate::similarity::{
    consolidate_matches, find_similar_subsequences, Dedup, SimilarityError, DEFAULT_REGION_NMS_IOU, DEFAULT_TH_SIM,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("unknown document `{0}`")]
    UnknownDocument(String),
    #[error("document `{0}` has no page {1}")]
    UnknownPage(String, usize),
    #[error("no element qualifies for the selection")]
    EmptySnippet,
    #[error("query layout string is empty")]
    EmptyQuery,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl SearchError {
    pub fn code(&self) -> &'static str {
        match self {
            SearchError::UnknownDocument(_) => "unknown_document",
            SearchError::UnknownPage(..) => "unknown_page",
            SearchError::EmptySnippet => "empty_snippet",
            SearchError::EmptyQuery => "empty_query",
            SearchError::InvalidRequest(_) => "invalid_request",
        }
    }
}

impl From<LayoutError> for SearchError {
    fn from(e: LayoutError) -> Self {
        match e {
            LayoutError::EmptySnippet => SearchError::EmptySnippet,
            other => SearchError::InvalidRequest(other.to_string()),
        }
    }
}

impl From<SimilarityError> for SearchError {
    fn from(e: SimilarityError) -> Self {
        match e {
            SimilarityError::EmptyQuery => SearchError::EmptyQuery,
            SimilarityError::InvalidThreshold => SearchError::InvalidRequest(e.to_string()),
        }
    }
}

/// Query as sent on the wire: either a region of a page or a raw layout string.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_no: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lstr: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuerySpec {
    Region { doc_id: String, page_no: usize, bbox: BBox },
    Lstr(String),
}

impl QueryInput {
    pub fn resolve(&self) -> Result<QuerySpec, SearchError> {
        let region = (&self.doc_id, self.page_no, self.bbox);
        match (region, &self.lstr) {
            ((None, None, None), Some(l)) => Ok(QuerySpec::Lstr(l.clone())),
            ((Some(d), Some(p), Some(b)), None) => Ok(QuerySpec::Region {
                doc_id: d.clone(),
                page_no: p,
                bbox: b,
            }),
            ((None, None, None), None) => Err(SearchError::InvalidRequest("query is empty".into())),
            (_, Some(_)) => Err(SearchError::InvalidRequest(
                "give either {doc_id, page_no, bbox} or {lstr}, not both".into(),
            )),
            _ => Err(SearchError::InvalidRequest(
                "region queries need doc_id, page_no and bbox".into(),
            )),
        }
    }
}

/// `"all"` or a list of document ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TargetsWire", into = "TargetsWire")]
pub enum Targets {
    #[default]
    All,
    Docs(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TargetsWire {
    Keyword(String),
    Docs(Vec<String>),
}

impl TryFrom<TargetsWire> for Targets {
    type Error = String;

    fn try_from(w: TargetsWire) -> Result<Self, Self::Error> {
        match w {
            TargetsWire::Keyword(k) if k == "all" => Ok(Targets::All),
            TargetsWire::Keyword(k) => Err(format!("targets must be \"all\" or a list of doc ids, got \"{k}\"")),
            TargetsWire::Docs(d) => Ok(Targets::Docs(d)),
        }
    }
}

impl From<Targets> for TargetsWire {
    fn from(t: Targets) -> Self {
        match t {
            Targets::All => TargetsWire::Keyword("all".into()),
            Targets::Docs(d) => TargetsWire::Docs(d),
        }
    }
}

fn default_th() -> f64 {
    DEFAULT_TH_SIM
}

fn default_max_results() -> usize {
    100
}

fn default_containment() -> f64 {
    DEFAULT_CONTAINMENT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub query: QueryInput,
    #[serde(default)]
    pub targets: Targets,
    #[serde(default = "default_th")]
    pub th_sim: f64,
    #[serde(default = "default_max_results")]
    pub max_results: usize,
    #[serde(default = "default_containment")]
    pub containment: f64,
    /// Report `elapsed_ms` in the response (off by default so identical
    /// requests produce identical bodies).
    #[serde(default)]
    pub timing: bool,
}

impl SearchRequest {
    pub fn new(query: QueryInput) -> Self {
        Self {
            query,
            targets: Targets::All,
            th_sim: DEFAULT_TH_SIM,
            max_results: default_max_results(),
            containment: DEFAULT_CONTAINMENT,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub page_no: usize,
    pub bbox: BBox,
    pub score: f64,
    pub elem_range: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub matches: Vec<SearchHit>,
    pub query_lstr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

/// Clip the query, match it against every target page and return the
/// best regions overall. Results are truncated only after all pages have
/// been scored. A region query never matches its own element run.
pub fn search_snippet(corpus: &Corpus, req: &SearchRequest) -> Result<SearchResponse, SearchError> {
    let started = Instant::now();
    if !(req.th_sim > 0.0 && req.th_sim <= 1.0) {
        return Err(SearchError::InvalidRequest("th_sim must lie in (0, 1]".into()));
    }
    let (query_lstr, own) = match req.query.resolve()? {
        QuerySpec::Lstr(l) => (l, None),
        QuerySpec::Region { doc_id, page_no, bbox } => {
            if !corpus.has_doc(&doc_id) {
                return Err(SearchError::UnknownDocument(doc_id));
            }
            let idx = corpus
                .pages
                .iter()
                .position(|p| p.doc_id == doc_id && p.page_no == page_no)
                .ok_or_else(|| SearchError::UnknownPage(doc_id.clone(), page_no))?;
            let snippet = snippet_clip(&corpus.pages[idx], &bbox, &corpus.alphabet, req.containment)?;
            let range = snippet.element_range();
            (snippet.lstr.symbols, Some((idx, range)))
        }
    };
    if query_lstr.is_empty() {
        return Err(SearchError::EmptyQuery);
    }

    let mut pages: Vec<usize> = match &req.targets {
        Targets::All => (0..corpus.pages.len()).collect(),
        Targets::Docs(docs) => {
            if let Some(d) = docs.iter().find(|d| !corpus.has_doc(d)) {
                return Err(SearchError::UnknownDocument(d.clone()));
            }
            (0..corpus.pages.len())
                .filter(|&i| docs.contains(&corpus.pages[i].doc_id))
                .collect()
        }
    };
    pages.sort_by(|&a, &b| {
        let (pa, pb) = (&corpus.pages[a], &corpus.pages[b]);
        (&pa.doc_id, pa.page_no).cmp(&(&pb.doc_id, pb.page_no))
    });

    let per_page: Vec<Result<Vec<SearchHit>, SearchError>> = pages
        .par_iter()
        .map(|&i| {
            let page = &corpus.pages[i];
            let lstr = &corpus.lstrs[i];
            let matches = find_similar_subsequences(query_lstr.as_bytes(), lstr.as_bytes(), req.th_sim, Dedup::BestPerStart)?;
            let mut regions = consolidate_matches(&matches, page, lstr, DEFAULT_REGION_NMS_IOU);
            if let Some((own_idx, own_range)) = &own {
                if *own_idx == i {
                    regions.retain(|r| &r.element_range != own_range);
                }
            }
            Ok(regions
                .into_iter()
                .map(|r| SearchHit {
                    doc_id: page.doc_id.clone(),
                    page_no: page.page_no,
                    bbox: r.bbox,
                    score: r.score,
                    elem_range: [r.element_range.start, r.element_range.end],
                })
                .collect())
        })
        .collect();
    let mut matches = Vec::new();
    for hits in per_page {
        matches.extend(hits?);
    }
    // stable: ties stay in (doc, page, element) order
    matches.sort_by(|a, b| b.score.total_cmp(&a.score));
    matches.truncate(req.max_results);
    Ok(SearchResponse {
        matches,
        query_lstr,
        elapsed_ms: req.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Alphabet, Element, Page};

    fn stack(doc: &str, s: &str) -> Page {
        Page {
            doc_id: doc.into(),
            page_no: 0,
            width: 100.0,
            height: 20.0 * s.len() as f64 + 20.0,
            elements: s
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    let kind = if c == 'T' { "text" } else { "widget" };
                    Element::new(kind, BBox::new(0.0, 20.0 * i as f64, 60.0, 20.0 * i as f64 + 12.0).unwrap())
                })
                .collect(),
        }
    }

    fn corpus() -> Corpus {
        Corpus::from_pages(
            Alphabet::flamingo(),
            vec![stack("a", "TWWTWTTW"), stack("b", "WWTWWTWTTWW"), stack("c", "TTTTTTTT")],
        )
        .unwrap()
    }

    fn lstr_query(l: &str) -> SearchRequest {
        SearchRequest::new(QueryInput { lstr: Some(l.into()), ..Default::default() })
    }

    #[test]
    fn region_query_finds_twin_but_not_itself() {
        let c = corpus();
        // rows 0..4 of page a: TWWT
        let req = SearchRequest::new(QueryInput {
            doc_id: Some("a".into()),
            page_no: Some(0),
            bbox: Some(BBox::new(0.0, 0.0, 60.0, 72.0).unwrap()),
            lstr: None,
        });
        let r = search_snippet(&c, &req).unwrap();
        assert_eq!(r.query_lstr, "TWWT");
        assert_eq!(r.matches.len(), 1);
        let hit = &r.matches[0];
        assert_eq!((hit.doc_id.as_str(), hit.elem_range), ("b", [2, 6]));
        assert_eq!(hit.score, 1.0);
        assert!(r.elapsed_ms.is_none());
    }

    #[test]
    fn results_are_ranked_and_truncated_after_scoring() {
        let c = corpus();
        let mut req = lstr_query("TWTTW");
        req.th_sim = 0.7;
        let all = search_snippet(&c, &req).unwrap();
        assert!(all.matches.len() >= 2);
        assert!(all.matches.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(all.matches[0].score, 1.0);
        req.max_results = 1;
        let top = search_snippet(&c, &req).unwrap();
        assert_eq!(top.matches, all.matches[..1]);
    }

    #[test]
    fn targets_restrict_documents() {
        let c = corpus();
        let mut req = lstr_query("TTTT");
        req.targets = Targets::Docs(vec!["a".into()]);
        assert!(search_snippet(&c, &req).unwrap().matches.is_empty());
        req.targets = Targets::Docs(vec!["c".into()]);
        assert!(!search_snippet(&c, &req).unwrap().matches.is_empty());
        req.targets = Targets::Docs(vec!["zzz".into()]);
        assert_eq!(search_snippet(&c, &req), Err(SearchError::UnknownDocument("zzz".into())));
    }

    #[test]
    fn absent_symbols_give_no_matches() {
        let r = search_snippet(&corpus(), &lstr_query("XYZXYZ")).unwrap();
        assert!(r.matches.is_empty());
    }

    #[test]
    fn request_errors() {
        let c = corpus();
        assert_eq!(search_snippet(&c, &lstr_query("")), Err(SearchError::EmptyQuery));
        let region = |doc: &str, page: usize, bbox: BBox| {
            SearchRequest::new(QueryInput { doc_id: Some(doc.into()), page_no: Some(page), bbox: Some(bbox), lstr: None })
        };
        let bb = BBox::new(0.0, 0.0, 60.0, 72.0).unwrap();
        assert_eq!(search_snippet(&c, &region("q", 0, bb)), Err(SearchError::UnknownDocument("q".into())));
        assert_eq!(search_snippet(&c, &region("a", 3, bb)), Err(SearchError::UnknownPage("a".into(), 3)));
        let off = BBox::new(90.0, 0.0, 100.0, 10.0).unwrap();
        assert_eq!(search_snippet(&c, &region("a", 0, off)), Err(SearchError::EmptySnippet));
        let both = QueryInput { lstr: Some("TW".into()), ..region("a", 0, bb).query };
        assert!(matches!(search_snippet(&c, &SearchRequest::new(both)), Err(SearchError::InvalidRequest(_))));
        let partial = QueryInput { doc_id: Some("a".into()), ..Default::default() };
        assert!(matches!(search_snippet(&c, &SearchRequest::new(partial)), Err(SearchError::InvalidRequest(_))));
        let mut req = lstr_query("TW");
        req.th_sim = 1.5;
        assert!(matches!(search_snippet(&c, &req), Err(SearchError::InvalidRequest(_))));
    }

    #[test]
    fn wire_format() {
        let req: SearchRequest = serde_json::from_str(r#"{"query": {"lstr": "TW"}, "targets": ["a"]}"#).unwrap();
        assert_eq!(req.targets, Targets::Docs(vec!["a".into()]));
        assert_eq!(req.th_sim, DEFAULT_TH_SIM);
        let req: SearchRequest = serde_json::from_str(r#"{"query": {"lstr": "TW"}, "targets": "all"}"#).unwrap();
        assert_eq!(req.targets, Targets::All);
        assert!(serde_json::from_str::<SearchRequest>(r#"{"query": {"lstr": "TW"}, "targets": "some"}"#).is_err());
        assert!(serde_json::from_str::<SearchRequest>(r#"{"query": {"lstr": "TW"}, "extra": 1}"#).is_err());
        assert_eq!(serde_json::to_string(&Targets::All).unwrap(), "\"all\"");
    }

    #[test]
    fn timing_is_opt_in() {
        let mut req = lstr_query("TW");
        req.timing = true;
        assert!(search_snippet(&corpus(), &req).unwrap().elapsed_ms.is_some());
    }
}
