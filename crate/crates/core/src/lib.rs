//! Layout-string snippet search over document pages.
//!
//! Pages are reduced to strings of element-kind symbols in reading order.
//! Similar snippets are found by bounded edit distance over those strings,
//! then mapped back to page regions. Around that core sit corpus
//! ingestion, dataset mining, COCO-style detection metrics, template
//! matching baselines and a forward-only attention-fusion reference.

pub mod eval;
pub mod fusion;
pub mod ingest;
pub mod layout;
pub mod miner;
pub mod search;
pub mod similarity;
pub mod synth;

pub use ingest::{load_index, parse_layout, save_index, Corpus, IngestError, LayoutFormat};
pub use layout::{
    snippet_clip, Alphabet, BBox, Element, ElementKind, LayoutError, LayoutString, Page, PageRef, Snippet,
};
pub use miner::{mine_pairs, MineParams, PairLine, PairRecord};
pub use search::{search_snippet, QueryInput, SearchError, SearchHit, SearchRequest, SearchResponse, Targets};
pub use similarity::{find_similar_subsequences, g_sim, MatchRegion, SubseqMatch, DEFAULT_TH_SIM};
