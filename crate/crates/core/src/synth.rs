//! Synthetic corpora with planted near-duplicate element runs.
//!
//! Each page is a vertical stack with one element per row, so reading
//! order is top to bottom and a run of elements maps to a run of symbols.
//! Query runs are taken from dedicated query pages; copies (optionally
//! mutated by substitution, insertion or deletion) are spliced into
//! distinct target pages before geometry is laid out.

use std::collections::BTreeSet;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::Corpus;
use crate::layout::{Alphabet, BBox, Element, LayoutError, Page};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    pub n_pages: usize,
    pub n_queries: usize,
    pub copies_per_query: usize,
    /// Inclusive motif length range.
    pub motif_len: (usize, usize),
    /// Inclusive page length range (elements).
    pub page_len: (usize, usize),
    /// Edits per copy as a fraction of motif length (floored).
    pub mutation_rate: f64,
    /// Relative jitter of planted element widths and heights.
    pub size_jitter: f64,
    /// Inclusive element width range in multiples of 4.
    pub width_units: (usize, usize),
    pub seed: u64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            n_pages: 1000,
            n_queries: 100,
            copies_per_query: 2,
            motif_len: (15, 30),
            page_len: (40, 80),
            mutation_rate: 0.07,
            size_jitter: 0.0,
            width_units: (10, 30),
            seed: 0,
        }
    }
}

/// Row pitch and element height in page units. The gap keeps rows in
/// separate bands even with 20% height jitter.
pub const ROW_PITCH: f64 = 16.0;
pub const ROW_HEIGHT: f64 = 12.0;
const ROW_GAP: f64 = ROW_PITCH - ROW_HEIGHT;
const MARGIN: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub target_page: usize,
    /// Element run of the copy in the target page.
    pub range: Range<usize>,
    pub bbox: BBox,
    pub edits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedQuery {
    pub query_page: usize,
    pub range: Range<usize>,
    pub plants: Vec<Plant>,
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    pub queries: Vec<PlantedQuery>,
}

/// One generated element: symbol plus horizontal geometry. Rows are
/// assigned from the final position, so geometry travels with a copy.
#[derive(Debug, Clone, Copy)]
struct Cell {
    symbol: char,
    x0: f64,
    width: f64,
}

fn random_cell(rng: &mut ChaCha8Rng, symbols: &[char], cfg: &PlantConfig) -> Cell {
    Cell {
        symbol: *symbols.choose(rng).expect("non-empty alphabet"),
        x0: 4.0 * rng.gen_range(0..=4) as f64,
        width: 4.0 * rng.gen_range(cfg.width_units.0..=cfg.width_units.1) as f64,
    }
}

/// Apply exactly `edits` random edits, each changing the symbol string.
/// Substitutions keep the element's geometry; insertions draw new geometry.
fn mutate(rng: &mut ChaCha8Rng, motif: &[Cell], symbols: &[char], cfg: &PlantConfig, edits: usize) -> Vec<Cell> {
    let mut out = motif.to_vec();
    for _ in 0..edits {
        match rng.gen_range(0..3) {
            0 => {
                let i = rng.gen_range(0..out.len());
                let others: Vec<char> = symbols.iter().copied().filter(|&c| c != out[i].symbol).collect();
                out[i].symbol = *others.choose(rng).expect("alphabet has two symbols");
            }
            1 => {
                let i = rng.gen_range(0..=out.len());
                let cell = random_cell(rng, symbols, cfg);
                out.insert(i, cell);
            }
            _ => {
                let i = rng.gen_range(0..out.len());
                out.remove(i);
            }
        }
    }
    out
}

/// Generate a planted corpus over `alphabet`'s kinds (at least two).
///
/// Query pages and target pages are pairwise distinct, so a page holds at
/// most one planted copy and query runs are never disturbed by splicing.
/// Copies keep the horizontal geometry of the query elements; with
/// `size_jitter > 0` their widths and heights are then perturbed, and the
/// rows below a perturbed element shift with it.
pub fn planted_corpus(alphabet: &Alphabet, cfg: &PlantConfig) -> Result<PlantedCorpus, LayoutError> {
    let kinds: Vec<(String, char)> = alphabet.kinds().map(|k| (k.name, k.symbol)).collect();
    if kinds.len() < 2 {
        return Err(LayoutError::InvalidAlphabet("planting needs two kinds".into()));
    }
    let symbols: Vec<char> = kinds.iter().map(|k| k.1).collect();
    let needed = cfg.n_queries * (1 + cfg.copies_per_query);
    assert!(needed <= cfg.n_pages, "not enough pages for {needed} query and target pages");
    assert!(cfg.motif_len.0 >= 1 && cfg.motif_len.0 <= cfg.motif_len.1);
    assert!(cfg.page_len.0 > cfg.motif_len.1 + 2, "pages must fit a motif");

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seqs: Vec<Vec<Cell>> = (0..cfg.n_pages)
        .map(|_| {
            let n = rng.gen_range(cfg.page_len.0..=cfg.page_len.1);
            (0..n).map(|_| random_cell(&mut rng, &symbols, cfg)).collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..cfg.n_pages).collect();
    order.shuffle(&mut rng);
    let mut pool = order.into_iter();

    let mut queries = Vec::with_capacity(cfg.n_queries);
    for _ in 0..cfg.n_queries {
        let q = pool.next().expect("checked above");
        let len = rng.gen_range(cfg.motif_len.0..=cfg.motif_len.1);
        let start = rng.gen_range(0..=seqs[q].len() - len);
        let motif = seqs[q][start..start + len].to_vec();
        let edits = (cfg.mutation_rate * len as f64).floor() as usize;
        let mut plants = Vec::with_capacity(cfg.copies_per_query);
        for _ in 0..cfg.copies_per_query {
            let t = pool.next().expect("checked above");
            let copy = mutate(&mut rng, &motif, &symbols, cfg, edits);
            let at = rng.gen_range(0..=seqs[t].len() - len);
            seqs[t].splice(at..at + len, copy.iter().copied());
            plants.push(Plant {
                target_page: t,
                range: at..at + copy.len(),
                bbox: BBox { x0: 0.0, y0: 0.0, x1: 0.0, y1: 0.0 },
                edits,
            });
        }
        queries.push(PlantedQuery {
            query_page: q,
            range: start..start + len,
            plants,
        });
    }

    let jittered: BTreeSet<(usize, usize)> = queries
        .iter()
        .flat_map(|q| q.plants.iter())
        .flat_map(|p| p.range.clone().map(move |i| (p.target_page, i)))
        .collect();
    let name_of = |c: char| kinds.iter().find(|k| k.1 == c).map(|k| k.0.clone()).expect("known symbol");

    let mut pages = Vec::with_capacity(cfg.n_pages);
    for (p, seq) in seqs.iter().enumerate() {
        let mut elements = Vec::with_capacity(seq.len());
        // Rows flow: a resized element moves every row below it.
        let mut y0 = MARGIN;
        for (i, cell) in seq.iter().enumerate() {
            let mut w = cell.width;
            let mut h = ROW_HEIGHT;
            if cfg.size_jitter > 0.0 && jittered.contains(&(p, i)) {
                w *= 1.0 + rng.gen_range(-cfg.size_jitter..=cfg.size_jitter);
                h *= 1.0 + rng.gen_range(-cfg.size_jitter..=cfg.size_jitter);
            }
            elements.push(Element::new(name_of(cell.symbol), BBox::new(cell.x0, y0, cell.x0 + w, y0 + h)?));
            y0 += h + ROW_GAP;
        }
        let width = MARGIN * 2.0 + 4.0 * (4 + cfg.width_units.1) as f64 * (1.0 + cfg.size_jitter);
        let height = y0 + MARGIN;
        pages.push(Page {
            doc_id: format!("synth-{p:04}"),
            page_no: 0,
            width: width.ceil(),
            height,
            elements,
        });
    }

    let corpus = Corpus::from_pages(alphabet.clone(), pages)?;
    for q in &mut queries {
        for plant in &mut q.plants {
            let els = &corpus.pages[plant.target_page].elements[plant.range.clone()];
            plant.bbox = BBox::union_all(els.iter().map(|e| &e.bbox)).expect("non-empty copy");
        }
    }
    Ok(PlantedCorpus { corpus, queries })
}
