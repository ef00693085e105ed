//! Annotation parsing and the on-disk corpus index.
//!
//! Two input formats are understood: COCO-style detection annotations
//! (PubLayNet ships in this form) and a small generic form-layout JSON.
//! Both produce a [`Corpus`] whose pages hold elements in reading order
//! with their layout strings precomputed.
//!
//! # Index file
//!
//! ```text
//! snipsearch-index v1 sha256=<64 hex chars>\n
//! <compact JSON body>\n
//! ```
//!
//! The checksum covers the body bytes exactly. The body is the serde
//! serialization of [`IndexBody`], whose field order is fixed, so
//! `save -> load -> save` is byte-identical.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::layout::{
    encode_layout_string, reading_order_sort, Alphabet, BBox, Element, LayoutError, LayoutString, Page, PageRef,
    Snippet, DEFAULT_ROW_EPSILON,
};

pub const INDEX_MAGIC: &str = "snipsearch-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed annotation at {record}: {reason}")]
    MalformedAnnotation { record: String, reason: String },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
}

fn malformed(record: impl Into<String>, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedAnnotation {
        record: record.into(),
        reason: reason.into(),
    }
}

/// An immutable, searchable set of pages sharing one alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub corpus_id: String,
    pub alphabet: Alphabet,
    pub pages: Vec<Page>,
    /// `lstrs[p]` is the layout string of `pages[p]`.
    pub lstrs: Vec<LayoutString>,
    /// Elements lying entirely outside their page, dropped at ingest.
    pub dropped_elements: usize,
}

impl Corpus {
    /// Assemble a corpus from raw pages: sorts elements into reading order,
    /// canonicalizes kinds and encodes layout strings.
    pub fn from_pages(alphabet: Alphabet, pages: Vec<Page>) -> Result<Self, LayoutError> {
        let mut sorted = Vec::with_capacity(pages.len());
        let mut lstrs = Vec::with_capacity(pages.len());
        for mut page in pages {
            for e in &mut page.elements {
                let canon = alphabet
                    .canonical(&e.kind)
                    .ok_or_else(|| LayoutError::UnknownKind(e.kind.clone(), alphabet.profile.clone()))?;
                e.kind = canon.to_string();
            }
            page.elements = reading_order_sort(&page.elements, DEFAULT_ROW_EPSILON);
            lstrs.push(encode_layout_string(&page.elements, &alphabet)?);
            sorted.push(page);
        }
        let mut corpus = Self {
            corpus_id: String::new(),
            alphabet,
            pages: sorted,
            lstrs,
            dropped_elements: 0,
        };
        corpus.corpus_id = corpus.content_id();
        Ok(corpus)
    }

    /// Short content hash, stable across runs.
    pub fn content_id(&self) -> String {
        let body = self.body_bytes_with_id("");
        hex::encode(&Sha256::digest(&body)[..8])
    }

    pub fn page_index(&self, page: &PageRef) -> Option<usize> {
        self.pages
            .iter()
            .position(|p| p.doc_id == page.doc && p.page_no == page.page)
    }

    pub fn has_doc(&self, doc_id: &str) -> bool {
        self.pages.iter().any(|p| p.doc_id == doc_id)
    }

    /// Snippet for a contiguous run of a page's reading-ordered elements.
    pub fn run_snippet(&self, page_idx: usize, range: std::ops::Range<usize>) -> Result<Snippet, LayoutError> {
        Snippet::from_run(&self.pages[page_idx], range, &self.alphabet)
    }

    fn body_bytes_with_id(&self, id: &str) -> Vec<u8> {
        let body = IndexBody {
            version: INDEX_VERSION,
            corpus_id: id.to_string(),
            alphabet: self.alphabet.clone(),
            dropped_elements: self.dropped_elements,
            pages: self
                .pages
                .iter()
                .zip(&self.lstrs)
                .map(|(p, l)| IndexPage {
                    doc_id: p.doc_id.clone(),
                    page_no: p.page_no,
                    width: p.width,
                    height: p.height,
                    lstr: l.symbols.clone(),
                    elements: p.elements.clone(),
                })
                .collect(),
        };
        serde_json::to_vec(&body).expect("index body serializes")
    }

    /// Check every stored invariant: valid pages, unique page addresses and
    /// layout strings that match recomputation.
    pub fn validate(&self) -> Result<(), String> {
        self.alphabet.validate().map_err(|e| e.to_string())?;
        if self.pages.len() != self.lstrs.len() {
            return Err("page and layout-string counts differ".into());
        }
        let mut seen = BTreeSet::new();
        for (i, (page, lstr)) in self.pages.iter().zip(&self.lstrs).enumerate() {
            if !(page.width > 0.0 && page.height > 0.0) {
                return Err(format!("page {i}: non-positive dimensions"));
            }
            if !seen.insert((page.doc_id.as_str(), page.page_no)) {
                return Err(format!("page {i}: duplicate address {}#{}", page.doc_id, page.page_no));
            }
            let bounds = page.bounds();
            if let Some(e) = page.elements.iter().find(|e| !bounds.contains(&e.bbox)) {
                return Err(format!("page {i}: element {:?} outside page", e.bbox));
            }
            let resorted = reading_order_sort(&page.elements, DEFAULT_ROW_EPSILON);
            if resorted != page.elements {
                return Err(format!("page {i}: elements not in reading order"));
            }
            let expect = encode_layout_string(&page.elements, &self.alphabet).map_err(|e| format!("page {i}: {e}"))?;
            if &expect != lstr {
                return Err(format!("page {i}: stored layout string does not match elements"));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct IndexPage {
    doc_id: String,
    page_no: usize,
    width: f64,
    height: f64,
    lstr: String,
    elements: Vec<Element>,
}

/// Serialized body of the index file.
#[derive(Serialize, Deserialize)]
pub struct IndexBody {
    version: u32,
    corpus_id: String,
    alphabet: Alphabet,
    dropped_elements: usize,
    pages: Vec<IndexPage>,
}

/// Canonical index bytes (header line plus body).
pub fn index_bytes(corpus: &Corpus) -> Vec<u8> {
    let body = corpus.body_bytes_with_id(&corpus.corpus_id);
    let digest = hex::encode(Sha256::digest(&body));
    let mut out = format!("{INDEX_MAGIC} v{INDEX_VERSION} sha256={digest}\n").into_bytes();
    out.extend_from_slice(&body);
    out.push(b'\n');
    out
}

pub fn save_index(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), IngestError> {
    fs::write(path, index_bytes(corpus))?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Corpus, IngestError> {
    let bytes = fs::read(path)?;
    parse_index(&bytes)
}

pub fn parse_index(bytes: &[u8]) -> Result<Corpus, IngestError> {
    let corrupt = |m: &str| IngestError::CorruptIndex(m.to_string());
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| corrupt("missing header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| corrupt("header is not UTF-8"))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(INDEX_MAGIC) {
        return Err(corrupt("bad magic"));
    }
    if parts.next() != Some(&format!("v{INDEX_VERSION}")) {
        return Err(corrupt("unsupported version"));
    }
    let digest = parts
        .next()
        .and_then(|p| p.strip_prefix("sha256="))
        .ok_or_else(|| corrupt("missing checksum"))?;
    let rest = &bytes[nl + 1..];
    let body = rest.strip_suffix(b"\n").ok_or_else(|| corrupt("truncated body"))?;
    if hex::encode(Sha256::digest(body)) != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let body: IndexBody = serde_json::from_slice(body).map_err(|e| IngestError::CorruptIndex(e.to_string()))?;
    if body.version != INDEX_VERSION {
        return Err(corrupt("body version mismatch"));
    }
    let mut pages = Vec::with_capacity(body.pages.len());
    let mut lstrs = Vec::with_capacity(body.pages.len());
    for p in body.pages {
        lstrs.push(LayoutString {
            element_index: (0..p.lstr.len()).collect(),
            symbols: p.lstr,
        });
        pages.push(Page {
            doc_id: p.doc_id,
            page_no: p.page_no,
            width: p.width,
            height: p.height,
            elements: p.elements,
        });
    }
    let corpus = Corpus {
        corpus_id: body.corpus_id,
        alphabet: body.alphabet,
        pages,
        lstrs,
        dropped_elements: body.dropped_elements,
    };
    corpus.validate().map_err(IngestError::CorruptIndex)?;
    Ok(corpus)
}

/// Clamp to the page or report that the box lies fully outside it.
fn clamp_to_page(b: BBox, width: f64, height: f64) -> Option<BBox> {
    let page = BBox {
        x0: 0.0,
        y0: 0.0,
        x1: width,
        y1: height,
    };
    let inside = b.x0 < width && b.y0 < height && b.x1 > 0.0 && b.y1 > 0.0;
    let degenerate_inside = page.contains(&b);
    (inside || degenerate_inside).then(|| page.intersection(&b)).flatten()
}

fn finish(
    alphabet: &Alphabet,
    raw: Vec<(PageRef, f64, f64, Vec<Element>)>,
    dropped: usize,
    source: &[u8],
) -> Result<Corpus, IngestError> {
    let pages = raw
        .into_iter()
        .map(|(r, width, height, elements)| Page {
            doc_id: r.doc,
            page_no: r.page,
            width,
            height,
            elements,
        })
        .collect();
    let mut corpus =
        Corpus::from_pages(alphabet.clone(), pages).map_err(|e| malformed("corpus", e.to_string()))?;
    corpus.dropped_elements = dropped;
    let mut h = Sha256::new();
    h.update(alphabet.profile.as_bytes());
    h.update(source);
    corpus.corpus_id = hex::encode(&h.finalize()[..8]);
    Ok(corpus)
}

#[derive(Deserialize)]
struct CocoFile {
    images: Option<Vec<CocoImage>>,
    categories: Option<Vec<CocoCategory>>,
    annotations: Option<Vec<CocoAnnotation>>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: Option<u64>,
    file_name: Option<String>,
    width: Option<f64>,
    height: Option<f64>,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: Option<u64>,
    name: Option<String>,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: Option<u64>,
    category_id: Option<u64>,
    bbox: Option<Vec<f64>>,
}

/// Parse a COCO-style annotation file. Each image becomes page 0 of a
/// document named by its `file_name` (or its id when absent).
pub fn parse_coco_layout(bytes: &[u8], alphabet: &Alphabet) -> Result<Corpus, IngestError> {
    let file: CocoFile = serde_json::from_slice(bytes).map_err(|e| malformed("document", e.to_string()))?;
    let images = file.images.ok_or_else(|| malformed("document", "missing `images`"))?;
    let categories = file.categories.ok_or_else(|| malformed("document", "missing `categories`"))?;
    let annotations = file.annotations.ok_or_else(|| malformed("document", "missing `annotations`"))?;

    let mut cat_kind = std::collections::BTreeMap::new();
    for (i, c) in categories.iter().enumerate() {
        let rec = format!("categories[{i}]");
        let id = c.id.ok_or_else(|| malformed(&rec, "missing `id`"))?;
        let name = c.name.as_deref().ok_or_else(|| malformed(&rec, "missing `name`"))?;
        cat_kind.insert(id, name.to_string());
    }

    let mut raw = Vec::with_capacity(images.len());
    let mut image_slot = std::collections::BTreeMap::new();
    let mut seen_docs = BTreeSet::new();
    for (i, img) in images.iter().enumerate() {
        let rec = format!("images[{i}]");
        let id = img.id.ok_or_else(|| malformed(&rec, "missing `id`"))?;
        let width = img.width.ok_or_else(|| malformed(&rec, "missing `width`"))?;
        let height = img.height.ok_or_else(|| malformed(&rec, "missing `height`"))?;
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(malformed(&rec, "non-positive page dimensions"));
        }
        let doc = img.file_name.clone().unwrap_or_else(|| id.to_string());
        if !seen_docs.insert(doc.clone()) {
            return Err(malformed(&rec, format!("duplicate image `{doc}`")));
        }
        if image_slot.insert(id, raw.len()).is_some() {
            return Err(malformed(&rec, format!("duplicate image id {id}")));
        }
        raw.push((PageRef::new(doc, 0), width, height, Vec::new()));
    }

    let mut dropped = 0;
    for (i, a) in annotations.iter().enumerate() {
        let rec = format!("annotations[{i}]");
        let image_id = a.image_id.ok_or_else(|| malformed(&rec, "missing `image_id`"))?;
        let category_id = a.category_id.ok_or_else(|| malformed(&rec, "missing `category_id`"))?;
        let bbox = a.bbox.as_deref().ok_or_else(|| malformed(&rec, "missing `bbox`"))?;
        let &[x, y, w, h] = bbox else {
            return Err(malformed(&rec, "`bbox` must have 4 numbers"));
        };
        let slot = *image_slot
            .get(&image_id)
            .ok_or_else(|| malformed(&rec, format!("unknown image_id {image_id}")))?;
        let name = cat_kind
            .get(&category_id)
            .ok_or_else(|| malformed(&rec, format!("unknown category_id {category_id}")))?;
        let kind = alphabet
            .canonical(name)
            .ok_or_else(|| malformed(&rec, format!("category `{name}` has no symbol in alphabet `{}`", alphabet.profile)))?;
        let b = BBox::from_xywh(x, y, w, h).map_err(|e| malformed(&rec, e.to_string()))?;
        let (_, width, height, elements) = &mut raw[slot];
        match clamp_to_page(b, *width, *height) {
            Some(b) => elements.push(Element::new(kind, b)),
            None => dropped += 1,
        }
    }
    finish(alphabet, raw, dropped, bytes)
}

#[derive(Deserialize)]
struct FormFile {
    doc_id: Option<String>,
    pages: Option<Vec<FormPage>>,
}

#[derive(Deserialize)]
struct FormPage {
    doc_id: Option<String>,
    page_no: Option<usize>,
    width: Option<f64>,
    height: Option<f64>,
    elements: Option<Vec<FormElement>>,
}

#[derive(Deserialize)]
struct FormElement {
    kind: Option<String>,
    bbox: Option<Vec<f64>>,
    text: Option<String>,
}

/// Parse the generic form-layout format:
///
/// ```json
/// {"doc_id": "optional", "pages": [{"width": 612, "height": 792,
///   "elements": [{"kind": "widget", "bbox": [x0, y0, x1, y1], "text": "optional"}]}]}
/// ```
///
/// Pages may override `doc_id` and `page_no`; by default every page
/// belongs to the file's `doc_id` (or `"form"`) and is numbered by position.
pub fn parse_form_layout(bytes: &[u8], alphabet: &Alphabet) -> Result<Corpus, IngestError> {
    let file: FormFile = serde_json::from_slice(bytes).map_err(|e| malformed("document", e.to_string()))?;
    let pages = file.pages.ok_or_else(|| malformed("document", "missing `pages`"))?;
    let file_doc = file.doc_id.unwrap_or_else(|| "form".to_string());

    let mut raw = Vec::with_capacity(pages.len());
    let mut seen = BTreeSet::new();
    let mut dropped = 0;
    for (p, page) in pages.into_iter().enumerate() {
        let rec = format!("pages[{p}]");
        let width = page.width.ok_or_else(|| malformed(&rec, "missing `width`"))?;
        let height = page.height.ok_or_else(|| malformed(&rec, "missing `height`"))?;
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(malformed(&rec, "non-positive page dimensions"));
        }
        let page_ref = PageRef::new(page.doc_id.unwrap_or_else(|| file_doc.clone()), page.page_no.unwrap_or(p));
        if !seen.insert(page_ref.clone()) {
            return Err(malformed(&rec, format!("duplicate page {}#{}", page_ref.doc, page_ref.page)));
        }
        let mut elements = Vec::new();
        for (e, el) in page.elements.unwrap_or_default().into_iter().enumerate() {
            let rec = format!("pages[{p}].elements[{e}]");
            let kind_name = el.kind.ok_or_else(|| malformed(&rec, "missing `kind`"))?;
            let kind = alphabet.canonical(&kind_name).ok_or_else(|| {
                malformed(&rec, format!("kind `{kind_name}` has no symbol in alphabet `{}`", alphabet.profile))
            })?;
            let bbox = el.bbox.ok_or_else(|| malformed(&rec, "missing `bbox`"))?;
            let &[x0, y0, x1, y1] = bbox.as_slice() else {
                return Err(malformed(&rec, "`bbox` must have 4 numbers"));
            };
            let b = BBox::new(x0, y0, x1, y1).map_err(|e| malformed(&rec, e.to_string()))?;
            match clamp_to_page(b, width, height) {
                Some(b) => elements.push(Element {
                    bbox: b,
                    kind: kind.to_string(),
                    text: el.text,
                }),
                None => dropped += 1,
            }
        }
        raw.push((page_ref, width, height, elements));
    }
    finish(alphabet, raw, dropped, bytes)
}

/// Input format selector for [`parse_layout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutFormat {
    Coco,
    Form,
}

impl std::str::FromStr for LayoutFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coco" => Ok(Self::Coco),
            "form" => Ok(Self::Form),
            other => Err(format!("unknown format `{other}` (expected coco or form)")),
        }
    }
}

pub fn parse_layout(format: LayoutFormat, bytes: &[u8], alphabet: &Alphabet) -> Result<Corpus, IngestError> {
    match format {
        LayoutFormat::Coco => parse_coco_layout(bytes, alphabet),
        LayoutFormat::Form => parse_form_layout(bytes, alphabet),
    }
}

/// Resolve a builtin alphabet profile name, or load an alphabet JSON file
/// (`{"profile": ..., "symbols": {"kind": "C", ...}, "aliases": {...}}`).
pub fn resolve_alphabet(spec: &str) -> Result<Alphabet, IngestError> {
    if let Some(a) = Alphabet::builtin(spec) {
        return Ok(a);
    }
    let bytes = fs::read(spec)?;
    parse_alphabet(&bytes)
}

pub fn parse_alphabet(bytes: &[u8]) -> Result<Alphabet, IngestError> {
    let a: Alphabet = serde_json::from_slice(bytes).map_err(|e| malformed("alphabet", e.to_string()))?;
    Alphabet::new(a.profile, a.symbols, a.aliases).map_err(|e| malformed("alphabet", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const COCO: &str = r#"{
        "images": [{"id": 7, "file_name": "p1.png", "width": 100, "height": 100},
                   {"id": 8, "width": 50, "height": 50}],
        "categories": [{"id": 1, "name": "text"}, {"id": 2, "name": "title"}, {"id": 3, "name": "figure"}],
        "annotations": [
            {"image_id": 7, "category_id": 1, "bbox": [10, 40, 80, 10]},
            {"image_id": 7, "category_id": 2, "bbox": [10, 5, 80, 10]},
            {"image_id": 7, "category_id": 3, "bbox": [10, 60, 30, 30]},
            {"image_id": 7, "category_id": 1, "bbox": [60, 62, 30, 30]},
            {"image_id": 8, "category_id": 1, "bbox": [200, 200, 10, 10]}
        ]}"#;

    #[test]
    fn coco_pages_come_out_in_reading_order() {
        let c = parse_coco_layout(COCO.as_bytes(), &Alphabet::publaynet()).unwrap();
        assert_eq!(c.pages.len(), 2);
        assert_eq!(c.pages[0].doc_id, "p1.png");
        assert_eq!(c.lstrs[0].as_str(), "HTFT");
        assert_eq!(c.pages[1].doc_id, "8");
        assert!(c.lstrs[1].is_empty());
        assert_eq!(c.dropped_elements, 1);
        assert_eq!(c.corpus_id.len(), 16);
        c.validate().unwrap();
    }

    #[test]
    fn corpus_id_is_stable() {
        let a = parse_coco_layout(COCO.as_bytes(), &Alphabet::publaynet()).unwrap();
        let b = parse_coco_layout(COCO.as_bytes(), &Alphabet::publaynet()).unwrap();
        assert_eq!(a.corpus_id, b.corpus_id);
    }

    #[test]
    fn malformed_records_are_located() {
        let bad = COCO.replace(r#"{"image_id": 7, "category_id": 3, "bbox": [10, 60, 30, 30]}"#, r#"{"image_id": 7, "bbox": [1, 2, 3, 4]}"#);
        match parse_coco_layout(bad.as_bytes(), &Alphabet::publaynet()) {
            Err(IngestError::MalformedAnnotation { record, reason }) => {
                assert_eq!(record, "annotations[2]");
                assert!(reason.contains("category_id"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = COCO.replace("[10, 5, 80, 10]", "[10, 5, 80]");
        assert!(matches!(
            parse_coco_layout(bad.as_bytes(), &Alphabet::publaynet()),
            Err(IngestError::MalformedAnnotation { record, .. }) if record == "annotations[1]"
        ));
        // kinds outside the alphabet
        assert!(matches!(
            parse_coco_layout(COCO.as_bytes(), &Alphabet::flamingo()),
            Err(IngestError::MalformedAnnotation { .. })
        ));
    }

    const FORM: &str = r#"{"doc_id": "f1", "pages": [
        {"width": 100, "height": 100, "elements": [
            {"kind": "widget", "bbox": [50, 10, 90, 20]},
            {"kind": "TextBlock", "bbox": [5, 10, 45, 20], "text": "Name"},
            {"kind": "fillable_area", "bbox": [5, 30, 90, 40]}]},
        {"width": 100, "height": 100, "elements": []}]}"#;

    #[test]
    fn form_layout_defaults_and_aliases() {
        let c = parse_form_layout(FORM.as_bytes(), &Alphabet::flamingo()).unwrap();
        assert_eq!(c.lstrs[0].as_str(), "TWW");
        assert_eq!(c.pages[0].elements[0].text.as_deref(), Some("Name"));
        assert_eq!(c.pages[0].elements[0].kind, "text");
        assert_eq!((c.pages[1].doc_id.as_str(), c.pages[1].page_no), ("f1", 1));
    }

    #[test]
    fn form_rejects_duplicate_pages() {
        let dup = r#"{"pages": [{"page_no": 0, "width": 1, "height": 1}, {"page_no": 0, "width": 1, "height": 1}]}"#;
        assert!(matches!(
            parse_form_layout(dup.as_bytes(), &Alphabet::flamingo()),
            Err(IngestError::MalformedAnnotation { record, .. }) if record == "pages[1]"
        ));
    }

    #[test]
    fn index_round_trip_is_byte_identical() {
        let c = parse_form_layout(FORM.as_bytes(), &Alphabet::flamingo()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.idx");
        save_index(&c, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(loaded, c);
        assert_eq!(index_bytes(&loaded), fs::read(&path).unwrap());
    }

    #[test]
    fn damaged_index_is_rejected() {
        let c = parse_coco_layout(COCO.as_bytes(), &Alphabet::publaynet()).unwrap();
        let bytes = index_bytes(&c);
        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(parse_index(&bytes[..cut]), Err(IngestError::CorruptIndex(_))), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        let at = bytes.len() - 20;
        flipped[at] ^= 0x01;
        assert!(matches!(parse_index(&flipped), Err(IngestError::CorruptIndex(_))));
    }

    #[test]
    fn consistent_checksum_does_not_hide_bad_content() {
        // a re-checksummed body whose stored string disagrees with its elements
        let c = parse_coco_layout(COCO.as_bytes(), &Alphabet::publaynet()).unwrap();
        let mut body = c.body_bytes_with_id(&c.corpus_id);
        let text = String::from_utf8(body.clone()).unwrap().replace("\"HTFT\"", "\"HTTT\"");
        body = text.into_bytes();
        let mut bytes = format!("{INDEX_MAGIC} v{INDEX_VERSION} sha256={}\n", hex::encode(Sha256::digest(&body))).into_bytes();
        bytes.extend_from_slice(&body);
        bytes.push(b'\n');
        assert!(matches!(parse_index(&bytes), Err(IngestError::CorruptIndex(m)) if m.contains("layout string")));
    }

    #[test]
    fn alphabet_files() {
        let a = parse_alphabet(br#"{"profile": "custom", "symbols": {"Check_Box": "C", "text": "T"}}"#).unwrap();
        assert_eq!(a.symbol("checkbox"), Some('C'));
        assert!(parse_alphabet(br#"{"profile": "x", "symbols": {"a": "C", "b": "C"}}"#).is_err());
        assert_eq!(resolve_alphabet("flamingo").unwrap(), Alphabet::flamingo());
    }

    fn page_strategy() -> impl Strategy<Value = Vec<(u8, u8, u8, bool)>> {
        prop::collection::vec((0u8..20, 0u8..20, 1u8..6, any::<bool>()), 0..15)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn save_load_save_is_identity(pages in prop::collection::vec(page_strategy(), 1..4)) {
            let pages: Vec<Page> = pages
                .into_iter()
                .enumerate()
                .map(|(p, els)| Page {
                    doc_id: format!("d{p}"),
                    page_no: 0,
                    width: 200.0,
                    height: 200.0,
                    elements: els
                        .into_iter()
                        .map(|(x, y, s, w)| {
                            let (x, y) = (x as f64 * 7.5, y as f64 * 7.5);
                            Element::new(if w { "widget" } else { "text" }, BBox::new(x, y, x + s as f64 * 4.0, y + s as f64 * 3.0).unwrap())
                        })
                        .collect(),
                })
                .collect();
            let c = Corpus::from_pages(Alphabet::flamingo(), pages).unwrap();
            let bytes = index_bytes(&c);
            let back = parse_index(&bytes).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(index_bytes(&back), bytes);
        }
    }
}
