//! Geometric layout primitives, reading order and layout-string encoding.
//!
//! A page is a bag of typed boxes. Sorting those boxes top-to-bottom and
//! left-to-right and mapping each kind through an [`Alphabet`] yields the
//! page's [`LayoutString`], the representation every matcher in this crate
//! works on.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("invalid bbox [{0}, {1}, {2}, {3}]")]
    InvalidBBox(f64, f64, f64, f64),
    #[error("element kind `{0}` is not in alphabet `{1}`")]
    UnknownKind(String, String),
    #[error("no element qualifies for the selection")]
    EmptySnippet,
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
}

/// Axis-aligned box in page units, origin top-left, y growing downward.
///
/// Serialized as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, LayoutError> {
        let finite = [x0, y0, x1, y1].iter().all(|v| v.is_finite());
        if !finite || x0 > x1 || y0 > y1 {
            return Err(LayoutError::InvalidBBox(x0, y0, x1, y1));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Build from a COCO-style `[x, y, w, h]` box.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, LayoutError> {
        if !(w >= 0.0 && h >= 0.0) {
            return Err(LayoutError::InvalidBBox(x, y, w, h));
        }
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 <= x1 && y0 <= y1).then_some(BBox { x0, y0, x1, y1 })
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.intersection(other).map_or(0.0, |b| b.area())
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Intersection over union; 0 when the union has no area.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    /// Union of all boxes, `None` for an empty iterator.
    pub fn union_all<'a>(boxes: impl IntoIterator<Item = &'a BBox>) -> Option<BBox> {
        boxes.into_iter().fold(None, |acc, b| match acc {
            None => Some(*b),
            Some(a) => Some(a.union(b)),
        })
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = LayoutError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// A kind name paired with the symbol it encodes to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementKind {
    pub name: String,
    pub symbol: char,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub bbox: BBox,
    /// Canonical (alphabet-normalized) kind name.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Element {
    pub fn new(kind: impl Into<String>, bbox: BBox) -> Self {
        Self {
            bbox,
            kind: kind.into(),
            text: None,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }
}

/// `(doc_id, page_no)` address of a page.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PageRef {
    pub doc: String,
    pub page: usize,
}

impl PageRef {
    pub fn new(doc: impl Into<String>, page: usize) -> Self {
        Self {
            doc: doc.into(),
            page,
        }
    }
}

/// A document page. Elements are stored in reading order once a page has
/// been through ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub doc_id: String,
    pub page_no: usize,
    pub width: f64,
    pub height: f64,
    pub elements: Vec<Element>,
}

impl Page {
    pub fn page_ref(&self) -> PageRef {
        PageRef::new(self.doc_id.clone(), self.page_no)
    }

    pub fn bounds(&self) -> BBox {
        BBox {
            x0: 0.0,
            y0: 0.0,
            x1: self.width,
            y1: self.height,
        }
    }
}

/// Injective map from kind names to single ASCII symbols.
///
/// Kind names are normalized (lowercased, `_`, `-` and spaces removed)
/// before lookup; `aliases` maps additional normalized names onto a
/// canonical kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub profile: String,
    pub symbols: BTreeMap<String, char>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: BTreeMap<String, String>,
}

pub fn normalize_kind(name: &str) -> String {
    name.chars()
        .filter(|c| !matches!(c, '_' | '-' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}

impl Alphabet {
    pub fn new(
        profile: impl Into<String>,
        symbols: impl IntoIterator<Item = (String, char)>,
        aliases: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, LayoutError> {
        let alphabet = Self {
            profile: profile.into(),
            symbols: symbols
                .into_iter()
                .map(|(k, v)| (normalize_kind(&k), v))
                .collect(),
            aliases: aliases
                .into_iter()
                .map(|(k, v)| (normalize_kind(&k), normalize_kind(&v)))
                .collect(),
        };
        alphabet.validate()?;
        Ok(alphabet)
    }

    /// Forms: fillable widgets and text blocks.
    pub fn flamingo() -> Self {
        Self::new(
            "flamingo",
            [("text".to_string(), 'T'), ("widget".to_string(), 'W')],
            [
                ("textblock".to_string(), "text".to_string()),
                ("fillablearea".to_string(), "widget".to_string()),
            ],
        )
        .expect("builtin alphabet")
    }

    /// Scientific articles: the five PubLayNet categories.
    pub fn publaynet() -> Self {
        Self::new(
            "publaynet",
            [
                ("text".to_string(), 'T'),
                ("title".to_string(), 'H'),
                ("list".to_string(), 'L'),
                ("table".to_string(), 'B'),
                ("figure".to_string(), 'F'),
            ],
            [],
        )
        .expect("builtin alphabet")
    }

    pub fn builtin(profile: &str) -> Option<Self> {
        match profile {
            "flamingo" => Some(Self::flamingo()),
            "publaynet" => Some(Self::publaynet()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.symbols.is_empty() {
            return Err(LayoutError::InvalidAlphabet("no symbols".into()));
        }
        let mut seen = BTreeMap::new();
        for (kind, &sym) in &self.symbols {
            if !sym.is_ascii_graphic() {
                return Err(LayoutError::InvalidAlphabet(format!(
                    "symbol for `{kind}` must be a printable ASCII character"
                )));
            }
            if let Some(prev) = seen.insert(sym, kind) {
                return Err(LayoutError::InvalidAlphabet(format!(
                    "symbol `{sym}` used by both `{prev}` and `{kind}`"
                )));
            }
        }
        for (alias, target) in &self.aliases {
            if !self.symbols.contains_key(target) {
                return Err(LayoutError::InvalidAlphabet(format!(
                    "alias `{alias}` points at unknown kind `{target}`"
                )));
            }
        }
        Ok(())
    }

    /// Canonical kind name for `name`, if the alphabet knows it.
    pub fn canonical(&self, name: &str) -> Option<&str> {
        let norm = normalize_kind(name);
        if let Some((k, _)) = self.symbols.get_key_value(&norm) {
            return Some(k.as_str());
        }
        self.aliases.get(&norm).map(String::as_str)
    }

    pub fn symbol(&self, name: &str) -> Option<char> {
        self.canonical(name).and_then(|k| self.symbols.get(k).copied())
    }

    pub fn kinds(&self) -> impl Iterator<Item = ElementKind> + '_ {
        self.symbols.iter().map(|(name, &symbol)| ElementKind {
            name: name.clone(),
            symbol,
        })
    }

    /// 1-based integer code of a kind (position in name order), used for masks.
    pub fn code(&self, name: &str) -> Option<u32> {
        let canon = self.canonical(name)?;
        self.symbols
            .keys()
            .position(|k| k == canon)
            .map(|i| i as u32 + 1)
    }
}

/// Symbol sequence in reading order, with a back-pointer per symbol into
/// the element list it was encoded from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LayoutString {
    pub symbols: String,
    pub element_index: Vec<usize>,
}

impl LayoutString {
    pub fn len(&self) -> usize {
        self.element_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_index.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.symbols.as_bytes()
    }

    pub fn as_str(&self) -> &str {
        &self.symbols
    }
}

/// A query region cut out of a page.
#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    pub source: PageRef,
    pub bbox: BBox,
    pub elements: Vec<Element>,
    /// Index of each snippet element in the source page's element list.
    pub page_indices: Vec<usize>,
    pub lstr: LayoutString,
}

impl Snippet {
    /// Half-open range of source-page element indices spanned by the snippet.
    pub fn element_range(&self) -> Range<usize> {
        match (self.page_indices.first(), self.page_indices.last()) {
            (Some(&a), Some(&b)) => a..b + 1,
            _ => 0..0,
        }
    }

    /// Snippet made of the contiguous run `range` of an already reading-ordered page.
    pub fn from_run(page: &Page, range: Range<usize>, alphabet: &Alphabet) -> Result<Self, LayoutError> {
        let elements = page.elements[range.clone()].to_vec();
        let bbox = BBox::union_all(elements.iter().map(|e| &e.bbox)).ok_or(LayoutError::EmptySnippet)?;
        let lstr = encode_layout_string(&elements, alphabet)?;
        Ok(Self {
            source: page.page_ref(),
            bbox,
            elements,
            page_indices: range.collect(),
            lstr,
        })
    }
}

/// Overlap ratio (of the shorter height) at which two boxes share a band
/// when `row_epsilon` is 1.
const BAND_OVERLAP: f64 = 0.5;

fn shares_band(top: f64, bottom: f64, b: &BBox, ratio: f64) -> bool {
    let overlap = bottom.min(b.y1) - top.max(b.y0);
    let shorter = (bottom - top).min(b.height());
    if shorter <= 0.0 {
        // zero-height boxes join a band they sit inside
        overlap >= 0.0
    } else {
        overlap > 0.0 && overlap >= ratio * shorter
    }
}

/// Assign every element to a horizontal band. Returns band ids, numbered
/// top to bottom.
fn assign_bands(elements: &[Element], row_epsilon: f64) -> Vec<usize> {
    let ratio = BAND_OVERLAP * row_epsilon;
    let mut order: Vec<usize> = (0..elements.len()).collect();
    order.sort_by(|&a, &b| {
        let (ba, bb) = (&elements[a].bbox, &elements[b].bbox);
        ba.y0
            .total_cmp(&bb.y0)
            .then(ba.x0.total_cmp(&bb.x0))
            .then(ba.y1.total_cmp(&bb.y1))
            .then(ba.x1.total_cmp(&bb.x1))
            .then(a.cmp(&b))
    });

    let mut band_of = vec![0; elements.len()];
    let mut band = 0;
    let mut extent: Option<(f64, f64)> = None;
    for idx in order {
        let b = &elements[idx].bbox;
        extent = match extent {
            Some((top, bottom)) if shares_band(top, bottom, b, ratio) => Some((top, bottom.max(b.y1))),
            Some(_) => {
                band += 1;
                Some((b.y0, b.y1))
            }
            None => Some((b.y0, b.y1)),
        };
        band_of[idx] = band;
    }
    band_of
}

/// Sort elements into natural reading order: bands top to bottom, then
/// left to right within a band (ties by `y0`, `y1`, `x1`, then input
/// position, so only identical boxes depend on input order).
///
/// `row_epsilon` scales the band-membership overlap ratio; 1.0 means two
/// boxes share a band when they overlap vertically by at least half the
/// shorter one's height.
pub fn reading_order_sort(elements: &[Element], row_epsilon: f64) -> Vec<Element> {
    reading_order_permutation(elements, row_epsilon)
        .into_iter()
        .map(|i| elements[i].clone())
        .collect()
}

/// Like [`reading_order_sort`] but returns the permutation of input indices.
pub fn reading_order_permutation(elements: &[Element], row_epsilon: f64) -> Vec<usize> {
    let bands = assign_bands(elements, row_epsilon.max(0.0));
    let mut idx: Vec<usize> = (0..elements.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ba, bb) = (&elements[a].bbox, &elements[b].bbox);
        bands[a]
            .cmp(&bands[b])
            .then(ba.x0.total_cmp(&bb.x0))
            .then(ba.y0.total_cmp(&bb.y0))
            .then(ba.y1.total_cmp(&bb.y1))
            .then(ba.x1.total_cmp(&bb.x1))
            .then(a.cmp(&b))
    });
    idx
}

pub const DEFAULT_ROW_EPSILON: f64 = 1.0;

/// Encode reading-ordered elements through `alphabet`.
pub fn encode_layout_string(elements: &[Element], alphabet: &Alphabet) -> Result<LayoutString, LayoutError> {
    let mut symbols = String::with_capacity(elements.len());
    for e in elements {
        let sym = alphabet
            .symbol(&e.kind)
            .ok_or_else(|| LayoutError::UnknownKind(e.kind.clone(), alphabet.profile.clone()))?;
        symbols.push(sym);
    }
    Ok(LayoutString {
        symbols,
        element_index: (0..elements.len()).collect(),
    })
}

pub const DEFAULT_CONTAINMENT: f64 = 0.5;

/// Turn a selection rectangle into a snippet of the page.
///
/// An element is selected when the fraction of its own area covered by
/// `bbox` reaches `containment_threshold`; zero-area elements are selected
/// when they lie inside the rectangle. Page element order is kept, so a
/// selection of adjacent elements encodes to a substring of the page string.
pub fn snippet_clip(
    page: &Page,
    bbox: &BBox,
    alphabet: &Alphabet,
    containment_threshold: f64,
) -> Result<Snippet, LayoutError> {
    let mut elements = Vec::new();
    let mut page_indices = Vec::new();
    for (i, e) in page.elements.iter().enumerate() {
        let area = e.bbox.area();
        let selected = if area > 0.0 {
            e.bbox.intersection_area(bbox) / area >= containment_threshold
        } else {
            bbox.contains(&e.bbox)
        };
        if selected {
            elements.push(e.clone());
            page_indices.push(i);
        }
    }
    let union = BBox::union_all(elements.iter().map(|e| &e.bbox)).ok_or(LayoutError::EmptySnippet)?;
    let lstr = encode_layout_string(&elements, alphabet)?;
    Ok(Snippet {
        source: page.page_ref(),
        bbox: union,
        elements,
        page_indices,
        lstr,
    })
}
