//! Template-matching baselines over rasterized kind masks.
//!
//! Layout annotations are sampled onto a grid of `cell` page units; each
//! cell holds the code of the element covering its center. The query mask
//! is slid over the target mask at every valid offset and scored by sum of
//! squared differences or zero-mean normalized cross-correlation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{Alphabet, BBox, Element};

pub const DEFAULT_CELL: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("query mask is larger than target mask")]
    NoValidPosition,
    #[error("every window (or the query itself) has zero variance")]
    AllWindowsDegenerate,
    #[error("cell size must be positive")]
    InvalidCell,
}

/// Row-major grid of kind codes; 0 means background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl Mask {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }
}

/// Rasterize elements lying in `frame` onto a `ceil(h/cell) x ceil(w/cell)`
/// grid anchored at the frame's top-left corner. Later elements win where
/// boxes overlap. Kinds unknown to `alphabet` rasterize as background.
pub fn rasterize_elements(elements: &[Element], frame: &BBox, alphabet: &Alphabet, cell: f64) -> Result<Mask, TemplateError> {
    if cell.is_nan() || cell <= 0.0 {
        return Err(TemplateError::InvalidCell);
    }
    let rows = (frame.height() / cell).ceil() as usize;
    let cols = (frame.width() / cell).ceil() as usize;
    let mut mask = Mask::zeros(rows, cols);
    for e in elements {
        let code = alphabet.code(&e.kind).unwrap_or(0);
        let b = e.bbox.translate(-frame.x0, -frame.y0);
        // cells whose centers (i + 0.5) * cell fall inside [b.x0, b.x1]
        let first = |lo: f64| ((lo / cell - 0.5).ceil().max(0.0)) as usize;
        let last = |hi: f64, n: usize| {
            let v = (hi / cell - 0.5).floor();
            if v < 0.0 {
                None
            } else {
                Some((v as usize).min(n.saturating_sub(1)))
            }
        };
        let (Some(r1), Some(c1)) = (last(b.y1, rows), last(b.x1, cols)) else {
            continue;
        };
        let (r0, c0) = (first(b.y0), first(b.x0));
        if rows == 0 || cols == 0 {
            continue;
        }
        for r in r0..=r1 {
            for c in c0..=c1 {
                mask.data[r * cols + c] = code;
            }
        }
    }
    Ok(mask)
}

/// Rasterize a whole page.
pub fn rasterize_layout(page: &crate::layout::Page, alphabet: &Alphabet, cell: f64) -> Result<Mask, TemplateError> {
    rasterize_elements(&page.elements, &page.bounds(), alphabet, cell)
}

/// Scores of a template search. `scores[r * cols + c]` is the score with
/// the query's top-left corner at cell `(r, c)`; `None` where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub rows: usize,
    pub cols: usize,
    pub scores: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMatch {
    pub best_row: usize,
    pub best_col: usize,
    pub best_score: f64,
    pub query_rows: usize,
    pub query_cols: usize,
    pub map: ScoreMap,
}

impl TemplateMatch {
    /// Page-unit box of the query placed at cell `(r, c)`.
    pub fn window_bbox(&self, r: usize, c: usize, cell: f64) -> BBox {
        BBox {
            x0: c as f64 * cell,
            y0: r as f64 * cell,
            x1: (c + self.query_cols) as f64 * cell,
            y1: (r + self.query_rows) as f64 * cell,
        }
    }

    pub fn best_bbox(&self, cell: f64) -> BBox {
        self.window_bbox(self.best_row, self.best_col, cell)
    }

    /// Positions whose score passes `accept`, as `(row, col, score)`.
    pub fn accepted(&self, accept: impl Fn(f64) -> bool) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for r in 0..self.map.rows {
            for c in 0..self.map.cols {
                if let Some(s) = self.map.scores[r * self.map.cols + c] {
                    if accept(s) {
                        out.push((r, c, s));
                    }
                }
            }
        }
        out
    }
}

fn valid_dims(query: &Mask, target: &Mask) -> Result<(usize, usize), TemplateError> {
    if query.rows == 0 || query.cols == 0 || query.rows > target.rows || query.cols > target.cols {
        return Err(TemplateError::NoValidPosition);
    }
    Ok((target.rows - query.rows + 1, target.cols - query.cols + 1))
}

/// Sum of squared differences; the best position has the smallest score.
pub fn ssd_match(query: &Mask, target: &Mask) -> Result<TemplateMatch, TemplateError> {
    let (rows, cols) = valid_dims(query, target)?;
    let mut scores = Vec::with_capacity(rows * cols);
    let mut best = (0, 0, f64::INFINITY);
    for r in 0..rows {
        for c in 0..cols {
            let mut s = 0.0;
            for qr in 0..query.rows {
                let trow = &target.data[(r + qr) * target.cols + c..][..query.cols];
                let qrow = &query.data[qr * query.cols..][..query.cols];
                for (&q, &t) in qrow.iter().zip(trow) {
                    let d = q as f64 - t as f64;
                    s += d * d;
                }
            }
            if s < best.2 {
                best = (r, c, s);
            }
            scores.push(Some(s));
        }
    }
    Ok(TemplateMatch {
        best_row: best.0,
        best_col: best.1,
        best_score: best.2,
        query_rows: query.rows,
        query_cols: query.cols,
        map: ScoreMap { rows, cols, scores },
    })
}

/// Zero-mean normalized cross-correlation in `[-1, 1]`; the best position
/// has the largest score. Windows with zero variance have no score.
pub fn ncc_match(query: &Mask, target: &Mask) -> Result<TemplateMatch, TemplateError> {
    let (rows, cols) = valid_dims(query, target)?;
    let n = (query.rows * query.cols) as f64;
    let q_mean = query.data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let q_centered: Vec<f64> = query.data.iter().map(|&v| v as f64 - q_mean).collect();
    let q_norm = q_centered.iter().map(|v| v * v).sum::<f64>();
    if q_norm == 0.0 {
        return Err(TemplateError::AllWindowsDegenerate);
    }
    let mut scores = Vec::with_capacity(rows * cols);
    let mut best: Option<(usize, usize, f64)> = None;
    for r in 0..rows {
        for c in 0..cols {
            let (mut sum, mut sum_sq, mut cross) = (0.0, 0.0, 0.0);
            for qr in 0..query.rows {
                let trow = &target.data[(r + qr) * target.cols + c..][..query.cols];
                let qrow = &q_centered[qr * query.cols..][..query.cols];
                for (&q, &t) in qrow.iter().zip(trow) {
                    let t = t as f64;
                    sum += t;
                    sum_sq += t * t;
                    cross += q * t;
                }
            }
            // sum((t - mean_t)^2) and sum(q_c * (t - mean_t)) = sum(q_c * t)
            let t_var = sum_sq - sum * sum / n;
            let score = (t_var > 1e-12).then(|| (cross / (q_norm * t_var).sqrt()).clamp(-1.0, 1.0));
            if let Some(s) = score {
                if best.is_none_or(|(_, _, b)| s > b) {
                    best = Some((r, c, s));
                }
            }
            scores.push(score);
        }
    }
    let (best_row, best_col, best_score) = best.ok_or(TemplateError::AllWindowsDegenerate)?;
    Ok(TemplateMatch {
        best_row,
        best_col,
        best_score,
        query_rows: query.rows,
        query_cols: query.cols,
        map: ScoreMap { rows, cols, scores },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Page;
    use proptest::prelude::*;

    fn mask(rows: usize, cols: usize, data: &[u32]) -> Mask {
        Mask { rows, cols, data: data.to_vec() }
    }

    fn brute_ncc(q: &Mask, t: &Mask, r: usize, c: usize) -> Option<f64> {
        let qs: Vec<f64> = q.data.iter().map(|&v| v as f64).collect();
        let ts: Vec<f64> = (0..q.rows)
            .flat_map(|i| (0..q.cols).map(move |j| (i, j)))
            .map(|(i, j)| t.at(r + i, c + j) as f64)
            .collect();
        let n = qs.len() as f64;
        let (qm, tm) = (qs.iter().sum::<f64>() / n, ts.iter().sum::<f64>() / n);
        let num: f64 = qs.iter().zip(&ts).map(|(a, b)| (a - qm) * (b - tm)).sum();
        let qv: f64 = qs.iter().map(|a| (a - qm).powi(2)).sum();
        let tv: f64 = ts.iter().map(|b| (b - tm).powi(2)).sum();
        (tv > 1e-12).then(|| num / (qv * tv).sqrt())
    }

    #[test]
    fn rasterizes_cell_centers() {
        let page = Page {
            doc_id: "d".into(),
            page_no: 0,
            width: 16.0,
            height: 8.0,
            elements: vec![
                Element::new("text", BBox::new(0.0, 0.0, 8.0, 4.0).unwrap()),
                Element::new("widget", BBox::new(6.0, 0.0, 16.0, 8.0).unwrap()),
            ],
        };
        let m = rasterize_layout(&page, &Alphabet::flamingo(), 4.0).unwrap();
        assert_eq!((m.rows, m.cols), (2, 4));
        // the widget starts at 6, covering the center (6) of cell 1; it is later so it wins
        assert_eq!(m.data, vec![1, 2, 2, 2, 0, 2, 2, 2]);
        assert_eq!(rasterize_layout(&page, &Alphabet::flamingo(), 0.0), Err(TemplateError::InvalidCell));
    }

    #[test]
    fn exact_placement_is_found() {
        let t = mask(3, 4, &[0, 0, 0, 0, 0, 1, 2, 0, 0, 2, 1, 0]);
        let q = mask(2, 2, &[1, 2, 2, 1]);
        let s = ssd_match(&q, &t).unwrap();
        assert_eq!((s.best_row, s.best_col, s.best_score), (1, 1, 0.0));
        let n = ncc_match(&q, &t).unwrap();
        assert_eq!((n.best_row, n.best_col), (1, 1));
        assert!((n.best_score - 1.0).abs() < 1e-12);
        assert_eq!(n.best_bbox(4.0), BBox::new(4.0, 4.0, 12.0, 12.0).unwrap());
    }

    #[test]
    fn degenerate_inputs() {
        let t = mask(2, 2, &[1, 1, 1, 1]);
        assert_eq!(ssd_match(&mask(3, 1, &[1, 1, 1]), &t).unwrap_err(), TemplateError::NoValidPosition);
        assert_eq!(ncc_match(&mask(1, 1, &[1]), &t).unwrap_err(), TemplateError::AllWindowsDegenerate);
        assert_eq!(ncc_match(&mask(1, 2, &[1, 2]), &t).unwrap_err(), TemplateError::AllWindowsDegenerate);
    }

    proptest! {
        #[test]
        fn ncc_matches_definition(
            t in prop::collection::vec(0u32..3, 36),
            q in prop::collection::vec(0u32..3, 6),
        ) {
            let t = mask(6, 6, &t);
            let q = mask(2, 3, &q);
            match ncc_match(&q, &t) {
                Ok(m) => {
                    for r in 0..m.map.rows {
                        for c in 0..m.map.cols {
                            let got = m.map.scores[r * m.map.cols + c];
                            match (got, brute_ncc(&q, &t, r, c)) {
                                (Some(a), Some(b)) => prop_assert!((a - b.clamp(-1.0, 1.0)).abs() < 1e-9),
                                (None, None) => {}
                                (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
                            }
                        }
                    }
                }
                Err(e) => prop_assert_eq!(e, TemplateError::AllWindowsDegenerate),
            }
        }

        #[test]
        fn ssd_is_zero_only_for_identical_windows(t in prop::collection::vec(0u32..3, 25), r in 0usize..3, c in 0usize..3) {
            let t = mask(5, 5, &t);
            let q = mask(3, 3, &(0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| t.at(r + i, c + j)).collect::<Vec<_>>());
            let m = ssd_match(&q, &t).unwrap();
            prop_assert_eq!(m.map.scores[r * m.map.cols + c], Some(0.0));
            prop_assert_eq!(m.best_score, 0.0);
        }
    }
}
