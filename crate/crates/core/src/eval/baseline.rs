//! Turn template-match score maps into scored detections so the baselines
//! can be evaluated with the same metrics as the layout-string matcher.

use serde::{Deserialize, Serialize};

use super::metrics::Detection;
use super::template::{ncc_match, rasterize_elements, rasterize_layout, ssd_match, TemplateError, DEFAULT_CELL};
use crate::layout::{Alphabet, Page, Snippet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Ssd,
    Ncc,
}

impl std::str::FromStr for BaselineMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ssd" => Ok(Self::Ssd),
            "ncc" => Ok(Self::Ncc),
            other => Err(format!("unknown baseline `{other}` (expected ssd or ncc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub cell: f64,
    /// NCC: minimum correlation. SSD: maximum mean squared difference per cell.
    pub accept: f64,
}

impl BaselineParams {
    pub fn default_for(method: BaselineMethod) -> Self {
        Self {
            cell: DEFAULT_CELL,
            accept: match method {
                BaselineMethod::Ncc => 0.8,
                BaselineMethod::Ssd => 0.1,
            },
        }
    }
}

/// Slide the query's kind mask over the target page and emit a detection
/// for every accepted position.
///
/// Confidence is the correlation (clamped at 0) for NCC and
/// `1 / (1 + mean squared difference)` for SSD.
pub fn baseline_detections(
    query: &Snippet,
    target: &Page,
    alphabet: &Alphabet,
    method: BaselineMethod,
    params: &BaselineParams,
) -> Result<Vec<Detection>, TemplateError> {
    let q = rasterize_elements(&query.elements, &query.bbox, alphabet, params.cell)?;
    let t = rasterize_layout(target, alphabet, params.cell)?;
    let n = (q.rows * q.cols) as f64;
    let (m, accepted) = match method {
        BaselineMethod::Ssd => {
            let m = ssd_match(&q, &t)?;
            let acc = m.accepted(|s| s / n <= params.accept);
            let acc = acc.into_iter().map(|(r, c, s)| (r, c, 1.0 / (1.0 + s / n))).collect::<Vec<_>>();
            (m, acc)
        }
        BaselineMethod::Ncc => {
            let m = ncc_match(&q, &t)?;
            let acc = m.accepted(|s| s >= params.accept);
            let acc = acc.into_iter().map(|(r, c, s)| (r, c, s.max(0.0))).collect::<Vec<_>>();
            (m, acc)
        }
    };
    Ok(accepted
        .into_iter()
        .map(|(r, c, score)| Detection {
            bbox: m.window_bbox(r, c, params.cell),
            score: score.clamp(0.0, 1.0),
        })
        .collect())
}
