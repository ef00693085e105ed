//! Embedding providers. The stub provider hashes content into deterministic
//! unit vectors; [`TensorEmbeddings`] serves precomputed encoder outputs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::attention::FusionInputs;
use super::config::FusionConfig;
use super::matrix::Matrix;
use super::tensors::Tensor;
use super::{pad_sequence, FusionError};
use crate::layout::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Text,
    Spatial,
}

impl Modality {
    pub fn dim(self, cfg: &FusionConfig) -> usize {
        match self {
            Modality::Visual => cfg.d_vis,
            Modality::Text => cfg.d_txt,
            Modality::Spatial => cfg.d_spa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Target,
}

pub trait EmbeddingProvider {
    /// Raw (unpadded) tokens for one modality of one side.
    fn embed(&self, side: Side, modality: Modality, elements: &[Element], cfg: &FusionConfig)
        -> Result<Matrix, FusionError>;
}

/// One unit-norm vector of width `d` per item, seeded by a hash of the
/// item's content and `seed`.
pub fn stub_embed(items: &[String], d: usize, seed: u64) -> Matrix {
    let mut out = Matrix::zeros(items.len(), d);
    for (i, item) in items.iter().enumerate() {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(item.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let row = out.row_mut(i);
        let mut norm = 0.0;
        while norm == 0.0 {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// Stub provider: visual and spatial tokens per element (kind plus box,
/// box only), text tokens per element carrying text.
#[derive(Debug, Clone, Copy)]
pub struct StubEmbedder {
    pub seed: u64,
}

impl EmbeddingProvider for StubEmbedder {
    fn embed(
        &self,
        _side: Side,
        modality: Modality,
        elements: &[Element],
        cfg: &FusionConfig,
    ) -> Result<Matrix, FusionError> {
        let fmt_box = |e: &Element| format!("{:.3},{:.3},{:.3},{:.3}", e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1);
        let items: Vec<String> = match modality {
            Modality::Visual => elements.iter().map(|e| format!("vis:{}:{}", e.kind, fmt_box(e))).collect(),
            Modality::Spatial => elements.iter().map(|e| format!("spa:{}", fmt_box(e))).collect(),
            Modality::Text => elements
                .iter()
                .filter_map(|e| e.text.as_ref().map(|t| format!("txt:{t}")))
                .collect(),
        };
        Ok(stub_embed(&items, modality.dim(cfg), self.seed))
    }
}

/// Precomputed embeddings stored as tensors named `qv`, `qt`, `qs`, `tv`,
/// `tt`, `ts` (each `n x d`).
#[derive(Debug, Clone)]
pub struct TensorEmbeddings {
    pub tensors: BTreeMap<String, Tensor>,
}

impl EmbeddingProvider for TensorEmbeddings {
    fn embed(&self, side: Side, modality: Modality, _elements: &[Element], cfg: &FusionConfig) -> Result<Matrix, FusionError> {
        let name = format!(
            "{}{}",
            match side {
                Side::Query => 'q',
                Side::Target => 't',
            },
            match modality {
                Modality::Visual => 'v',
                Modality::Text => 't',
                Modality::Spatial => 's',
            }
        );
        let t = self
            .tensors
            .get(&name)
            .ok_or_else(|| FusionError::TensorFile(format!("missing embedding `{name}`")))?;
        let m = t.as_matrix()?;
        if m.cols != modality.dim(cfg) {
            return Err(FusionError::ShapeMismatch(format!(
                "embedding `{name}` has width {}, expected {}",
                m.cols,
                modality.dim(cfg)
            )));
        }
        Ok(m)
    }
}

/// Embed and pad all six sequences for a query snippet and a target page.
pub fn build_inputs(
    provider: &dyn EmbeddingProvider,
    query: &[Element],
    target: &[Element],
    cfg: &FusionConfig,
) -> Result<FusionInputs, FusionError> {
    let seq = |side, modality, elements| -> Result<_, FusionError> {
        pad_sequence(&provider.embed(side, modality, elements, cfg)?, cfg.seq_len)
    };
    Ok(FusionInputs {
        qv: seq(Side::Query, Modality::Visual, query)?,
        qt: seq(Side::Query, Modality::Text, query)?,
        qs: seq(Side::Query, Modality::Spatial, query)?,
        tv: seq(Side::Target, Modality::Visual, target)?,
        tt: seq(Side::Target, Modality::Text, target)?,
        ts: seq(Side::Target, Modality::Spatial, target)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::BBox;

    #[test]
    fn stub_vectors_are_unit_and_deterministic() {
        let items = vec!["a".to_string(), "b".to_string(), "a".to_string()];
        let m = stub_embed(&items, 16, 3);
        for r in 0..3 {
            let n: f64 = m.row(r).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.row(0), m.row(2));
        assert_ne!(m.row(0), m.row(1));
        assert_ne!(stub_embed(&items, 16, 4).row(0), m.row(0));
    }

    #[test]
    fn text_tokens_only_for_elements_with_text() {
        let cfg = FusionConfig::tiny();
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let els = vec![Element::new("text", b).with_text("Name"), Element::new("widget", b)];
        let x = build_inputs(&StubEmbedder { seed: 1 }, &els, &els[1..], &cfg).unwrap();
        assert_eq!((x.qv.valid_len, x.qt.valid_len, x.qs.valid_len), (2, 1, 2));
        assert_eq!((x.tv.valid_len, x.tt.valid_len, x.ts.valid_len), (1, 0, 1));
        assert!([&x.qv, &x.qt, &x.qs, &x.tv, &x.tt, &x.ts].iter().all(|s| s.len() == cfg.seq_len && s.is_well_formed()));
    }

    #[test]
    fn too_many_elements_is_an_error() {
        let cfg = FusionConfig::tiny();
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let els = vec![Element::new("text", b); cfg.seq_len + 1];
        assert!(matches!(build_inputs(&StubEmbedder { seed: 1 }, &els, &[], &cfg), Err(FusionError::TooLong(9, 8))));
    }

    #[test]
    fn tensor_embeddings_check_width() {
        let cfg = FusionConfig::tiny();
        let mut tensors = BTreeMap::new();
        for (name, d) in [("qv", cfg.d_vis), ("qt", cfg.d_txt), ("qs", cfg.d_spa), ("tv", cfg.d_vis), ("tt", cfg.d_txt)] {
            tensors.insert(name.to_string(), Tensor::from_matrix(&Matrix::zeros(2, d)));
        }
        let provider = TensorEmbeddings { tensors: tensors.clone() };
        assert!(matches!(build_inputs(&provider, &[], &[], &cfg), Err(FusionError::TensorFile(_))));
        tensors.insert("ts".into(), Tensor::from_matrix(&Matrix::zeros(2, cfg.d_spa + 1)));
        let provider = TensorEmbeddings { tensors };
        assert!(matches!(build_inputs(&provider, &[], &[], &cfg), Err(FusionError::ShapeMismatch(_))));
    }
}
