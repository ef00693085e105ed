//! Forward-only reference of a multimodal query/target attention fusion.
//!
//! Six token sequences (visual, textual and spatial, for the query snippet
//! and the target page) are padded to a common length, fused with
//! symmetric attention into an `L x 5 d_out` volume, projected onto an
//! `L`-plane spatial grid and passed through four 1x1 convolution heads.
//! There is no training here: weights come from a seeded initializer or a
//! tensor exchange file.

pub mod attention;
pub mod check;
pub mod config;
pub mod embed;
pub mod heads;
pub mod matrix;
pub mod tensors;
pub mod weights;

use thiserror::Error;

pub use attention::{
    fuse, mha_forward, mha_forward_traced, symmetric_attention, AttentionTrace, FuseWeights, FusionInputs, MhaWeights,
    SymmetricWeights,
};
pub use config::FusionConfig;
pub use embed::{stub_embed, EmbeddingProvider, Modality, StubEmbedder, TensorEmbeddings};
pub use heads::{leaky_relu, project_reshape, pyramid_heads, Conv1x1, FeatureVolume};
pub use matrix::{Linear, Matrix};
pub use weights::FusionWeights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("sequence of {0} tokens exceeds maximum length {1}")]
    TooLong(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("tensor file: {0}")]
    TensorFile(String),
}

/// A padded `L x d` token sequence; rows at or beyond `valid_len` are zero
/// padding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeq {
    pub tokens: Matrix,
    pub valid_len: usize,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.rows
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols
    }

    pub fn is_well_formed(&self) -> bool {
        self.valid_len <= self.len()
            && self.tokens.data.iter().all(|v| v.is_finite())
            && (self.valid_len..self.len()).all(|r| self.tokens.row(r).iter().all(|&v| v == 0.0))
    }
}

/// Zero-pad `raw` (n x d) to `seq_len` rows.
pub fn pad_sequence(raw: &Matrix, seq_len: usize) -> Result<TokenSeq, FusionError> {
    if raw.rows > seq_len {
        return Err(FusionError::TooLong(raw.rows, seq_len));
    }
    let mut tokens = Matrix::zeros(seq_len, raw.cols);
    tokens.data[..raw.data.len()].copy_from_slice(&raw.data);
    Ok(TokenSeq {
        tokens,
        valid_len: raw.rows,
    })
}

/// Every stage of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionVolume {
    pub f_sim: Matrix,
    pub f_feat: FeatureVolume,
    pub pyramid: Vec<FeatureVolume>,
}

/// Fuse, project and run the pyramid heads.
pub fn forward(x: &FusionInputs, w: &FusionWeights, cfg: &FusionConfig) -> Result<FusionVolume, FusionError> {
    cfg.validate()?;
    let f_sim = fuse(x, &w.fuse, cfg)?;
    let f_feat = project_reshape(&f_sim, &w.projection, cfg)?;
    let pyramid = pyramid_heads(&f_feat, &w.pyramid, cfg.leaky_slope)?;
    Ok(FusionVolume { f_sim, f_feat, pyramid })
}
