use serde::{Deserialize, Serialize};

use super::FusionError;

/// Dimension contract of the fusion forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Padded sequence length.
    pub seq_len: usize,
    pub d_vis: usize,
    pub d_txt: usize,
    pub d_spa: usize,
    /// Attention width of each direction; a symmetric block outputs twice this.
    pub d_attn: usize,
    pub n_heads: usize,
    pub proj_dim: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub pyramid_channels: [usize; 4],
    pub leaky_slope: f64,
    pub use_key_mask: bool,
}

impl FusionConfig {
    /// Full-size profile: 1024 tokens, 5120-wide fused volume, 64x64 grid.
    pub fn full() -> Self {
        Self {
            seq_len: 1024,
            d_vis: 1024,
            d_txt: 768,
            d_spa: 1024,
            d_attn: 512,
            n_heads: 4,
            proj_dim: 4096,
            grid_h: 64,
            grid_w: 64,
            pyramid_channels: [256, 512, 1024, 2048],
            leaky_slope: 0.1,
            use_key_mask: true,
        }
    }

    /// Small profile for tests and quick checks.
    pub fn tiny() -> Self {
        Self {
            seq_len: 8,
            d_vis: 12,
            d_txt: 10,
            d_spa: 6,
            d_attn: 8,
            n_heads: 2,
            proj_dim: 16,
            grid_h: 4,
            grid_w: 4,
            pyramid_channels: [2, 3, 4, 5],
            leaky_slope: 0.1,
            use_key_mask: true,
        }
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    /// Output width of one symmetric-attention block.
    pub fn d_out(&self) -> usize {
        2 * self.d_attn
    }

    /// Width of the concatenated five-branch volume.
    pub fn fused_dim(&self) -> usize {
        5 * self.d_out()
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: &str| Err(FusionError::InvalidConfig(m.to_string()));
        if self.n_heads == 0 || self.d_attn == 0 || !self.d_attn.is_multiple_of(self.n_heads) {
            return bad("d_attn must be a positive multiple of n_heads");
        }
        if self.proj_dim != self.grid_h * self.grid_w {
            return bad("proj_dim must equal grid_h * grid_w");
        }
        if [self.seq_len, self.d_vis, self.d_txt, self.d_spa].contains(&0) {
            return bad("sequence length and input dims must be positive");
        }
        if self.pyramid_channels.contains(&0) {
            return bad("pyramid channels must be positive");
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky slope must be finite");
        }
        Ok(())
    }
}
