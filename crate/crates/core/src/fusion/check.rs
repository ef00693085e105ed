//! Self-check of the fusion reference: runs a forward pass at a given
//! profile and measures the structural invariants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::attention::{mha_forward_traced, symmetric_attention, FusionInputs, SymmetricWeights};
use super::config::FusionConfig;
use super::embed::stub_embed;
use super::matrix::Matrix;
use super::weights::FusionWeights;
use super::{forward, pad_sequence, FusionError, TokenSeq};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionCheckReport {
    pub f_sim_shape: [usize; 2],
    /// `[planes, grid_h, grid_w]`
    pub f_feat_shape: [usize; 3],
    /// `[channels, grid_h, grid_w]` per head.
    pub pyramid_shapes: Vec<[usize; 3]>,
    /// Largest `|sum(row) - 1|` over attention rows with something to attend to.
    pub max_row_sum_error: f64,
    pub min_probability: f64,
    /// Largest change of a valid output entry after scrambling padding rows.
    pub pad_invariance_diff: f64,
    /// Largest difference between `SA(b, a)` and `SA(a, b)` with halves swapped, tied weights.
    pub block_swap_diff: f64,
    pub deterministic: bool,
}

impl FusionCheckReport {
    pub fn shapes_match(&self, cfg: &FusionConfig) -> bool {
        self.f_sim_shape == [cfg.seq_len, cfg.fused_dim()]
            && self.f_feat_shape == [cfg.seq_len, cfg.grid_h, cfg.grid_w]
            && self.pyramid_shapes.len() == 4
            && self
                .pyramid_shapes
                .iter()
                .zip(cfg.pyramid_channels)
                .all(|(s, c)| *s == [c, cfg.grid_h, cfg.grid_w])
    }

    pub fn passed(&self, cfg: &FusionConfig) -> bool {
        self.shapes_match(cfg)
            && self.max_row_sum_error <= 1e-6
            && self.min_probability >= 0.0
            && self.pad_invariance_diff == 0.0
            && self.block_swap_diff <= 1e-9
            && self.deterministic
    }
}

fn random_seq(rng: &mut ChaCha8Rng, cfg: &FusionConfig, d: usize, tag: &str) -> Result<TokenSeq, FusionError> {
    let n = rng.gen_range(1..=cfg.seq_len);
    let items: Vec<String> = (0..n).map(|i| format!("{tag}:{i}:{}", rng.gen::<u64>())).collect();
    pad_sequence(&stub_embed(&items, d, 7), cfg.seq_len)
}

/// Random stub inputs with random valid lengths.
pub fn random_inputs(cfg: &FusionConfig, seed: u64) -> Result<FusionInputs, FusionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(FusionInputs {
        qv: random_seq(&mut rng, cfg, cfg.d_vis, "qv")?,
        qt: random_seq(&mut rng, cfg, cfg.d_txt, "qt")?,
        qs: random_seq(&mut rng, cfg, cfg.d_spa, "qs")?,
        tv: random_seq(&mut rng, cfg, cfg.d_vis, "tv")?,
        tt: random_seq(&mut rng, cfg, cfg.d_txt, "tt")?,
        ts: random_seq(&mut rng, cfg, cfg.d_spa, "ts")?,
    })
}

/// Fill padding rows with garbage.
pub fn scramble_padding(seq: &TokenSeq, seed: u64) -> TokenSeq {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = seq.clone();
    for r in seq.valid_len..seq.len() {
        for v in out.tokens.row_mut(r) {
            *v = rng.gen_range(-5.0..5.0);
        }
    }
    out
}

/// Largest difference between the valid rows of two symmetric-attention
/// outputs: first-half rows below `a_valid`, second-half rows below `b_valid`.
pub fn valid_region_diff(x: &Matrix, y: &Matrix, half: usize, a_valid: usize, b_valid: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..x.rows {
        for c in 0..x.cols {
            let valid = if c < half { r < a_valid } else { r < b_valid };
            if valid {
                worst = worst.max((x.get(r, c) - y.get(r, c)).abs());
            }
        }
    }
    worst
}

/// `SA(a, b)` with its two feature halves exchanged.
pub fn swap_halves(m: &Matrix) -> Matrix {
    let half = m.cols / 2;
    Matrix::hconcat(&[&m.columns(half, half), &m.columns(0, half)])
}

pub fn run_fusion_check(cfg: &FusionConfig, seed: u64) -> Result<FusionCheckReport, FusionError> {
    cfg.validate()?;
    let weights = FusionWeights::random(cfg, seed);
    let inputs = random_inputs(cfg, seed ^ 0x5eed)?;
    let volume = forward(&inputs, &weights, cfg)?;

    let trace = mha_forward_traced(&inputs.qv, &inputs.tv, &weights.fuse.vv.ab, cfg.n_heads, cfg.use_key_mask)?;
    let mut max_row_sum_error: f64 = 0.0;
    let mut min_probability = f64::INFINITY;
    for p in &trace.probs {
        for r in 0..p.rows {
            let row = p.row(r);
            max_row_sum_error = max_row_sum_error.max((row.iter().sum::<f64>() - 1.0).abs());
            min_probability = min_probability.min(row.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }

    let sa = symmetric_attention(&inputs.qv, &inputs.tv, &weights.fuse.vv, cfg)?;
    let scrambled = symmetric_attention(
        &scramble_padding(&inputs.qv, seed + 1),
        &scramble_padding(&inputs.tv, seed + 2),
        &weights.fuse.vv,
        cfg,
    )?;
    let pad_invariance_diff = if cfg.use_key_mask {
        valid_region_diff(&sa.tokens, &scrambled.tokens, cfg.d_attn, inputs.qv.valid_len, inputs.tv.valid_len)
    } else {
        0.0
    };

    let tied = SymmetricWeights {
        ab: weights.fuse.vv.ab.clone(),
        ba: weights.fuse.vv.ab.clone(),
    };
    let ab = symmetric_attention(&inputs.qv, &inputs.tv, &tied, cfg)?;
    let ba = symmetric_attention(&inputs.tv, &inputs.qv, &tied, cfg)?;
    let block_swap_diff = swap_halves(&ab.tokens).max_abs_diff(&ba.tokens);

    let again = symmetric_attention(&inputs.qv, &inputs.tv, &weights.fuse.vv, cfg)?;
    let deterministic = again.tokens.data.iter().zip(&sa.tokens.data).all(|(a, b)| a.to_bits() == b.to_bits());

    Ok(FusionCheckReport {
        f_sim_shape: [volume.f_sim.rows, volume.f_sim.cols],
        f_feat_shape: [volume.f_feat.planes, volume.f_feat.h, volume.f_feat.w],
        pyramid_shapes: volume.pyramid.iter().map(|p| [p.planes, p.h, p.w]).collect(),
        max_row_sum_error,
        min_probability,
        pad_invariance_diff,
        block_swap_diff,
        deterministic,
    })
}
