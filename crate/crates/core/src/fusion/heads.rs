//! Projection of the fused volume onto a spatial grid and the 1x1
//! convolution pyramid.

use super::config::FusionConfig;
use super::matrix::{Linear, Matrix};
use super::FusionError;

/// `planes` feature planes of `h x w`, row-major; plane `l` is row `l` of `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub planes: usize,
    pub h: usize,
    pub w: usize,
    pub data: Matrix,
}

impl FeatureVolume {
    pub fn plane(&self, l: usize) -> &[f64] {
        self.data.row(l)
    }

    pub fn at(&self, l: usize, y: usize, x: usize) -> f64 {
        self.data.get(l, y * self.w + x)
    }
}

/// Per-row linear map of the fused volume to `grid_h * grid_w` values,
/// each row then read as one `grid_h x grid_w` plane.
pub fn project_reshape(f_sim: &Matrix, proj: &Linear, cfg: &FusionConfig) -> Result<FeatureVolume, FusionError> {
    if proj.in_dim() != f_sim.cols || proj.out_dim() != cfg.grid_h * cfg.grid_w || proj.bias.len() != proj.out_dim() {
        return Err(FusionError::ShapeMismatch(format!(
            "projection {}x{} does not map {} features onto a {}x{} grid",
            proj.in_dim(),
            proj.out_dim(),
            f_sim.cols,
            cfg.grid_h,
            cfg.grid_w
        )));
    }
    Ok(FeatureVolume {
        planes: f_sim.rows,
        h: cfg.grid_h,
        w: cfg.grid_w,
        data: proj.forward(f_sim),
    })
}

/// 1x1 convolution: `weight` is `out_channels x in_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1x1 {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Apply each head to the volume (its planes are the input channels),
/// followed by LeakyReLU.
pub fn pyramid_heads(feat: &FeatureVolume, heads: &[Conv1x1], slope: f64) -> Result<Vec<FeatureVolume>, FusionError> {
    heads
        .iter()
        .map(|head| {
            if head.weight.cols != feat.planes || head.bias.len() != head.weight.rows {
                return Err(FusionError::ShapeMismatch(format!(
                    "conv head {}x{} does not take {} channels",
                    head.weight.rows, head.weight.cols, feat.planes
                )));
            }
            let mut out = head.weight.matmul(&feat.data);
            for c in 0..out.rows {
                let b = head.bias[c];
                for v in out.row_mut(c) {
                    *v = leaky_relu(*v + b, slope);
                }
            }
            Ok(FeatureVolume {
                planes: head.weight.rows,
                h: feat.h,
                w: feat.w,
                data: out,
            })
        })
        .collect()
}
