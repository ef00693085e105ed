//! Fusion weights: seeded initialization and named-tensor conversion.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{FuseWeights, MhaWeights, SymmetricWeights};
use super::config::FusionConfig;
use super::heads::Conv1x1;
use super::matrix::{Linear, Matrix};
use super::tensors::Tensor;
use super::FusionError;

pub const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub fuse: FuseWeights,
    pub projection: Linear,
    pub pyramid: Vec<Conv1x1>,
}

struct Init(ChaCha8Rng);

impl Init {
    fn matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, self.vec(rows * cols))
    }

    fn vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.0.gen_range(-INIT_RANGE..=INIT_RANGE)).collect()
    }

    fn linear(&mut self, d_in: usize, d_out: usize) -> Linear {
        Linear {
            weight: self.matrix(d_in, d_out),
            bias: self.vec(d_out),
        }
    }

    fn mha(&mut self, d_q: usize, d_kv: usize, d: usize) -> MhaWeights {
        MhaWeights {
            q_in: self.linear(d_q, d),
            kv_in: self.linear(d_kv, d),
            wq: self.linear(d, d),
            wk: self.linear(d, d),
            wv: self.linear(d, d),
            wo: self.linear(d, d),
        }
    }

    fn symmetric(&mut self, d_a: usize, d_b: usize, d: usize) -> SymmetricWeights {
        SymmetricWeights {
            ab: self.mha(d_a, d_b, d),
            ba: self.mha(d_b, d_a, d),
        }
    }
}

/// Input dims `(first, second)` of each symmetric block, in field order.
fn block_dims(cfg: &FusionConfig) -> [(&'static str, usize, usize); 7] {
    let d_out = cfg.d_out();
    [
        ("vv", cfg.d_vis, cfg.d_vis),
        ("tt", cfg.d_txt, cfg.d_txt),
        ("ss", cfg.d_spa, cfg.d_spa),
        ("sq_vt", cfg.d_spa, cfg.d_vis),
        ("sq_vt_tt", d_out, cfg.d_txt),
        ("st_vq", cfg.d_spa, cfg.d_vis),
        ("st_vq_tq", d_out, cfg.d_txt),
    ]
}

impl FuseWeights {
    fn blocks(&self) -> [(&'static str, &SymmetricWeights); 7] {
        [
            ("vv", &self.vv),
            ("tt", &self.tt),
            ("ss", &self.ss),
            ("sq_vt", &self.sq_vt),
            ("sq_vt_tt", &self.sq_vt_tt),
            ("st_vq", &self.st_vq),
            ("st_vq_tq", &self.st_vq_tq),
        ]
    }

    fn blocks_mut(&mut self) -> [&mut SymmetricWeights; 7] {
        [
            &mut self.vv,
            &mut self.tt,
            &mut self.ss,
            &mut self.sq_vt,
            &mut self.sq_vt_tt,
            &mut self.st_vq,
            &mut self.st_vq_tq,
        ]
    }
}

impl FusionWeights {
    /// Uniform weights in `[-0.1, 0.1]` drawn in a fixed order from `seed`.
    pub fn random(cfg: &FusionConfig, seed: u64) -> Self {
        let mut init = Init(ChaCha8Rng::seed_from_u64(seed));
        let d = cfg.d_attn;
        let [vv, tt, ss, sq_vt, sq_vt_tt, st_vq, st_vq_tq] =
            block_dims(cfg).map(|(_, a, b)| init.symmetric(a, b, d));
        let projection = init.linear(cfg.fused_dim(), cfg.proj_dim);
        let pyramid = cfg
            .pyramid_channels
            .iter()
            .map(|&c| Conv1x1 {
                weight: init.matrix(c, cfg.seq_len),
                bias: init.vec(c),
            })
            .collect();
        Self {
            fuse: FuseWeights {
                vv,
                tt,
                ss,
                sq_vt,
                sq_vt_tt,
                st_vq,
                st_vq_tq,
            },
            projection,
            pyramid,
        }
    }

    /// Zero the weight matrices (not the biases) of every input projection.
    pub fn zero_input_projections(&mut self) {
        for block in self.fuse.blocks_mut() {
            for mha in [&mut block.ab, &mut block.ba] {
                mha.q_in.weight.data.fill(0.0);
                mha.kv_in.weight.data.fill(0.0);
            }
        }
    }

    /// Flatten into named tensors, e.g. `vv.ab.q_in.weight` or `pyramid.2.bias`.
    pub fn to_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        let mut put_linear = |name: String, l: &Linear| {
            out.insert(format!("{name}.weight"), Tensor::from_matrix(&l.weight));
            out.insert(format!("{name}.bias"), Tensor::vector(&l.bias));
        };
        for (block, sw) in self.fuse.blocks() {
            for (dir, m) in [("ab", &sw.ab), ("ba", &sw.ba)] {
                for (part, l) in mha_parts(m) {
                    put_linear(format!("{block}.{dir}.{part}"), l);
                }
            }
        }
        put_linear("projection".into(), &self.projection);
        for (i, h) in self.pyramid.iter().enumerate() {
            out.insert(format!("pyramid.{i}.weight"), Tensor::from_matrix(&h.weight));
            out.insert(format!("pyramid.{i}.bias"), Tensor::vector(&h.bias));
        }
        out
    }

    /// Rebuild from named tensors, checking every shape against `cfg`.
    pub fn from_tensors(tensors: &BTreeMap<String, Tensor>, cfg: &FusionConfig) -> Result<Self, FusionError> {
        let get = |name: &str| {
            tensors
                .get(name)
                .ok_or_else(|| FusionError::TensorFile(format!("missing tensor `{name}`")))
        };
        let linear = |name: &str, d_in: usize, d_out: usize| -> Result<Linear, FusionError> {
            Ok(Linear {
                weight: get(&format!("{name}.weight"))?.to_matrix(d_in, d_out)?,
                bias: get(&format!("{name}.bias"))?.to_vector(d_out)?,
            })
        };
        let d = cfg.d_attn;
        let mha = |prefix: &str, d_q: usize, d_kv: usize| -> Result<MhaWeights, FusionError> {
            Ok(MhaWeights {
                q_in: linear(&format!("{prefix}.q_in"), d_q, d)?,
                kv_in: linear(&format!("{prefix}.kv_in"), d_kv, d)?,
                wq: linear(&format!("{prefix}.wq"), d, d)?,
                wk: linear(&format!("{prefix}.wk"), d, d)?,
                wv: linear(&format!("{prefix}.wv"), d, d)?,
                wo: linear(&format!("{prefix}.wo"), d, d)?,
            })
        };
        let mut blocks = Vec::with_capacity(7);
        for (name, a, b) in block_dims(cfg) {
            blocks.push(SymmetricWeights {
                ab: mha(&format!("{name}.ab"), a, b)?,
                ba: mha(&format!("{name}.ba"), b, a)?,
            });
        }
        let [vv, tt, ss, sq_vt, sq_vt_tt, st_vq, st_vq_tq]: [SymmetricWeights; 7] =
            blocks.try_into().expect("seven blocks");
        let projection = linear("projection", cfg.fused_dim(), cfg.proj_dim)?;
        let pyramid = cfg
            .pyramid_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                Ok(Conv1x1 {
                    weight: get(&format!("pyramid.{i}.weight"))?.to_matrix(c, cfg.seq_len)?,
                    bias: get(&format!("pyramid.{i}.bias"))?.to_vector(c)?,
                })
            })
            .collect::<Result<_, FusionError>>()?;
        Ok(Self {
            fuse: FuseWeights {
                vv,
                tt,
                ss,
                sq_vt,
                sq_vt_tt,
                st_vq,
                st_vq_tq,
            },
            projection,
            pyramid,
        })
    }
}

fn mha_parts(m: &MhaWeights) -> [(&'static str, &Linear); 6] {
    [
        ("q_in", &m.q_in),
        ("kv_in", &m.kv_in),
        ("wq", &m.wq),
        ("wk", &m.wk),
        ("wv", &m.wv),
        ("wo", &m.wo),
    ]
}
