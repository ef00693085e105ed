//! Multi-head attention and the symmetric / co- / cross-attention fusion.

use super::config::FusionConfig;
use super::matrix::{Linear, Matrix};
use super::{FusionError, TokenSeq};

/// Weights of one attention direction: input projections for the query
/// sequence and the key/value sequence onto `d_attn`, followed by the usual
/// query/key/value/output projections.
#[derive(Debug, Clone, PartialEq)]
pub struct MhaWeights {
    pub q_in: Linear,
    pub kv_in: Linear,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
}

impl MhaWeights {
    pub fn d_attn(&self) -> usize {
        self.wq.out_dim()
    }

    fn check(&self, d_q: usize, d_kv: usize, n_heads: usize) -> Result<(), FusionError> {
        let d = self.d_attn();
        let ok = self.q_in.in_dim() == d_q
            && self.kv_in.in_dim() == d_kv
            && self.q_in.out_dim() == d
            && self.kv_in.out_dim() == d
            && [&self.wq, &self.wk, &self.wv, &self.wo]
                .iter()
                .all(|l| l.in_dim() == d && l.out_dim() == d && l.bias.len() == d)
            && n_heads > 0
            && d.is_multiple_of(n_heads);
        if ok {
            Ok(())
        } else {
            Err(FusionError::ShapeMismatch(format!(
                "attention weights do not fit query dim {d_q}, key/value dim {d_kv}, {n_heads} heads"
            )))
        }
    }
}

/// Result of an attention pass with its per-head probability tables
/// (`probs[h]` is `L_q x L_kv`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub output: Matrix,
    pub probs: Vec<Matrix>,
}

fn softmax_rows(scores: &mut Matrix, valid_cols: usize) {
    for r in 0..scores.rows {
        let row = scores.row_mut(r);
        if valid_cols == 0 {
            // nothing to attend to
            row.fill(0.0);
            continue;
        }
        let max = row[..valid_cols].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row[..valid_cols].iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row[..valid_cols].iter_mut() {
            *v /= sum;
        }
        row[valid_cols..].fill(0.0);
    }
}

/// Scaled dot-product multi-head attention of `query` over `kv`.
///
/// With `use_key_mask`, key/value rows at or beyond `kv.valid_len` get
/// zero attention (logits of minus infinity).
pub fn mha_forward_traced(
    query: &TokenSeq,
    kv: &TokenSeq,
    w: &MhaWeights,
    n_heads: usize,
    use_key_mask: bool,
) -> Result<AttentionTrace, FusionError> {
    w.check(query.dim(), kv.dim(), n_heads)?;
    let d = w.d_attn();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let qx = w.q_in.forward(&query.tokens);
    let kvx = w.kv_in.forward(&kv.tokens);
    let q = w.wq.forward(&qx);
    let k = w.wk.forward(&kvx);
    let v = w.wv.forward(&kvx);
    let valid_cols = if use_key_mask { kv.valid_len } else { kv.len() };

    let mut ctx = Matrix::zeros(query.len(), d);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = q.columns(h * dh, dh);
        let kh = k.columns(h * dh, dh);
        let vh = v.columns(h * dh, dh);
        let mut p = qh.matmul_t(&kh);
        p.data.iter_mut().for_each(|s| *s *= scale);
        softmax_rows(&mut p, valid_cols);
        let out = p.matmul(&vh);
        for r in 0..ctx.rows {
            ctx.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(out.row(r));
        }
        probs.push(p);
    }
    Ok(AttentionTrace {
        output: w.wo.forward(&ctx),
        probs,
    })
}

pub fn mha_forward(
    query: &TokenSeq,
    kv: &TokenSeq,
    w: &MhaWeights,
    n_heads: usize,
    use_key_mask: bool,
) -> Result<Matrix, FusionError> {
    mha_forward_traced(query, kv, w, n_heads, use_key_mask).map(|t| t.output)
}

/// The two attention directions of a symmetric attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricWeights {
    /// First sequence attends over the second.
    pub ab: MhaWeights,
    /// Second sequence attends over the first.
    pub ba: MhaWeights,
}

/// `[attend(a over b) | attend(b over a)]` along the feature axis.
///
/// With masking on, each half is zeroed on the rows that are padding of
/// the sequence that produced them, and the result's `valid_len` is the
/// longer of the two. Without masking every row is kept and treated as
/// valid.
pub fn symmetric_attention(
    a: &TokenSeq,
    b: &TokenSeq,
    w: &SymmetricWeights,
    cfg: &FusionConfig,
) -> Result<TokenSeq, FusionError> {
    if a.len() != b.len() {
        return Err(FusionError::ShapeMismatch(format!(
            "sequence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut ab = mha_forward(a, b, &w.ab, cfg.n_heads, cfg.use_key_mask)?;
    let mut ba = mha_forward(b, a, &w.ba, cfg.n_heads, cfg.use_key_mask)?;
    let valid_len = if cfg.use_key_mask {
        for r in a.valid_len..ab.rows {
            ab.row_mut(r).fill(0.0);
        }
        for r in b.valid_len..ba.rows {
            ba.row_mut(r).fill(0.0);
        }
        a.valid_len.max(b.valid_len)
    } else {
        a.len()
    };
    Ok(TokenSeq {
        tokens: Matrix::hconcat(&[&ab, &ba]),
        valid_len,
    })
}

/// The six modality sequences of a query snippet and a target page.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInputs {
    pub qv: TokenSeq,
    pub qt: TokenSeq,
    pub qs: TokenSeq,
    pub tv: TokenSeq,
    pub tt: TokenSeq,
    pub ts: TokenSeq,
}

/// Weights of the seven symmetric-attention blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FuseWeights {
    pub vv: SymmetricWeights,
    pub tt: SymmetricWeights,
    pub ss: SymmetricWeights,
    pub sq_vt: SymmetricWeights,
    pub sq_vt_tt: SymmetricWeights,
    pub st_vq: SymmetricWeights,
    pub st_vq_tq: SymmetricWeights,
}

/// Co-attention within each modality plus spatio-visual-textual
/// cross-attention in both directions, concatenated into an
/// `L x 5 d_out` volume.
pub fn fuse(x: &FusionInputs, w: &FuseWeights, cfg: &FusionConfig) -> Result<Matrix, FusionError> {
    let vv = symmetric_attention(&x.qv, &x.tv, &w.vv, cfg)?;
    let tt = symmetric_attention(&x.qt, &x.tt, &w.tt, cfg)?;
    let ss = symmetric_attention(&x.qs, &x.ts, &w.ss, cfg)?;
    let sq_vt = symmetric_attention(&x.qs, &x.tv, &w.sq_vt, cfg)?;
    let sq_vt_tt = symmetric_attention(&sq_vt, &x.tt, &w.sq_vt_tt, cfg)?;
    let st_vq = symmetric_attention(&x.ts, &x.qv, &w.st_vq, cfg)?;
    let st_vq_tq = symmetric_attention(&st_vq, &x.qt, &w.st_vq_tq, cfg)?;
    Ok(Matrix::hconcat(&[
        &vv.tokens,
        &tt.tokens,
        &ss.tokens,
        &sq_vt_tt.tokens,
        &st_vq_tq.tokens,
    ]))
}
