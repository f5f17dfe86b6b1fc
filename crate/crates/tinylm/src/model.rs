//! Forward pass and hand-written backward pass.
//!
//! Block structure (pre-norm):
//!
//! ```text
//! x = x + Dropout(Attn(LN1(x)) · Wo)
//! x = x + Dropout(GELU(LN2(x) · W_in) · W_out)
//! logits = LNf(x) · Head
//! ```
//!
//! Attention is causal with RoPE applied to queries and keys. All matrices are
//! bias-free; layer norms carry gain and bias.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::math::{
    acc_input_grad, acc_weight_grad, dot, gelu, gelu_grad, layer_norm, layer_norm_backward, matmul,
    matmul_bt, softmax_prefix, NormCache,
};
use crate::rope::RopeTable;
use crate::{ModelError, Scalar, TinyLmParams};

/// Row-major `rows × vocab` matrix of next-token logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<F> {
    pub rows: usize,
    pub vocab: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Logits<F> {
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.vocab..(i + 1) * self.vocab]
    }
}

/// Eval-mode forward pass with positions starting at 0.
pub fn forward<F: Scalar>(params: &TinyLmParams<F>, ids: &[u32]) -> Result<Logits<F>, ModelError> {
    forward_at(params, ids, 0)
}

/// Eval-mode forward pass with the first token placed at `pos_offset`.
pub fn forward_at<F: Scalar>(
    params: &TinyLmParams<F>,
    ids: &[u32],
    pos_offset: usize,
) -> Result<Logits<F>, ModelError> {
    forward_cached(params, ids, pos_offset, None).map(|(logits, _)| logits)
}

pub(crate) fn check_ids<F: Scalar>(params: &TinyLmParams<F>, ids: &[u32]) -> Result<(), ModelError> {
    let cfg = params.config();
    if ids.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if ids.len() > cfg.context_len {
        return Err(ModelError::SequenceTooLong {
            len: ids.len(),
            context_len: cfg.context_len,
        });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(ModelError::InvalidToken {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    Ok(())
}

pub(crate) struct BlockCache<F> {
    ln1: NormCache<F>,
    h1: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    probs: Vec<F>,
    attn_mask: Option<Vec<F>>,
    o: Vec<F>,
    resid_mask: Option<Vec<F>>,
    ln2: NormCache<F>,
    h2: Vec<F>,
    z: Vec<F>,
    g: Vec<F>,
    ffn_mask: Option<Vec<F>>,
}

pub(crate) struct Cache<F> {
    ids: Vec<u32>,
    rope: RopeTable<F>,
    blocks: Vec<BlockCache<F>>,
    lnf: NormCache<F>,
    hf: Vec<F>,
}

fn dropout_mask<F: Scalar>(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<F> {
    let keep = F::lit(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.random::<f64>() < p { F::zero() } else { keep })
        .collect()
}

fn maybe_mask<F: Scalar>(len: usize, p: f64, rng: &mut Option<&mut ChaCha8Rng>) -> Option<Vec<F>> {
    match rng {
        Some(r) if p > 0.0 => Some(dropout_mask(len, p, r)),
        _ => None,
    }
}

/// Forward pass keeping every activation needed by [`backward`]. Dropout is
/// active only when `rng` is given.
pub(crate) fn forward_cached<F: Scalar>(
    params: &TinyLmParams<F>,
    ids: &[u32],
    pos_offset: usize,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Logits<F>, Cache<F>), ModelError> {
    check_ids(params, ids)?;
    let cfg = params.config();
    let lay = params.layout();
    let w = params.as_slice();
    let t = ids.len();
    let d = cfg.n_embed;
    let nh = cfg.num_heads;
    let hs = cfg.head_size();
    let fw = cfg.ffn_width();
    let vocab = cfg.vocab_size;
    let scale = F::lit(1.0 / (hs as f64).sqrt());
    let rope = RopeTable::new(pos_offset, t, cfg.rope_dim, cfg.rope_base);

    let emb = &w[lay.tok_emb.clone()];
    let mut x = Vec::with_capacity(t * d);
    for &id in ids {
        let id = id as usize;
        x.extend_from_slice(&emb[id * d..(id + 1) * d]);
    }

    let mut blocks = Vec::with_capacity(cfg.num_blocks);
    for bl in &lay.blocks {
        let mut h1 = vec![F::zero(); t * d];
        let ln1 = layer_norm(&x, &w[bl.ln1_g.clone()], &w[bl.ln1_b.clone()], t, d, cfg.norm_eps, &mut h1);
        let mut q = vec![F::zero(); t * d];
        let mut k = vec![F::zero(); t * d];
        let mut v = vec![F::zero(); t * d];
        matmul(&h1, &w[bl.wq.clone()], t, d, d, &mut q);
        matmul(&h1, &w[bl.wk.clone()], t, d, d, &mut k);
        matmul(&h1, &w[bl.wv.clone()], t, d, d, &mut v);
        for r in 0..t {
            for head in 0..nh {
                let span = r * d + head * hs..r * d + (head + 1) * hs;
                rope.rotate(&mut q[span.clone()], r);
                rope.rotate(&mut k[span], r);
            }
        }

        let mut probs = vec![F::zero(); nh * t * t];
        let attn_mask = maybe_mask::<F>(nh * t * t, cfg.attn_dropout, &mut rng);
        let mut o = vec![F::zero(); t * d];
        for head in 0..nh {
            let off = head * hs;
            for r in 0..t {
                let qr = &q[r * d + off..r * d + off + hs];
                let base = (head * t + r) * t;
                let row = &mut probs[base..base + t];
                for u in 0..=r {
                    row[u] = dot(qr, &k[u * d + off..u * d + off + hs]) * scale;
                }
                softmax_prefix(row, r + 1);
                let out = &mut o[r * d + off..r * d + off + hs];
                for u in 0..=r {
                    let mut p = row[u];
                    if let Some(m) = &attn_mask {
                        p *= m[base + u];
                    }
                    if p == F::zero() {
                        continue;
                    }
                    for (ov, &vv) in out.iter_mut().zip(&v[u * d + off..u * d + off + hs]) {
                        *ov += p * vv;
                    }
                }
            }
        }

        let mut a = vec![F::zero(); t * d];
        matmul(&o, &w[bl.wo.clone()], t, d, d, &mut a);
        let resid_mask = maybe_mask::<F>(t * d, cfg.resid_dropout, &mut rng);
        if let Some(m) = &resid_mask {
            a.iter_mut().zip(m).for_each(|(av, &mv)| *av *= mv);
        }
        x.iter_mut().zip(&a).for_each(|(xv, &av)| *xv += av);

        let mut h2 = vec![F::zero(); t * d];
        let ln2 = layer_norm(&x, &w[bl.ln2_g.clone()], &w[bl.ln2_b.clone()], t, d, cfg.norm_eps, &mut h2);
        let mut z = vec![F::zero(); t * fw];
        matmul(&h2, &w[bl.w_in.clone()], t, d, fw, &mut z);
        let g: Vec<F> = z.iter().map(|&zv| gelu(zv)).collect();
        let mut fo = vec![F::zero(); t * d];
        matmul(&g, &w[bl.w_out.clone()], t, fw, d, &mut fo);
        let ffn_mask = maybe_mask::<F>(t * d, cfg.ffn_dropout, &mut rng);
        if let Some(m) = &ffn_mask {
            fo.iter_mut().zip(m).for_each(|(fv, &mv)| *fv *= mv);
        }
        x.iter_mut().zip(&fo).for_each(|(xv, &fv)| *xv += fv);

        blocks.push(BlockCache {
            ln1,
            h1,
            q,
            k,
            v,
            probs,
            attn_mask,
            o,
            resid_mask,
            ln2,
            h2,
            z,
            g,
            ffn_mask,
        });
    }

    let mut hf = vec![F::zero(); t * d];
    let lnf = layer_norm(&x, &w[lay.lnf_g.clone()], &w[lay.lnf_b.clone()], t, d, cfg.norm_eps, &mut hf);
    let mut logits = vec![F::zero(); t * vocab];
    match &lay.head {
        Some(head) => matmul(&hf, &w[head.clone()], t, d, vocab, &mut logits),
        None => matmul_bt(&hf, emb, t, d, vocab, &mut logits),
    }

    Ok((
        Logits {
            rows: t,
            vocab,
            data: logits,
        },
        Cache {
            ids: ids.to_vec(),
            rope,
            blocks,
            lnf,
            hf,
        },
    ))
}

fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
}

/// Accumulates parameter gradients of `Σ dlogits ⊙ logits` into `grads`.
pub(crate) fn backward<F: Scalar>(params: &TinyLmParams<F>, cache: &Cache<F>, dlogits: &[F], grads: &mut [F]) {
    let cfg = params.config();
    let lay = params.layout();
    let w = params.as_slice();
    let t = cache.ids.len();
    let d = cfg.n_embed;
    let nh = cfg.num_heads;
    let hs = cfg.head_size();
    let fw = cfg.ffn_width();
    let vocab = cfg.vocab_size;
    let scale = F::lit(1.0 / (hs as f64).sqrt());
    debug_assert_eq!(dlogits.len(), t * vocab);
    debug_assert_eq!(grads.len(), w.len());

    let mut dhf = vec![F::zero(); t * d];
    match &lay.head {
        Some(head) => {
            acc_weight_grad(&cache.hf, dlogits, t, d, vocab, &mut grads[head.clone()]);
            acc_input_grad(dlogits, &w[head.clone()], t, d, vocab, &mut dhf);
        }
        None => {
            acc_weight_grad(dlogits, &cache.hf, t, vocab, d, &mut grads[lay.tok_emb.clone()]);
            matmul(dlogits, &w[lay.tok_emb.clone()], t, vocab, d, &mut dhf);
        }
    }

    let mut dgain = vec![F::zero(); d];
    let mut dbias = vec![F::zero(); d];
    let mut dx = vec![F::zero(); t * d];
    layer_norm_backward(&cache.lnf, &w[lay.lnf_g.clone()], &dhf, t, d, &mut dgain, &mut dbias, &mut dx);
    add_into(&mut grads[lay.lnf_g.clone()], &dgain);
    add_into(&mut grads[lay.lnf_b.clone()], &dbias);

    for (bl, bc) in lay.blocks.iter().zip(&cache.blocks).rev() {
        // Feed-forward branch.
        let mut dfo = dx.clone();
        if let Some(m) = &bc.ffn_mask {
            dfo.iter_mut().zip(m).for_each(|(g, &mv)| *g *= mv);
        }
        acc_weight_grad(&bc.g, &dfo, t, fw, d, &mut grads[bl.w_out.clone()]);
        let mut dz = vec![F::zero(); t * fw];
        acc_input_grad(&dfo, &w[bl.w_out.clone()], t, fw, d, &mut dz);
        dz.iter_mut().zip(&bc.z).for_each(|(g, &zv)| *g *= gelu_grad(zv));
        acc_weight_grad(&bc.h2, &dz, t, d, fw, &mut grads[bl.w_in.clone()]);
        let mut dh2 = vec![F::zero(); t * d];
        acc_input_grad(&dz, &w[bl.w_in.clone()], t, d, fw, &mut dh2);
        dgain.fill(F::zero());
        dbias.fill(F::zero());
        layer_norm_backward(&bc.ln2, &w[bl.ln2_g.clone()], &dh2, t, d, &mut dgain, &mut dbias, &mut dx);
        add_into(&mut grads[bl.ln2_g.clone()], &dgain);
        add_into(&mut grads[bl.ln2_b.clone()], &dbias);

        // Attention branch.
        let mut da = dx.clone();
        if let Some(m) = &bc.resid_mask {
            da.iter_mut().zip(m).for_each(|(g, &mv)| *g *= mv);
        }
        acc_weight_grad(&bc.o, &da, t, d, d, &mut grads[bl.wo.clone()]);
        let mut d_o = vec![F::zero(); t * d];
        acc_input_grad(&da, &w[bl.wo.clone()], t, d, d, &mut d_o);

        let mut dq = vec![F::zero(); t * d];
        let mut dk = vec![F::zero(); t * d];
        let mut dv = vec![F::zero(); t * d];
        let mut dp = vec![F::zero(); t];
        for head in 0..nh {
            let off = head * hs;
            for r in 0..t {
                let base = (head * t + r) * t;
                let p = &bc.probs[base..base + t];
                let dor = &d_o[r * d + off..r * d + off + hs];
                for u in 0..=r {
                    let vu = &bc.v[u * d + off..u * d + off + hs];
                    let mut pd = p[u];
                    let mut g = dot(dor, vu);
                    if let Some(m) = &bc.attn_mask {
                        pd *= m[base + u];
                        g *= m[base + u];
                    }
                    dp[u] = g;
                    if pd != F::zero() {
                        for (dvv, &gv) in dv[u * d + off..u * d + off + hs].iter_mut().zip(dor) {
                            *dvv += pd * gv;
                        }
                    }
                }
                let s: F = (0..=r).map(|u| p[u] * dp[u]).sum();
                for u in 0..=r {
                    let ds = p[u] * (dp[u] - s) * scale;
                    if ds == F::zero() {
                        continue;
                    }
                    for j in 0..hs {
                        dq[r * d + off + j] += ds * bc.k[u * d + off + j];
                        dk[u * d + off + j] += ds * bc.q[r * d + off + j];
                    }
                }
            }
        }
        for r in 0..t {
            for head in 0..nh {
                let span = r * d + head * hs..r * d + (head + 1) * hs;
                cache.rope.rotate_back(&mut dq[span.clone()], r);
                cache.rope.rotate_back(&mut dk[span], r);
            }
        }
        acc_weight_grad(&bc.h1, &dq, t, d, d, &mut grads[bl.wq.clone()]);
        acc_weight_grad(&bc.h1, &dk, t, d, d, &mut grads[bl.wk.clone()]);
        acc_weight_grad(&bc.h1, &dv, t, d, d, &mut grads[bl.wv.clone()]);
        let mut dh1 = vec![F::zero(); t * d];
        acc_input_grad(&dq, &w[bl.wq.clone()], t, d, d, &mut dh1);
        acc_input_grad(&dk, &w[bl.wk.clone()], t, d, d, &mut dh1);
        acc_input_grad(&dv, &w[bl.wv.clone()], t, d, d, &mut dh1);
        dgain.fill(F::zero());
        dbias.fill(F::zero());
        layer_norm_backward(&bc.ln1, &w[bl.ln1_g.clone()], &dh1, t, d, &mut dgain, &mut dbias, &mut dx);
        add_into(&mut grads[bl.ln1_g.clone()], &dgain);
        add_into(&mut grads[bl.ln1_b.clone()], &dbias);
    }

    let demb = &mut grads[lay.tok_emb.clone()];
    for (r, &id) in cache.ids.iter().enumerate() {
        let id = id as usize;
        add_into(&mut demb[id * d..(id + 1) * d], &dx[r * d..(r + 1) * d]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{init_params, TinyLmConfig};

    fn model() -> TinyLmParams<f64> {
        init_params(&TinyLmConfig::new(13, 16, 2, 4, 12), 5).unwrap()
    }

    #[test]
    fn single_token_gives_finite_row() {
        let logits = forward(&model(), &[3]).unwrap();
        assert_eq!((logits.rows, logits.vocab), (1, 13));
        assert!(logits.data.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn appending_tokens_leaves_prefix_logits_unchanged() {
        let p = model();
        let a = forward(&p, &[1, 2, 3]).unwrap();
        let b = forward(&p, &[1, 2, 3, 9, 4]).unwrap();
        assert_eq!(&a.data[..], &b.data[..3 * 13]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = model();
        assert!(matches!(forward(&p, &[]), Err(ModelError::EmptySequence)));
        assert!(matches!(forward(&p, &[13]), Err(ModelError::InvalidToken { id: 13, .. })));
        assert!(matches!(
            forward(&p, &[0; 13]),
            Err(ModelError::SequenceTooLong { len: 13, context_len: 12 })
        ));
    }

    #[test]
    fn dropout_gradients_match_finite_differences_with_fixed_masks() {
        use crate::loss::nll_sum_and_grad;
        use rand::SeedableRng;
        let cfg = TinyLmConfig {
            attn_dropout: 0.2,
            ffn_dropout: 0.3,
            resid_dropout: 0.25,
            ..TinyLmConfig::new(7, 8, 1, 2, 8)
        };
        let p: TinyLmParams<f64> = crate::init_params_with_std(&cfg, 2, 0.3).unwrap();
        let ids = [1u32, 5, 2, 6, 0];
        let loss = |q: &TinyLmParams<f64>| {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let (logits, cache) = forward_cached(q, &ids[..4], 0, Some(&mut rng)).unwrap();
            let mut dl = vec![0.0; logits.data.len()];
            let l = nll_sum_and_grad(&logits, &ids[1..], 1.0, &mut dl).unwrap();
            let mut g = vec![0.0; q.len()];
            backward(q, &cache, &dl, &mut g);
            (l, g)
        };
        let (_, grads) = loss(&p);
        let mut probe = p.clone();
        for i in (0..p.len()).step_by(3) {
            let orig = probe.as_slice()[i];
            probe.as_mut_slice()[i] = orig + 1e-5;
            let plus = loss(&probe).0;
            probe.as_mut_slice()[i] = orig - 1e-5;
            let minus = loss(&probe).0;
            probe.as_mut_slice()[i] = orig;
            let fd = (plus - minus) / 2e-5;
            let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-7);
            assert!(rel < 1e-4, "param {i}: {fd} vs {}", grads[i]);
        }
    }

    #[test]
    fn tied_head_uses_embedding() {
        let mut cfg = TinyLmConfig::new(13, 16, 1, 4, 12);
        cfg.tied_embeddings = true;
        let p: TinyLmParams<f64> = init_params(&cfg, 1).unwrap();
        assert!(p.tensor("head").is_none());
        let logits = forward(&p, &[1, 5]).unwrap();
        assert!(logits.data.iter().all(|x| x.is_finite()));
    }
}
