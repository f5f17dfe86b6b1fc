use std::ops::Range;

use crate::TinyLmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    /// Weight matrix; receives weight decay.
    Matrix,
    /// Matrix feeding the residual stream; initialized with a depth-scaled std.
    ResidualMatrix,
    NormGain,
    NormBias,
}

#[derive(Debug, Clone)]
pub struct TensorSpec {
    pub name: String,
    pub range: Range<usize>,
    pub shape: (usize, usize),
    pub kind: TensorKind,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockLayout {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub wq: Range<usize>,
    pub wk: Range<usize>,
    pub wv: Range<usize>,
    pub wo: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w_in: Range<usize>,
    pub w_out: Range<usize>,
}

/// Offsets of every tensor inside the flat parameter buffer.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub(crate) tok_emb: Range<usize>,
    pub(crate) blocks: Vec<BlockLayout>,
    pub(crate) lnf_g: Range<usize>,
    pub(crate) lnf_b: Range<usize>,
    pub(crate) head: Option<Range<usize>>,
    tensors: Vec<TensorSpec>,
    total: usize,
}

struct Builder {
    offset: usize,
    tensors: Vec<TensorSpec>,
}

impl Builder {
    fn take(&mut self, name: String, rows: usize, cols: usize, kind: TensorKind) -> Range<usize> {
        let range = self.offset..self.offset + rows * cols;
        self.offset = range.end;
        self.tensors.push(TensorSpec {
            name,
            range: range.clone(),
            shape: (rows, cols),
            kind,
        });
        range
    }
}

impl ParamLayout {
    pub fn new(config: &TinyLmConfig) -> Self {
        let d = config.n_embed;
        let f = config.ffn_width();
        let v = config.vocab_size;
        let mut b = Builder {
            offset: 0,
            tensors: Vec::new(),
        };
        let tok_emb = b.take("tok_emb".into(), v, d, TensorKind::Embedding);
        let blocks = (0..config.num_blocks)
            .map(|i| BlockLayout {
                ln1_g: b.take(format!("blocks.{i}.ln1.gain"), 1, d, TensorKind::NormGain),
                ln1_b: b.take(format!("blocks.{i}.ln1.bias"), 1, d, TensorKind::NormBias),
                wq: b.take(format!("blocks.{i}.attn.wq"), d, d, TensorKind::Matrix),
                wk: b.take(format!("blocks.{i}.attn.wk"), d, d, TensorKind::Matrix),
                wv: b.take(format!("blocks.{i}.attn.wv"), d, d, TensorKind::Matrix),
                wo: b.take(format!("blocks.{i}.attn.wo"), d, d, TensorKind::ResidualMatrix),
                ln2_g: b.take(format!("blocks.{i}.ln2.gain"), 1, d, TensorKind::NormGain),
                ln2_b: b.take(format!("blocks.{i}.ln2.bias"), 1, d, TensorKind::NormBias),
                w_in: b.take(format!("blocks.{i}.ffn.w_in"), d, f, TensorKind::Matrix),
                w_out: b.take(format!("blocks.{i}.ffn.w_out"), f, d, TensorKind::ResidualMatrix),
            })
            .collect();
        let lnf_g = b.take("lnf.gain".into(), 1, d, TensorKind::NormGain);
        let lnf_b = b.take("lnf.bias".into(), 1, d, TensorKind::NormBias);
        let head = (!config.tied_embeddings).then(|| b.take("head".into(), d, v, TensorKind::Matrix));
        ParamLayout {
            tok_emb,
            blocks,
            lnf_g,
            lnf_b,
            head,
            total: b.offset,
            tensors: b.tensors,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    /// Whether AdamW weight decay applies to a tensor.
    pub fn decays(kind: TensorKind) -> bool {
        matches!(kind, TensorKind::Matrix | TensorKind::ResidualMatrix)
    }
}
