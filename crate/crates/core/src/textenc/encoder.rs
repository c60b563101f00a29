//! The tiny-random contextual encoder: hashed subword embeddings,
//! sinusoidal positions and a stack of single-head self-attention blocks.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamGroup, ParamId, ParamStore, Var};

pub const CLS_ID: usize = 0;
pub const SEP_ID: usize = 1;
pub const MASK_ID: usize = 2;
const RESERVED: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyEncoderConfig {
    pub dim: usize,
    pub layers: usize,
    /// Rows of the hashed embedding table, including the reserved specials.
    pub buckets: usize,
    /// Longest subword piece in characters.
    pub piece_chars: usize,
    pub mask_token: String,
    pub seed: u64,
}

impl Default for TinyEncoderConfig {
    fn default() -> Self {
        Self { dim: 768, layers: 2, buckets: 4096, piece_chars: 6, mask_token: "[MASK]".into(), seed: 0 }
    }
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Word to subword-piece ids by fixed-length character chunks hashed into
/// the embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashTokenizer {
    buckets: usize,
    piece_chars: usize,
    mask_token: String,
    seed: u64,
}

impl HashTokenizer {
    pub fn pieces(&self, word: &str) -> Vec<usize> {
        if word == self.mask_token {
            return vec![MASK_ID];
        }
        let lower = word.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        if chars.is_empty() {
            return vec![self.bucket("")];
        }
        chars
            .chunks(self.piece_chars)
            .enumerate()
            .map(|(i, c)| {
                let s: String = c.iter().collect();
                if i == 0 {
                    self.bucket(&s)
                } else {
                    self.bucket(&format!("##{s}"))
                }
            })
            .collect()
    }

    fn bucket(&self, piece: &str) -> usize {
        RESERVED + (fnv1a(piece.as_bytes(), self.seed) % (self.buckets - RESERVED) as u64) as usize
    }

    pub fn mask_token(&self) -> &str {
        &self.mask_token
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Block {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TinyEncoder {
    pub config: TinyEncoderConfig,
    pub tokenizer: HashTokenizer,
    embed: ParamId,
    blocks: Vec<Block>,
}

pub(crate) fn init_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

/// Sinusoidal position table.
pub fn positions(len: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, dim), |(p, i)| {
        let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = p as f64 * rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl TinyEncoder {
    /// Register fresh weights under `prefix` in `store`, seeded from `config.seed`.
    pub fn new(config: TinyEncoderConfig, store: &mut ParamStore, prefix: &str) -> Self {
        assert!(config.dim > 0 && config.buckets > RESERVED && config.piece_chars > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.dim;
        let h = 2 * d;
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let embed = store.add(format!("{prefix}.embed"), ParamGroup::Encoder, init_matrix(&mut rng, config.buckets, d, 1.0));
        let mut blocks = Vec::new();
        for l in 0..config.layers {
            let mut add = |name: &str, r: usize, c: usize, std: f64| {
                let v = if std == 0.0 { Array2::zeros((r, c)) } else { init_matrix(&mut rng, r, c, std) };
                store.add(format!("{prefix}.layer{l}.{name}"), ParamGroup::Encoder, v)
            };
            blocks.push(Block {
                wq: add("wq", d, d, fan(d)),
                wk: add("wk", d, d, fan(d)),
                wv: add("wv", d, d, fan(d)),
                wo: add("wo", d, d, fan(d)),
                w1: add("w1", d, h, fan(d)),
                b1: add("b1", 1, h, 0.0),
                w2: add("w2", h, d, fan(h)),
                b2: add("b2", 1, d, 0.0),
            });
        }
        let tokenizer = HashTokenizer {
            buckets: config.buckets,
            piece_chars: config.piece_chars,
            mask_token: config.mask_token.clone(),
            seed: config.seed,
        };
        Self { config, tokenizer, embed, blocks }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut out = vec![self.embed];
        for b in &self.blocks {
            out.extend([b.wq, b.wk, b.wv, b.wo, b.w1, b.b1, b.w2, b.b2]);
        }
        out
    }

    /// Contextual vectors for one window of piece ids (boundary markers
    /// included by the caller), `len x dim`.
    pub fn encode_window(&self, g: &mut Graph, store: &ParamStore, ids: &[usize], trainable: bool) -> Var {
        let leaf = |g: &mut Graph, id: ParamId| if trainable { g.param(store, id) } else { g.frozen(store, id) };
        let table = leaf(g, self.embed);
        let emb = g.rows(table, ids);
        let pos = g.constant(positions(ids.len(), self.dim()));
        let mut x = g.add(emb, pos);
        let scale = 1.0 / (self.dim() as f64).sqrt();
        for b in &self.blocks {
            let (wq, wk, wv, wo) = (leaf(g, b.wq), leaf(g, b.wk), leaf(g, b.wv), leaf(g, b.wo));
            let q = g.matmul(x, wq);
            let k = g.matmul(x, wk);
            let v = g.matmul(x, wv);
            let kt = g.transpose(k);
            let logits = g.matmul(q, kt);
            let logits = g.scale(logits, scale);
            let att = g.softmax_rows(logits);
            let ctx = g.matmul(att, v);
            let out = g.matmul(ctx, wo);
            let res = g.add(x, out);
            x = g.layer_norm_rows(res);
            let (w1, b1, w2, b2) = (leaf(g, b.w1), leaf(g, b.b1), leaf(g, b.w2), leaf(g, b.b2));
            let hdn = g.matmul(x, w1);
            let hdn = g.add(hdn, b1);
            let hdn = g.relu(hdn);
            let ff = g.matmul(hdn, w2);
            let ff = g.add(ff, b2);
            let res = g.add(x, ff);
            x = g.layer_norm_rows(res);
        }
        x
    }
}
