//! Contextual text encoding with sliding windows, event-span pooling and
//! event masking.

mod encoder;
mod windows;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use encoder::{positions, HashTokenizer, TinyEncoder, TinyEncoderConfig, CLS_ID, MASK_ID, SEP_ID};
pub(crate) use encoder::init_matrix;
pub use windows::{plan_windows, Segment, Window, WindowPlan};

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::corpus::Document;
use crate::error::{Error, Result};

pub const TINY_RANDOM: &str = "tiny-random";

/// Encoder selection and shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// `tiny-random`, or the name/path of a pretrained model.
    pub encoder: String,
    pub dim: usize,
    /// Token budget per window including the two boundary markers.
    pub max_window: usize,
    pub layers: usize,
    pub buckets: usize,
    pub piece_chars: usize,
    pub mask_token: String,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            encoder: TINY_RANDOM.into(),
            dim: 768,
            max_window: 512,
            layers: 2,
            buckets: 4096,
            piece_chars: 6,
            mask_token: "[MASK]".into(),
            seed: 0,
        }
    }
}

/// A contextual encoder whose weights live in a [`ParamStore`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextEncoder {
    pub max_window: usize,
    inner: TinyEncoder,
}

impl TextEncoder {
    pub fn build(cfg: &EncoderConfig, store: &mut ParamStore, prefix: &str) -> Result<Self> {
        if cfg.encoder != TINY_RANDOM {
            return Err(Error::Config(vec![format!(
                "encoder {:?} is not available in this build; only {TINY_RANDOM:?} is bundled",
                cfg.encoder
            )]));
        }
        if cfg.max_window < 3 {
            return Err(Error::Config(vec!["max_window must be at least 3".into()]));
        }
        let inner = TinyEncoder::new(
            TinyEncoderConfig {
                dim: cfg.dim,
                layers: cfg.layers,
                buckets: cfg.buckets,
                piece_chars: cfg.piece_chars,
                mask_token: cfg.mask_token.clone(),
                seed: cfg.seed,
            },
            store,
            prefix,
        );
        Ok(Self { max_window: cfg.max_window, inner })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn mask_token(&self) -> &str {
        self.inner.tokenizer.mask_token()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.inner.param_ids()
    }

    pub fn pieces(&self, sentences: &[Vec<String>]) -> Vec<Vec<Vec<usize>>> {
        sentences
            .iter()
            .map(|s| s.iter().map(|w| self.inner.tokenizer.pieces(w)).collect())
            .collect()
    }

    pub fn split_windows(&self, sentences: &[Vec<String>]) -> WindowPlan {
        let counts: Vec<Vec<usize>> = self.pieces(sentences).iter().map(|s| s.iter().map(Vec::len).collect()).collect();
        plan_windows(&counts, self.max_window)
    }

    /// One vector per word of `sentences` (flattened order), each taken from
    /// the window holding the word as the mean of its subword vectors.
    pub fn encode_words(&self, g: &mut Graph, store: &ParamStore, sentences: &[Vec<String>], trainable: bool) -> Result<Var> {
        let pieces = self.pieces(sentences);
        let plan = self.split_windows(sentences);
        let mut parts = Vec::with_capacity(plan.len());
        for (wi, win) in plan.windows.iter().enumerate() {
            let mut ids = vec![CLS_ID];
            let mut word_ranges = Vec::new();
            for seg in &win.segments {
                for w in seg.word_start..seg.word_end {
                    let keep = plan.kept_pieces[seg.sent][w];
                    let start = ids.len();
                    ids.extend_from_slice(&pieces[seg.sent][w][..keep]);
                    word_ranges.push((start, ids.len()));
                }
            }
            ids.push(SEP_ID);
            if ids.len() > self.max_window {
                return Err(Error::Encoder { window: wi, message: format!("{} pieces exceed the window", ids.len()) });
            }
            let hidden = self.inner.encode_window(g, store, &ids, trainable);
            let mut avg = Array2::zeros((word_ranges.len(), ids.len()));
            for (r, &(s, e)) in word_ranges.iter().enumerate() {
                let w = 1.0 / (e - s) as f64;
                for c in s..e {
                    avg[[r, c]] = w;
                }
            }
            let avg = g.constant(avg);
            parts.push(g.matmul(avg, hidden));
        }
        if parts.is_empty() {
            return Ok(g.constant(Array2::zeros((0, self.dim()))));
        }
        Ok(if parts.len() == 1 { parts[0] } else { g.concat_rows(&parts) })
    }

    /// Per-token vectors of a whole document, `tokens x dim`.
    pub fn encode_document(&self, g: &mut Graph, store: &ParamStore, doc: &Document, trainable: bool) -> Result<Var> {
        self.encode_words(g, store, &doc.sentences, trainable)
    }

    /// Frozen forward pass returning plain values.
    pub fn encode_values(&self, store: &ParamStore, sentences: &[Vec<String>]) -> Result<Array2<f64>> {
        let mut g = Graph::new();
        let v = self.encode_words(&mut g, store, sentences, false)?;
        Ok(g.value(v).clone())
    }
}

fn check_span(span: (usize, usize), len: usize) -> Result<()> {
    if span.0 >= span.1 {
        return Err(Error::Empty(format!("span [{}, {}) is empty", span.0, span.1)));
    }
    if span.1 > len {
        return Err(Error::InvalidArgument(format!("span [{}, {}) outside {len} tokens", span.0, span.1)));
    }
    Ok(())
}

/// Mean of the token vectors in a half-open span, as a `1 x dim` row.
pub fn pool_event(token_vectors: &Array2<f64>, span: (usize, usize)) -> Result<Array2<f64>> {
    check_span(span, token_vectors.nrows())?;
    let rows = token_vectors.slice(ndarray::s![span.0..span.1, ..]);
    Ok(rows.mean_axis(ndarray::Axis(0)).expect("nonempty").insert_axis(ndarray::Axis(0)))
}

/// Differentiable pooling of several spans at once: `spans.len() x dim`.
pub fn pool_spans(g: &mut Graph, token_vectors: Var, spans: &[(usize, usize)]) -> Result<Var> {
    let n = g.shape(token_vectors).0;
    let mut m = Array2::zeros((spans.len(), n));
    for (r, &span) in spans.iter().enumerate() {
        check_span(span, n)?;
        let w = 1.0 / (span.1 - span.0) as f64;
        for c in span.0..span.1 {
            m[[r, c]] = w;
        }
    }
    let m = g.constant(m);
    Ok(g.matmul(m, token_vectors))
}

/// Replace every token of both spans with `mask`; length and all other
/// tokens are preserved.
pub fn mask_events(text: &[String], spans: [(usize, usize); 2], mask: &str) -> Result<Vec<String>> {
    for &s in &spans {
        check_span(s, text.len())?;
    }
    let [a, b] = spans;
    if a.0 < b.1 && b.0 < a.1 {
        return Err(Error::InvalidArgument(format!("spans [{}, {}) and [{}, {}) overlap", a.0, a.1, b.0, b.1)));
    }
    Ok(text
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if (a.0..a.1).contains(&i) || (b.0..b.1).contains(&i) {
                mask.to_string()
            } else {
                t.clone()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn tiny(dim: usize, max_window: usize) -> (TextEncoder, ParamStore) {
        let mut store = ParamStore::new();
        let cfg = EncoderConfig { dim, max_window, buckets: 257, seed: 5, ..Default::default() };
        (TextEncoder::build(&cfg, &mut store, "enc").unwrap(), store)
    }

    #[test]
    fn deterministic_and_shape_preserving() {
        let (enc, store) = tiny(8, 512);
        let sents = vec![words("the storm led to the damage ."), words("officials reported it")];
        let a = enc.encode_values(&store, &sents).unwrap();
        let b = enc.encode_values(&store, &sents).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), (10, 8));
        let (enc2, store2) = tiny(8, 512);
        assert_eq!(enc2.encode_values(&store2, &sents).unwrap(), a);
    }

    #[test]
    fn long_document_uses_several_windows_and_keeps_token_count() {
        let (enc, store) = tiny(8, 512);
        let sents: Vec<Vec<String>> = (0..60).map(|i| words(&format!("w{i} a b c d e f g h i"))).collect();
        assert_eq!(sents.iter().map(Vec::len).sum::<usize>(), 600);
        let plan = enc.split_windows(&sents);
        // every word is a single piece here, so 600 pieces pack into windows of 510
        assert_eq!(plan.len(), 2);
        let v = enc.encode_values(&store, &sents).unwrap();
        assert_eq!(v.nrows(), 600);
    }

    #[test]
    fn empty_document_encodes_to_nothing() {
        let (enc, store) = tiny(8, 512);
        assert_eq!(enc.encode_values(&store, &[]).unwrap().dim(), (0, 8));
        assert_eq!(enc.split_windows(&[]).len(), 0);
    }

    #[test]
    fn unknown_pretrained_encoder_is_config_error() {
        let cfg = EncoderConfig { encoder: "roberta-base".into(), ..Default::default() };
        assert!(matches!(TextEncoder::build(&cfg, &mut ParamStore::new(), "x"), Err(Error::Config(_))));
    }

    #[test]
    fn pooling_arithmetic() {
        let v = ndarray::array![[0.0, 0.0], [2.0, 4.0], [9.0, 9.0]];
        assert_eq!(pool_event(&v, (0, 2)).unwrap(), ndarray::array![[1.0, 2.0]]);
        let same = ndarray::array![[1.5, -2.0], [1.5, -2.0], [1.5, -2.0]];
        assert_eq!(pool_event(&same, (0, 3)).unwrap(), ndarray::array![[1.5, -2.0]]);
        assert!(matches!(pool_event(&v, (1, 1)), Err(Error::Empty(_))));
        assert!(pool_event(&v, (2, 4)).is_err());
    }

    #[test]
    fn pooling_five_random_rows_matches_summation() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let v = init_matrix(&mut rng, 7, 4, 1.0);
        let got = pool_event(&v, (1, 6)).unwrap();
        for c in 0..4 {
            let mut sum = 0.0;
            for r in 1..6 {
                sum += v[[r, c]];
            }
            assert!((got[[0, c]] - sum / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masking() {
        let t = words("a b c d e f g");
        let m = mask_events(&t, [(2, 3), (5, 6)], "[MASK]").unwrap();
        assert_eq!(m, words("a b [MASK] d e [MASK] g"));
        assert!(mask_events(&t, [(2, 4), (3, 5)], "[MASK]").is_err());
        assert!(mask_events(&t, [(2, 2), (3, 5)], "[MASK]").is_err());
        assert!(mask_events(&t, [(2, 3), (6, 8)], "[MASK]").is_err());
    }

    #[test]
    fn masked_context_is_independent_of_event_surface_form() {
        let (enc, store) = tiny(8, 512);
        let a = words("after the earthquake the evacuation began at dawn");
        let b = words("after the parade the ceremony began at dawn");
        let spans = [(2, 3), (4, 5)];
        let pooled = |t: &[String]| {
            let masked = mask_events(t, spans, enc.mask_token()).unwrap();
            let v = enc.encode_values(&store, &[masked]).unwrap();
            (pool_event(&v, spans[0]).unwrap(), pool_event(&v, spans[1]).unwrap())
        };
        assert_eq!(pooled(&a), pooled(&b));
        // unmasked they differ
        let va = enc.encode_values(&store, &[a.clone()]).unwrap();
        let vb = enc.encode_values(&store, &[b.clone()]).unwrap();
        assert_ne!(pool_event(&va, spans[0]).unwrap(), pool_event(&vb, spans[0]).unwrap());
    }

    proptest! {
        #[test]
        fn masking_preserves_length_and_outside_tokens(len in 2usize..20, a in 0usize..20, la in 1usize..4, gap in 0usize..5, lb in 1usize..4) {
            let text: Vec<String> = (0..len).map(|i| format!("t{i}")).collect();
            let s1 = (a, a + la);
            let s2 = (a + la + gap, a + la + gap + lb);
            prop_assume!(s2.1 <= len);
            let m = mask_events(&text, [s1, s2], "[MASK]").unwrap();
            prop_assert_eq!(m.len(), len);
            for i in 0..len {
                let inside = (s1.0..s1.1).contains(&i) || (s2.0..s2.1).contains(&i);
                prop_assert_eq!(m[i] == "[MASK]", inside);
                if !inside { prop_assert_eq!(&m[i], &text[i]); }
            }
        }

        #[test]
        fn pooling_is_permutation_invariant_and_linear(seed in 0u64..1000, c in -3.0f64..3.0) {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            let v = init_matrix(&mut rng, 5, 3, 1.0);
            let w = init_matrix(&mut rng, 5, 3, 1.0);
            let rev = ndarray::Array2::from_shape_fn((5, 3), |(r, k)| v[[4 - r, k]]);
            let p = pool_event(&v, (0, 5)).unwrap();
            let q = pool_event(&rev, (0, 5)).unwrap();
            prop_assert!((&p - &q).iter().all(|x| x.abs() < 1e-12));
            let combo = &v * c + &w;
            let lhs = pool_event(&combo, (1, 4)).unwrap();
            let rhs = pool_event(&v, (1, 4)).unwrap() * c + pool_event(&w, (1, 4)).unwrap();
            prop_assert!((&lhs - &rhs).iter().all(|x| x.abs() < 1e-9));
        }
    }
}
