use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{LayerIds, ModelParams, StackIds};
use crate::autodiff::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::vocab::{CLS, SEP};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stack {
    Generator,
    Discriminator,
}

/// Encoder input: token ids (already wrapped in `[CLS]`/`[SEP]`), segment
/// ids (0 or 1), and position ids (normally `0..n`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub segments: Vec<u32>,
    pub positions: Vec<u32>,
}

impl Encoding {
    /// `[CLS] content [SEP]`, all segment 0.
    pub fn single(content: &[u32]) -> Self {
        let mut ids = Vec::with_capacity(content.len() + 2);
        ids.push(CLS);
        ids.extend_from_slice(content);
        ids.push(SEP);
        let segments = vec![0; ids.len()];
        Encoding::new(ids, segments)
    }

    /// Sequential positions.
    pub fn new(ids: Vec<u32>, segments: Vec<u32>) -> Self {
        let positions = (0..ids.len() as u32).collect();
        Encoding { ids, segments, positions }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Dropout is active only in `Train`.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Hidden states of a batch, stacked row-wise: sequence `s` occupies rows
/// `offsets[s] .. offsets[s] + lens[s]`.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub hidden: Var,
    pub offsets: Vec<usize>,
    pub lens: Vec<usize>,
}

impl Encoded {
    pub fn row(&self, seq: usize, pos: usize) -> usize {
        debug_assert!(pos < self.lens[seq]);
        self.offsets[seq] + pos
    }

    pub fn cls_rows(&self) -> Vec<usize> {
        self.offsets.clone()
    }
}

fn linear<T: Real>(g: &mut Graph<'_, T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

fn dropout<T: Real>(g: &mut Graph<'_, T>, x: Var, p: f64, mode: &mut Mode<'_>) -> Result<Var> {
    let Mode::Train(rng) = mode else { return Ok(x) };
    if p == 0.0 {
        return Ok(x);
    }
    let keep = T::from_f64c(1.0 / (1.0 - p));
    let shape = g.shape(x).to_vec();
    let n = shape.iter().product();
    let mask: Vec<T> = (0..n).map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep }).collect();
    let m = g.constant(Tensor::new(shape, mask)?)?;
    g.mul(x, m)
}

impl<T: Real> ModelParams<T> {
    fn eps(&self) -> T {
        T::from_f64c(self.config.layer_norm_eps)
    }

    fn embed(&self, g: &mut Graph<'_, T>, batch: &[Encoding]) -> Result<(Var, Vec<usize>, Vec<usize>)> {
        let mut tok = Vec::new();
        let mut pos = Vec::new();
        let mut seg = Vec::new();
        let mut offsets = Vec::with_capacity(batch.len());
        let mut lens = Vec::with_capacity(batch.len());
        for e in batch {
            if e.is_empty() || e.segments.len() != e.len() || e.positions.len() != e.len() {
                return Err(Error::invalid("encoding with no tokens or mismatched segments/positions"));
            }
            if e.len() > self.config.max_positions {
                return Err(Error::invalid(format!(
                    "sequence of {} tokens exceeds {} positions",
                    e.len(),
                    self.config.max_positions
                )));
            }
            offsets.push(tok.len());
            lens.push(e.len());
            tok.extend(e.ids.iter().map(|&i| i as usize));
            pos.extend(e.positions.iter().map(|&p| p as usize));
            seg.extend(e.segments.iter().map(|&s| s as usize));
        }
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let l = &self.layout;
        let (tt, pt, st) = (g.param(l.token), g.param(l.position), g.param(l.segment));
        let a = g.gather_rows(tt, &tok)?;
        let b = g.gather_rows(pt, &pos)?;
        let c = g.gather_rows(st, &seg)?;
        let ab = g.add(a, b)?;
        Ok((g.add(ab, c)?, offsets, lens))
    }

    fn layer(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        l: &LayerIds,
        heads: usize,
        offsets: &[usize],
        lens: &[usize],
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let hidden = g.shape(x)[1];
        let dh = hidden / heads;
        let inv = T::from_f64c(1.0 / (dh as f64).sqrt());
        let (qw, qb, kw, vw, vb) = (g.param(l.q_w), g.param(l.q_b), g.param(l.k_w), g.param(l.v_w), g.param(l.v_b));
        let q = linear(g, x, qw, qb)?;
        let k = g.matmul(x, kw)?;
        let v = linear(g, x, vw, vb)?;
        let mut per_seq = Vec::with_capacity(offsets.len());
        for (&o, &n) in offsets.iter().zip(lens) {
            let qs = g.slice_rows(q, o, n)?;
            let ks = g.slice_rows(k, o, n)?;
            let vs = g.slice_rows(v, o, n)?;
            let mut ctx = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = g.slice_cols(qs, h * dh, dh)?;
                let kh = g.slice_cols(ks, h * dh, dh)?;
                let vh = g.slice_cols(vs, h * dh, dh)?;
                let scores = g.matmul_bt(qh, kh)?;
                let scores = g.scale(scores, inv)?;
                let p = g.softmax_rows(scores)?;
                let p = dropout(g, p, self.config.attention_dropout, mode)?;
                ctx.push(g.matmul(p, vh)?);
            }
            per_seq.push(if heads == 1 { ctx[0] } else { g.concat_cols(&ctx)? });
        }
        let ctx = if per_seq.len() == 1 { per_seq[0] } else { g.concat_rows(&per_seq)? };
        let (ow, ob) = (g.param(l.o_w), g.param(l.o_b));
        let a = linear(g, ctx, ow, ob)?;
        let a = dropout(g, a, self.config.dropout, mode)?;
        let r = g.add(x, a)?;
        let (g1, b1) = (g.param(l.ln1_g), g.param(l.ln1_b));
        let x = g.layer_norm(r, g1, b1, self.eps())?;

        let (w1, c1, w2, c2) = (g.param(l.ff1_w), g.param(l.ff1_b), g.param(l.ff2_w), g.param(l.ff2_b));
        let f = linear(g, x, w1, c1)?;
        let f = g.gelu(f)?;
        let f = linear(g, f, w2, c2)?;
        let f = dropout(g, f, self.config.dropout, mode)?;
        let r = g.add(x, f)?;
        let (g2, b2) = (g.param(l.ln2_g), g.param(l.ln2_b));
        g.layer_norm(r, g2, b2, self.eps())
    }

    fn run_stack(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        s: &StackIds,
        offsets: &[usize],
        lens: &[usize],
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let (lg, lb) = (g.param(s.emb_ln_g), g.param(s.emb_ln_b));
        let mut x = g.layer_norm(x, lg, lb, self.eps())?;
        x = dropout(g, x, self.config.dropout, mode)?;
        for l in &s.layers {
            x = self.layer(g, x, l, s.cfg.heads, offsets, lens, mode)?;
        }
        Ok(x)
    }

    /// Post-layer-norm Transformer over a batch. The generator first
    /// projects the shared embeddings to its own hidden size.
    pub fn encode(&self, g: &mut Graph<'_, T>, batch: &[Encoding], stack: Stack, mode: &mut Mode<'_>) -> Result<Encoded> {
        let (emb, offsets, lens) = self.embed(g, batch)?;
        let hidden = match stack {
            Stack::Discriminator => self.run_stack(g, emb, &self.layout.disc, &offsets, &lens, mode)?,
            Stack::Generator => {
                let gen = self.layout.generator.as_ref().ok_or_else(|| Error::invalid("model has no generator"))?;
                let (pw, pb) = (g.param(gen.proj_w), g.param(gen.proj_b));
                let x = linear(g, emb, pw, pb)?;
                self.run_stack(g, x, &gen.stack, &offsets, &lens, mode)?
            }
        };
        Ok(Encoded { hidden, offsets, lens })
    }

    /// MLM scores over the vocabulary for generator hidden rows `[m × Hg]`:
    /// `e(x')ᵀ·project(h) + bias(x')` with the tied token table.
    pub fn mlm_logits(&self, g: &mut Graph<'_, T>, rows: Var) -> Result<Var> {
        let gen = self.layout.generator.as_ref().ok_or_else(|| Error::invalid("model has no generator"))?;
        let (dw, db) = (g.param(gen.mlm_dense_w), g.param(gen.mlm_dense_b));
        let p = linear(g, rows, dw, db)?;
        let p = g.gelu(p)?;
        let (lg, lb) = (g.param(gen.mlm_ln_g), g.param(gen.mlm_ln_b));
        let p = g.layer_norm(p, lg, lb, self.eps())?;
        let table = g.param(self.layout.token);
        let s = g.matmul_bt(p, table)?;
        let bias = g.param(gen.mlm_bias);
        g.add_row(s, bias)
    }

    /// Replaced-token-detection logits `wᵀh` for discriminator rows
    /// `[m × H]`. `sigmoid` of the logit is the probability the token is
    /// original.
    pub fn rtd_logits(&self, g: &mut Graph<'_, T>, rows: Var) -> Result<Var> {
        let w = g.param(self.layout.rtd_w);
        let h = self.config.hidden;
        let w = g.reshape(w, &[h, 1])?;
        let z = g.matmul(rows, w)?;
        let m = g.shape(z)[0];
        g.reshape(z, &[m])
    }

    /// Candidate scores `e(x')ᵀh` for each row over its candidate set;
    /// all sets must have the same size.
    pub fn mts_logits(&self, g: &mut Graph<'_, T>, rows: Var, candidates: &[Vec<u32>]) -> Result<Var> {
        let m = g.shape(rows)[0];
        if candidates.len() != m || candidates.is_empty() {
            return Err(Error::shape("mts_logits", format!("{} candidate sets for {m} rows", candidates.len())));
        }
        let width = candidates[0].len();
        if width == 0 || candidates.iter().any(|c| c.len() != width) {
            return Err(Error::invalid("candidate sets must be non-empty and equally sized"));
        }
        let v = self.config.vocab_size as u32;
        if let Some(bad) = candidates.iter().flatten().find(|&&c| c >= v) {
            return Err(Error::invalid(format!("candidate id {bad} out of vocab")));
        }
        let table = g.param(self.layout.token);
        let full = g.matmul_bt(rows, table)?;
        let mut cols = Vec::with_capacity(width);
        for j in 0..width {
            let pick: Vec<usize> = candidates.iter().map(|c| c[j] as usize).collect();
            let c = g.pick_cols(full, &pick)?;
            cols.push(g.reshape(c, &[m, 1])?);
        }
        if width == 1 {
            Ok(cols[0])
        } else {
            g.concat_cols(&cols)
        }
    }

    /// ℓ2-normalized final-layer `[CLS]` states, one row per sequence.
    pub fn csp_embed(&self, g: &mut Graph<'_, T>, enc: &Encoded) -> Result<Var> {
        let cls = g.gather_rows(enc.hidden, &enc.cls_rows())?;
        g.normalize_rows(cls)
    }
}

fn rows_f64<T: Real>(t: &Tensor<T>) -> Vec<Vec<f64>> {
    let (m, _) = t.dims2();
    (0..m).map(|i| t.row(i).iter().map(|v| v.as_f64()).collect()).collect()
}

/// Eval-mode convenience wrappers returning plain values.
impl<T: Real> ModelParams<T> {
    pub fn hidden_states(&self, enc: &Encoding, stack: Stack) -> Result<Tensor<T>> {
        let mut g = Graph::new(&self.store);
        let e = self.encode(&mut g, std::slice::from_ref(enc), stack, &mut Mode::Eval)?;
        Ok(g.value(e.hidden).clone())
    }

    /// Generator distributions over the vocabulary at `positions` of `enc`.
    pub fn mlm_probs(&self, enc: &Encoding, positions: &[usize]) -> Result<Vec<Vec<f64>>> {
        if positions.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new(&self.store);
        let e = self.encode(&mut g, std::slice::from_ref(enc), Stack::Generator, &mut Mode::Eval)?;
        let rows = g.gather_rows(e.hidden, positions)?;
        let z = self.mlm_logits(&mut g, rows)?;
        let p = g.softmax_rows(z)?;
        Ok(rows_f64(g.value(p)))
    }

    /// Probability that each token of `enc` is original.
    pub fn rtd_probs(&self, enc: &Encoding) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let e = self.encode(&mut g, std::slice::from_ref(enc), Stack::Discriminator, &mut Mode::Eval)?;
        let z = self.rtd_logits(&mut g, e.hidden)?;
        Ok(g.value(z).data().iter().map(|&v| crate::autodiff::sigmoid(v).as_f64()).collect())
    }

    /// Distribution over each candidate set at the matching position.
    pub fn mts_probs(&self, enc: &Encoding, positions: &[usize], candidates: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
        if positions.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new(&self.store);
        let e = self.encode(&mut g, std::slice::from_ref(enc), Stack::Discriminator, &mut Mode::Eval)?;
        let rows = g.gather_rows(e.hidden, positions)?;
        let z = self.mts_logits(&mut g, rows, candidates)?;
        let p = g.softmax_rows(z)?;
        Ok(rows_f64(g.value(p)))
    }

    pub fn csp_embedding(&self, enc: &Encoding) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let e = self.encode(&mut g, std::slice::from_ref(enc), Stack::Discriminator, &mut Mode::Eval)?;
        let u = self.csp_embed(&mut g, &e)?;
        Ok(g.value(u).data().iter().map(|v| v.as_f64()).collect())
    }
}

/// Dot product of two unit embeddings.
pub fn similarity(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}
