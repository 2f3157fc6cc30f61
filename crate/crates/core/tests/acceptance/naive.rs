//! Plain-loop forward pass over the raw parameter arrays, sharing no code
//! with the graph implementation. GELU uses statrs' erf.

use ehdiscrim_core::model::ModelParams;
use statrs::function::erf::erf;

pub type Mat = Vec<Vec<f64>>;

pub struct Naive<'a> {
    m: &'a ModelParams<f64>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl<'a> Naive<'a> {
    pub fn new(m: &'a ModelParams<f64>) -> Self {
        Naive { m }
    }

    fn p(&self, name: &str) -> (&[usize], &[f64]) {
        let id = self.m.store.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
        let t = self.m.store.value(id);
        (t.shape(), t.data())
    }

    fn vec(&self, name: &str) -> Vec<f64> {
        self.p(name).1.to_vec()
    }

    /// `x · W + b` with W stored row-major `[in × out]`.
    fn affine(&self, x: &Mat, w: &str, b: Option<&str>) -> Mat {
        let (shape, wd) = self.p(w);
        let (din, dout) = (shape[0], shape[1]);
        let bias = b.map(|b| self.vec(b)).unwrap_or_else(|| vec![0.0; dout]);
        x.iter()
            .map(|row| {
                assert_eq!(row.len(), din);
                (0..dout).map(|j| bias[j] + (0..din).map(|i| row[i] * wd[i * dout + j]).sum::<f64>()).collect()
            })
            .collect()
    }

    fn layer_norm(&self, x: &Mat, prefix: &str) -> Mat {
        let g = self.vec(&format!("{prefix}.gain"));
        let b = self.vec(&format!("{prefix}.bias"));
        let eps = self.m.config.layer_norm_eps;
        x.iter()
            .map(|row| {
                let n = row.len() as f64;
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let sd = (var + eps).sqrt();
                row.iter().enumerate().map(|(j, v)| (v - mean) / sd * g[j] + b[j]).collect()
            })
            .collect()
    }

    fn embed(&self, ids: &[u32]) -> Mat {
        let (ts, tok) = self.p("emb.token");
        let e = ts[1];
        let (_, pos) = self.p("emb.position");
        let (_, seg) = self.p("emb.segment");
        ids.iter()
            .enumerate()
            .map(|(t, &id)| (0..e).map(|j| tok[id as usize * e + j] + pos[t * e + j] + seg[j]).collect())
            .collect()
    }

    fn layer(&self, x: &Mat, p: &str, heads: usize) -> Mat {
        let n = x.len();
        let h = x[0].len();
        let dh = h / heads;
        let q = self.affine(x, &format!("{p}.attn.q.weight"), Some(&format!("{p}.attn.q.bias")));
        let k = self.affine(x, &format!("{p}.attn.k.weight"), None);
        let v = self.affine(x, &format!("{p}.attn.v.weight"), Some(&format!("{p}.attn.v.bias")));
        let mut ctx = vec![vec![0.0; h]; n];
        for hd in 0..heads {
            let cols = hd * dh..(hd + 1) * dh;
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let a = softmax(&scores);
                for c in cols.clone() {
                    ctx[i][c] = (0..n).map(|j| a[j] * v[j][c]).sum();
                }
            }
        }
        let o = self.affine(&ctx, &format!("{p}.attn.out.weight"), Some(&format!("{p}.attn.out.bias")));
        let r: Mat = x.iter().zip(&o).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        let x = self.layer_norm(&r, &format!("{p}.attn_ln"));
        let f = self.affine(&x, &format!("{p}.ffn.in.weight"), Some(&format!("{p}.ffn.in.bias")));
        let f: Mat = f.into_iter().map(|row| row.into_iter().map(gelu).collect()).collect();
        let f = self.affine(&f, &format!("{p}.ffn.out.weight"), Some(&format!("{p}.ffn.out.bias")));
        let r: Mat = x.iter().zip(&f).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        self.layer_norm(&r, &format!("{p}.ffn_ln"))
    }

    /// Final hidden states of `[CLS] content [SEP]`.
    pub fn hidden(&self, content: &[u32], generator: bool) -> Mat {
        let mut ids = vec![ehdiscrim_core::vocab::CLS];
        ids.extend_from_slice(content);
        ids.push(ehdiscrim_core::vocab::SEP);
        let mut x = self.embed(&ids);
        let (prefix, stack) = if generator {
            x = self.affine(&x, "gen.proj.weight", Some("gen.proj.bias"));
            ("gen", self.m.config.generator().unwrap())
        } else {
            ("disc", self.m.config.discriminator())
        };
        x = self.layer_norm(&x, &format!("{prefix}.emb_ln"));
        for l in 0..stack.layers {
            x = self.layer(&x, &format!("{prefix}.layer{l}"), stack.heads);
        }
        x
    }

    /// Generator distribution over the vocabulary at each row of `h`.
    pub fn mlm_probs(&self, h: &Mat) -> Mat {
        let p = self.affine(h, "gen.mlm.dense.weight", Some("gen.mlm.dense.bias"));
        let p: Mat = p.into_iter().map(|row| row.into_iter().map(gelu).collect()).collect();
        let p = self.layer_norm(&p, "gen.mlm.ln");
        let (ts, tok) = self.p("emb.token");
        let (vsz, e) = (ts[0], ts[1]);
        let bias = self.vec("gen.mlm.output_bias");
        p.iter()
            .map(|row| {
                let z: Vec<f64> = (0..vsz).map(|x| (0..e).map(|j| tok[x * e + j] * row[j]).sum::<f64>() + bias[x]).collect();
                softmax(&z)
            })
            .collect()
    }

    /// `softmax_{x' ∈ S} e(x')ᵀh`.
    pub fn mts_probs(&self, h: &[f64], set: &[u32]) -> Vec<f64> {
        let (ts, tok) = self.p("emb.token");
        let e = ts[1];
        let z: Vec<f64> = set.iter().map(|&c| (0..e).map(|j| tok[c as usize * e + j] * h[j]).sum()).collect();
        softmax(&z)
    }
}
