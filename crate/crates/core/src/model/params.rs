use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, StackConfig};
use crate::autodiff::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerIds {
    pub q_w: ParamId,
    pub q_b: ParamId,
    pub k_w: ParamId,
    pub v_w: ParamId,
    pub v_b: ParamId,
    pub o_w: ParamId,
    pub o_b: ParamId,
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub ff1_w: ParamId,
    pub ff1_b: ParamId,
    pub ff2_w: ParamId,
    pub ff2_b: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackIds {
    pub cfg: StackConfig,
    pub emb_ln_g: ParamId,
    pub emb_ln_b: ParamId,
    pub layers: Vec<LayerIds>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorIds {
    pub stack: StackIds,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub mlm_dense_w: ParamId,
    pub mlm_dense_b: ParamId,
    pub mlm_ln_g: ParamId,
    pub mlm_ln_b: ParamId,
    pub mlm_bias: ParamId,
}

/// Where each model parameter lives in the store. The token, position, and
/// segment tables are stored once and read by both stacks.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub token: ParamId,
    pub position: ParamId,
    pub segment: ParamId,
    pub generator: Option<GeneratorIds>,
    pub disc: StackIds,
    pub rtd_w: ParamId,
}

impl Layout {
    pub fn shared(&self) -> Vec<ParamId> {
        vec![self.token, self.position, self.segment]
    }

    pub fn generator_exclusive(&self) -> Vec<ParamId> {
        let Some(g) = &self.generator else { return Vec::new() };
        let mut ids = stack_ids(&g.stack);
        ids.extend([g.proj_w, g.proj_b, g.mlm_dense_w, g.mlm_dense_b, g.mlm_ln_g, g.mlm_ln_b, g.mlm_bias]);
        ids
    }

    pub fn discriminator_exclusive(&self) -> Vec<ParamId> {
        let mut ids = stack_ids(&self.disc);
        ids.push(self.rtd_w);
        ids
    }
}

fn stack_ids(s: &StackIds) -> Vec<ParamId> {
    let mut ids = vec![s.emb_ln_g, s.emb_ln_b];
    for l in &s.layers {
        ids.extend([
            l.q_w, l.q_b, l.k_w, l.v_w, l.v_b, l.o_w, l.o_b, l.ln1_g, l.ln1_b, l.ff1_w, l.ff1_b, l.ff2_w,
            l.ff2_b, l.ln2_g, l.ln2_b,
        ]);
    }
    ids
}

/// Parameter registration, either freshly initialized or looked up by name
/// in an existing store.
trait Registrar<T: Real> {
    fn weight(&mut self, name: &str, shape: &[usize]) -> Result<ParamId>;
    fn bias(&mut self, name: &str, shape: &[usize]) -> Result<ParamId>;
    fn gain(&mut self, name: &str, shape: &[usize]) -> Result<ParamId>;
}

struct Init<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl<T: Real> Registrar<T> for Init<'_, T> {
    fn weight(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64c(self.normal.sample(&mut self.rng))).collect();
        self.store.insert(name, Tensor::new(shape.to_vec(), data)?, true)
    }

    fn bias(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.insert(name, Tensor::zeros(shape), false)
    }

    fn gain(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.insert(name, Tensor::full(shape, T::one()), false)
    }
}

struct Lookup<'a, T> {
    store: &'a ParamStore<T>,
}

impl<T: Real> Lookup<'_, T> {
    fn find(&self, name: &str, shape: &[usize]) -> Result<ParamId> {
        let id = self.store.id(name).ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
        let got = self.store.value(id).shape();
        if got != shape {
            return Err(Error::Format(format!("parameter {name} has shape {got:?}, expected {shape:?}")));
        }
        Ok(id)
    }
}

impl<T: Real> Registrar<T> for Lookup<'_, T> {
    fn weight(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.find(name, shape)
    }
    fn bias(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.find(name, shape)
    }
    fn gain(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.find(name, shape)
    }
}

fn register_stack<T: Real>(r: &mut dyn Registrar<T>, prefix: &str, cfg: StackConfig) -> Result<StackIds> {
    let h = cfg.hidden;
    let f = cfg.intermediate;
    let emb_ln_g = r.gain(&format!("{prefix}.emb_ln.gain"), &[h])?;
    let emb_ln_b = r.bias(&format!("{prefix}.emb_ln.bias"), &[h])?;
    let mut layers = Vec::with_capacity(cfg.layers);
    // The key projection has no bias: it would add the same amount to every
    // score in a softmax row and so never affect the output.
    for i in 0..cfg.layers {
        let p = format!("{prefix}.layer{i}");
        layers.push(LayerIds {
            q_w: r.weight(&format!("{p}.attn.q.weight"), &[h, h])?,
            q_b: r.bias(&format!("{p}.attn.q.bias"), &[h])?,
            k_w: r.weight(&format!("{p}.attn.k.weight"), &[h, h])?,
            v_w: r.weight(&format!("{p}.attn.v.weight"), &[h, h])?,
            v_b: r.bias(&format!("{p}.attn.v.bias"), &[h])?,
            o_w: r.weight(&format!("{p}.attn.out.weight"), &[h, h])?,
            o_b: r.bias(&format!("{p}.attn.out.bias"), &[h])?,
            ln1_g: r.gain(&format!("{p}.attn_ln.gain"), &[h])?,
            ln1_b: r.bias(&format!("{p}.attn_ln.bias"), &[h])?,
            ff1_w: r.weight(&format!("{p}.ffn.in.weight"), &[h, f])?,
            ff1_b: r.bias(&format!("{p}.ffn.in.bias"), &[f])?,
            ff2_w: r.weight(&format!("{p}.ffn.out.weight"), &[f, h])?,
            ff2_b: r.bias(&format!("{p}.ffn.out.bias"), &[h])?,
            ln2_g: r.gain(&format!("{p}.ffn_ln.gain"), &[h])?,
            ln2_b: r.bias(&format!("{p}.ffn_ln.bias"), &[h])?,
        });
    }
    Ok(StackIds { cfg, emb_ln_g, emb_ln_b, layers })
}

fn register_generator<T: Real>(r: &mut dyn Registrar<T>, cfg: &ModelConfig) -> Result<GeneratorIds> {
    let g = cfg.generator()?;
    let e = cfg.embedding_size;
    Ok(GeneratorIds {
        proj_w: r.weight("gen.proj.weight", &[e, g.hidden])?,
        proj_b: r.bias("gen.proj.bias", &[g.hidden])?,
        stack: register_stack(r, "gen", g)?,
        mlm_dense_w: r.weight("gen.mlm.dense.weight", &[g.hidden, e])?,
        mlm_dense_b: r.bias("gen.mlm.dense.bias", &[e])?,
        mlm_ln_g: r.gain("gen.mlm.ln.gain", &[e])?,
        mlm_ln_b: r.bias("gen.mlm.ln.bias", &[e])?,
        mlm_bias: r.bias("gen.mlm.output_bias", &[cfg.vocab_size])?,
    })
}

fn register<T: Real>(r: &mut dyn Registrar<T>, cfg: &ModelConfig, with_generator: bool) -> Result<Layout> {
    let e = cfg.embedding_size;
    let token = r.weight("emb.token", &[cfg.vocab_size, e])?;
    let position = r.weight("emb.position", &[cfg.max_positions, e])?;
    let segment = r.weight("emb.segment", &[2, e])?;
    let generator = if with_generator { Some(register_generator(r, cfg)?) } else { None };
    let disc = register_stack(r, "disc", cfg.discriminator())?;
    let rtd_w = r.weight("disc.rtd.weight", &[cfg.hidden])?;
    Ok(Layout { token, position, segment, generator, disc, rtd_w })
}

/// Model weights: the parameter store plus the layout that indexes it.
/// Task heads may register further parameters in `store`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub layout: Layout,
}

impl<T: Real> ModelParams<T> {
    /// Weights ~ N(0, std²), biases 0, layer-norm gains 1.
    pub fn init(config: &ModelConfig, std: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(format!("init std {std}: {e}")))?;
        let layout = {
            let mut init = Init { store: &mut store, rng: ChaCha8Rng::seed_from_u64(seed), normal };
            register(&mut init, config, true)?
        };
        Ok(ModelParams { config: config.clone(), store, layout })
    }

    /// Rebuilds the layout over a loaded store. The generator is optional so
    /// that discriminator-only checkpoints load too.
    pub fn from_store(config: &ModelConfig, store: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let with_generator = store.id("gen.proj.weight").is_some();
        let layout = register(&mut Lookup { store: &store }, config, with_generator)?;
        Ok(ModelParams { config: config.clone(), store, layout })
    }

    pub fn has_generator(&self) -> bool {
        self.layout.generator.is_some()
    }

    /// Drops the generator and its heads, keeping shared tables, the
    /// discriminator, and any other registered parameters.
    pub fn discard_generator(&self) -> Result<Self> {
        let gen: std::collections::HashSet<ParamId> = self.layout.generator_exclusive().into_iter().collect();
        let mut store = ParamStore::new();
        for (id, p) in self.store.iter() {
            if !gen.contains(&id) {
                let nid = store.insert(&p.name, p.value.clone(), p.decay)?;
                store.set_trainable(nid, p.trainable);
            }
        }
        ModelParams::from_store(&self.config, store)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams { config: self.config.clone(), store: self.store.cast(), layout: self.layout.clone() }
    }
}
