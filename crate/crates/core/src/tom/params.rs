use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;

use super::{ModelConfig, TomError};

/// Name, shape and element offset of one tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub bq: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Offsets {
    pub subj: usize,
    pub pred: usize,
    pub obj: usize,
    pub face: Option<usize>,
    pub tone: Option<usize>,
    pub pos: usize,
    pub layers: Vec<LayerOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    /// `[hidden, P * P]`; column block `i` is the output head of player i.
    pub head_w: usize,
    /// `[P * P]`
    pub head_b: usize,
}

struct LayoutBuilder {
    specs: Vec<TensorSpec>,
    next: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.next;
        let spec = TensorSpec { name, shape, offset };
        self.next += spec.len();
        self.specs.push(spec);
        offset
    }
}

pub(crate) fn build_layout(cfg: &ModelConfig) -> (Vec<TensorSpec>, Offsets) {
    let h = cfg.hidden;
    let p = cfg.num_players;
    let f = cfg.ffn_dim();
    let mut b = LayoutBuilder { specs: Vec::new(), next: 0 };
    let subj = b.add("embed.subject".into(), vec![p, h]);
    let pred = b.add("embed.predicate".into(), vec![cfg.num_predicates, h]);
    let obj = b.add("embed.object".into(), vec![p, h]);
    let (face, tone) = if cfg.use_emotions {
        (
            Some(b.add("embed.face".into(), vec![cfg.num_emotions, h])),
            Some(b.add("embed.tone".into(), vec![cfg.num_emotions, h])),
        )
    } else {
        (None, None)
    };
    let pos = b.add("embed.position".into(), vec![cfg.max_seq, h]);
    let layers = (0..cfg.layers)
        .map(|l| {
            let n = |s: &str| format!("layers.{l}.{s}");
            LayerOffsets {
                ln1_g: b.add(n("ln1.gamma"), vec![h]),
                ln1_b: b.add(n("ln1.beta"), vec![h]),
                wq: b.add(n("attn.wq"), vec![h, h]),
                wk: b.add(n("attn.wk"), vec![h, h]),
                wv: b.add(n("attn.wv"), vec![h, h]),
                bq: b.add(n("attn.bq"), vec![h]),
                bv: b.add(n("attn.bv"), vec![h]),
                wo: b.add(n("attn.wo"), vec![h, h]),
                bo: b.add(n("attn.bo"), vec![h]),
                ln2_g: b.add(n("ln2.gamma"), vec![h]),
                ln2_b: b.add(n("ln2.beta"), vec![h]),
                w1: b.add(n("ffn.w1"), vec![h, f]),
                b1: b.add(n("ffn.b1"), vec![f]),
                w2: b.add(n("ffn.w2"), vec![f, h]),
                b2: b.add(n("ffn.b2"), vec![h]),
            }
        })
        .collect();
    let lnf_g = b.add("final_ln.gamma".into(), vec![h]);
    let lnf_b = b.add("final_ln.beta".into(), vec![h]);
    let head_w = b.add("heads.weight".into(), vec![h, p * p]);
    let head_b = b.add("heads.bias".into(), vec![p * p]);
    let offsets = Offsets { subj, pred, obj, face, tone, pos, layers, lnf_g, lnf_b, head_w, head_b };
    (b.specs, offsets)
}

/// All trainable tensors of the belief model, stored in one flat vector.
///
/// Values are kept exactly representable as `f32` (the checkpoint storage
/// precision) while all arithmetic runs in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    specs: Vec<TensorSpec>,
    pub(crate) offsets: Offsets,
    pub(crate) data: Vec<f64>,
}

impl ModelParams {
    /// Every tensor zero, layer-norm gains one.
    pub fn zeros(config: ModelConfig) -> Result<Self, TomError> {
        config.validate()?;
        let (specs, offsets) = build_layout(&config);
        let total = specs.iter().map(TensorSpec::len).sum();
        let mut params = Self { config, specs, offsets, data: vec![0.0; total] };
        for spec in params.specs.clone() {
            if spec.name.ends_with(".gamma") {
                params.data[spec.range()].fill(1.0);
            }
        }
        Ok(params)
    }

    /// Normal(0, std) weights and embeddings, zero biases, unit layer-norm gains.
    pub fn init(config: ModelConfig, seed: u64, std: f64) -> Result<Self, TomError> {
        let mut params = Self::zeros(config)?;
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, std).map_err(|e| TomError::InvalidConfig(e.to_string()))?;
        for spec in params.specs.clone() {
            let is_matrix = spec.shape.len() == 2;
            if is_matrix {
                for x in &mut params.data[spec.range()] {
                    *x = normal.sample(&mut rng);
                }
            }
        }
        params.round_to_f32();
        Ok(params)
    }

    /// Like [`ModelParams::init`] but also randomizes biases and layer-norm
    /// parameters; used to exercise every code path in tests.
    pub fn init_all(config: ModelConfig, seed: u64, std: f64) -> Result<Self, TomError> {
        let mut params = Self::init(config, seed, std)?;
        let mut rng = rng_from_seed(seed ^ 0xA5A5_A5A5);
        let normal = Normal::new(0.0, std).map_err(|e| TomError::InvalidConfig(e.to_string()))?;
        for spec in params.specs.clone() {
            if spec.shape.len() == 1 {
                let base = if spec.name.ends_with(".gamma") { 1.0 } else { 0.0 };
                for x in &mut params.data[spec.range()] {
                    *x = base + normal.sample(&mut rng);
                }
            }
        }
        params.round_to_f32();
        Ok(params)
    }

    pub(crate) fn from_parts(config: ModelConfig, data: Vec<f64>) -> Result<Self, TomError> {
        config.validate()?;
        let (specs, offsets) = build_layout(&config);
        let total: usize = specs.iter().map(TensorSpec::len).sum();
        if total != data.len() {
            return Err(TomError::ShapeMismatch(format!("expected {total} values, got {}", data.len())));
        }
        Ok(Self { config, specs, offsets, data })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn spec(&self, name: &str) -> Option<&TensorSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.spec(name).map(|s| &self.data[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.spec(name)?.range();
        Some(&mut self.data[range])
    }

    pub fn round_to_f32(&mut self) {
        for x in &mut self.data {
            *x = *x as f32 as f64;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
