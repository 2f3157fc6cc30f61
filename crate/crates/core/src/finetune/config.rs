use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::metrics::MetricKind;
use crate::config::{parse_value, read_entries, unknown_key};
use crate::error::{Error, Result};

/// Head family of a task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Tagging,
    Relation,
    Normalization,
    Single,
    Pair,
    Choice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Cmeee,
    Cmeie,
    ChipCdn,
    ChipCtc,
    ChipSts,
    KuakeQic,
    KuakeQtr,
    KuakeQqr,
    CMedQnli,
    WebMedQa,
    Nlpec,
}

/// Tuning grid for a task; the first entry of each list is the default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuningRanges {
    pub batch_sizes: &'static [usize],
    pub learning_rates: &'static [f64],
    pub epochs: &'static [usize],
    pub max_len: usize,
}

const WIDE_BS: &[usize] = &[8, 16, 32];
const WIDE_LR: &[f64] = &[3e-5, 6e-5, 1e-4];
const WIDE_EPOCHS: &[usize] = &[2, 4, 8, 12, 16];
const QA_EPOCHS: &[usize] = &[1, 2, 3, 4];

impl Task {
    pub const ALL: [Task; 11] = [
        Task::Cmeee,
        Task::Cmeie,
        Task::ChipCdn,
        Task::ChipCtc,
        Task::ChipSts,
        Task::KuakeQic,
        Task::KuakeQtr,
        Task::KuakeQqr,
        Task::CMedQnli,
        Task::WebMedQa,
        Task::Nlpec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Cmeee => "cmeee",
            Task::Cmeie => "cmeie",
            Task::ChipCdn => "chip-cdn",
            Task::ChipCtc => "chip-ctc",
            Task::ChipSts => "chip-sts",
            Task::KuakeQic => "kuake-qic",
            Task::KuakeQtr => "kuake-qtr",
            Task::KuakeQqr => "kuake-qqr",
            Task::CMedQnli => "cmedqnli",
            Task::WebMedQa => "webmedqa",
            Task::Nlpec => "nlpec",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Task::ALL
            .into_iter()
            .find(|t| t.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown task {s:?}")))
    }

    pub fn kind(self) -> TaskKind {
        match self {
            Task::Cmeee => TaskKind::Tagging,
            Task::Cmeie => TaskKind::Relation,
            Task::ChipCdn => TaskKind::Normalization,
            Task::ChipCtc | Task::KuakeQic => TaskKind::Single,
            Task::ChipSts | Task::KuakeQtr | Task::KuakeQqr | Task::CMedQnli | Task::WebMedQa => TaskKind::Pair,
            Task::Nlpec => TaskKind::Choice,
        }
    }

    pub fn metric(self) -> MetricKind {
        match self {
            Task::Cmeee | Task::Cmeie | Task::ChipCdn | Task::CMedQnli => MetricKind::MicroF1,
            Task::ChipCtc | Task::ChipSts => MetricKind::MacroF1,
            Task::KuakeQic | Task::KuakeQtr | Task::KuakeQqr | Task::Nlpec => MetricKind::Accuracy,
            Task::WebMedQa => MetricKind::PrecisionAt1,
        }
    }

    pub fn ranges(self) -> TuningRanges {
        let r = |batch_sizes, learning_rates, epochs, max_len| TuningRanges { batch_sizes, learning_rates, epochs, max_len };
        match self {
            Task::Cmeee => r(&[32], &[6e-5, 1e-4], &[2, 4, 8, 12], 128),
            Task::Cmeie => r(&[12], &[6e-5], &[50, 100, 150, 200, 250], 300),
            Task::ChipCdn => r(&[256], WIDE_LR, WIDE_EPOCHS, 32),
            Task::ChipCtc => r(WIDE_BS, WIDE_LR, WIDE_EPOCHS, 160),
            Task::ChipSts => r(WIDE_BS, WIDE_LR, WIDE_EPOCHS, 96),
            Task::KuakeQic => r(WIDE_BS, WIDE_LR, WIDE_EPOCHS, 128),
            Task::KuakeQtr | Task::KuakeQqr => r(WIDE_BS, WIDE_LR, WIDE_EPOCHS, 64),
            Task::CMedQnli => r(WIDE_BS, WIDE_LR, QA_EPOCHS, 512),
            Task::WebMedQa => r(&[16, 32, 64], &[1e-5, 2e-5, 3e-5], QA_EPOCHS, 512),
            Task::Nlpec => r(&[32], &[2e-5, 3e-5, 6e-5], &[10, 20, 30, 40], 512),
        }
    }
}

/// Fine-tuning hyperparameters. Optimizer defaults follow the usual
/// BERT/ELECTRA fine-tuning setup; batch size, learning rate, epochs, and
/// length default to the first entry of the task's tuning ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub task: Task,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub max_seq_length: usize,
    pub warmup_ratio: f64,
    pub adam_epsilon: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub attention_dropout: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    pub ema_decay: f64,
    pub ema_warmup: bool,
    pub seed: u64,
    pub init_std: f64,
    pub threshold: f64,
    pub mhs_weight: f64,
    pub cdn_top_n: usize,
    /// Class labels; inferred from training data (sorted) when absent.
    pub labels: Option<Vec<String>>,
    pub symptom_type: String,
    pub other_types: Vec<String>,
    pub schema: Option<PathBuf>,
    pub terminology: Option<PathBuf>,
}

impl FinetuneConfig {
    pub fn for_task(task: Task) -> Self {
        let r = task.ranges();
        FinetuneConfig {
            task,
            batch_size: r.batch_sizes[0],
            learning_rate: r.learning_rates[0],
            epochs: r.epochs[0],
            max_seq_length: r.max_len,
            warmup_ratio: 0.1,
            adam_epsilon: 1e-8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            attention_dropout: 0.1,
            dropout: 0.1,
            weight_decay: 0.01,
            ema_decay: 0.9999,
            ema_warmup: true,
            seed: 0,
            init_std: 0.02,
            threshold: 0.5,
            mhs_weight: 50.0,
            cdn_top_n: 100,
            labels: None,
            symptom_type: super::tags::SYMPTOM_TYPE.to_string(),
            other_types: super::tags::CMEEE_OTHER_TYPES.iter().map(|s| s.to_string()).collect(),
            schema: None,
            terminology: None,
        }
    }

    fn list(v: &str) -> Vec<String> {
        v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "max_seq_length" => self.max_seq_length = parse_value(key, v)?,
            "learning_rate_decay" => {
                if v != "linear" {
                    return Err(Error::Config(format!("learning_rate_decay: only `linear` is supported, got {v:?}")));
                }
            }
            "warmup_ratio" => self.warmup_ratio = parse_value(key, v)?,
            "adam_epsilon" => self.adam_epsilon = parse_value(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, v)?,
            "attention_dropout" => self.attention_dropout = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "weight_decay" => self.weight_decay = parse_value(key, v)?,
            "ema_decay" => self.ema_decay = parse_value(key, v)?,
            "ema_warmup" => self.ema_warmup = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "init_std" => self.init_std = parse_value(key, v)?,
            "threshold" => self.threshold = parse_value(key, v)?,
            "mhs_weight" => self.mhs_weight = parse_value(key, v)?,
            "cdn_top_n" => self.cdn_top_n = parse_value(key, v)?,
            "labels" => self.labels = Some(Self::list(v)),
            "symptom_type" => self.symptom_type = v.to_string(),
            "other_types" => self.other_types = Self::list(v),
            "schema" => self.schema = Some(PathBuf::from(v)),
            "terminology" => self.terminology = Some(PathBuf::from(v)),
            _ => return Err(unknown_key(key)),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.epochs == 0 {
            return err("batch_size and epochs must be positive");
        }
        if self.max_seq_length < 4 {
            return err("max_seq_length must be at least 4");
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) || !(0.0..=1.0).contains(&self.ema_decay) {
            return err("warmup_ratio and ema_decay must lie in [0, 1]");
        }
        if !(self.learning_rate >= 0.0 && self.adam_epsilon > 0.0 && self.weight_decay >= 0.0 && self.init_std > 0.0) {
            return err("learning_rate, weight_decay must be nonnegative; adam_epsilon, init_std positive");
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return err("adam betas must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.attention_dropout) {
            return err("dropout rates must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.threshold) || !(self.mhs_weight >= 0.0) || self.cdn_top_n == 0 {
            return err("threshold must lie in [0, 1], mhs_weight be nonnegative, cdn_top_n positive");
        }
        Ok(())
    }

    pub fn from_entries(task: Task, entries: &[(String, String)]) -> Result<Self> {
        let mut cfg = FinetuneConfig::for_task(task);
        for (k, v) in entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(task: Task, text: &str) -> Result<Self> {
        FinetuneConfig::from_entries(task, &crate::config::parse_entries(text)?)
    }

    pub fn load(task: Task, path: impl AsRef<Path>) -> Result<Self> {
        FinetuneConfig::from_entries(task, &read_entries(path)?)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let f = |v: f64| format!("{v:?}");
        let mut out = vec![
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", f(self.learning_rate)),
            ("epochs", self.epochs.to_string()),
            ("max_seq_length", self.max_seq_length.to_string()),
            ("learning_rate_decay", "linear".to_string()),
            ("warmup_ratio", f(self.warmup_ratio)),
            ("adam_epsilon", f(self.adam_epsilon)),
            ("adam_beta1", f(self.adam_beta1)),
            ("adam_beta2", f(self.adam_beta2)),
            ("attention_dropout", f(self.attention_dropout)),
            ("dropout", f(self.dropout)),
            ("weight_decay", f(self.weight_decay)),
            ("ema_decay", f(self.ema_decay)),
            ("ema_warmup", self.ema_warmup.to_string()),
            ("seed", self.seed.to_string()),
            ("init_std", f(self.init_std)),
            ("threshold", f(self.threshold)),
            ("mhs_weight", f(self.mhs_weight)),
            ("cdn_top_n", self.cdn_top_n.to_string()),
            ("symptom_type", self.symptom_type.clone()),
            ("other_types", self.other_types.join(",")),
        ];
        if let Some(l) = &self.labels {
            out.push(("labels", l.join(",")));
        }
        if let Some(p) = &self.schema {
            out.push(("schema", p.display().to_string()));
        }
        if let Some(p) = &self.terminology {
            out.push(("terminology", p.display().to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub(crate) fn from_prefixed(task: Task, pairs: &BTreeMap<String, String>, prefix: &str) -> Result<Self> {
        let entries: Vec<(String, String)> = pairs
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|k| (k.to_string(), v.clone())))
            .collect();
        FinetuneConfig::from_entries(task, &entries)
    }
}
