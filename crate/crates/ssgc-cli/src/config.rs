//! Flat key=value configuration files.
//!
//! One `key = value` pair per line, `#` starts a comment. Unknown keys are
//! hard errors so typos cannot silently change a run.

use std::path::Path;

use anyhow::{bail, Context, Result};

use ssgc::prune::PruneConfig;
use ssgc::train::{TaskSpec, TrainConfig};

#[derive(Debug, Default)]
pub struct Settings {
    seg_len: Option<usize>,
    overlap: Option<usize>,
    half_spectrum: Option<bool>,
    near_field_rate: Option<f64>,
    k: Option<usize>,
    split_ratio: Option<f64>,
    positive_class: Option<usize>,
    max_epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    eval_every: Option<usize>,
    prune_rate: Option<f64>,
    rho: Option<f64>,
    admm_outer_iters: Option<usize>,
    w_inner_steps: Option<usize>,
    retrain_epochs: Option<usize>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut s = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected `key = value`, got {raw:?}", idx + 1);
            };
            let key = key.trim();
            let value = value.trim();
            let parse_err = || format!("config line {}: bad value for {key}: {value:?}", idx + 1);
            match key {
                "seg_len" => s.seg_len = Some(value.parse().with_context(parse_err)?),
                "overlap" => s.overlap = Some(value.parse().with_context(parse_err)?),
                "half_spectrum" => s.half_spectrum = Some(value.parse().with_context(parse_err)?),
                "near_field_rate" => {
                    s.near_field_rate = Some(value.parse().with_context(parse_err)?)
                }
                "k" => s.k = Some(value.parse().with_context(parse_err)?),
                "split_ratio" => s.split_ratio = Some(value.parse().with_context(parse_err)?),
                "positive_class" => {
                    s.positive_class = Some(value.parse().with_context(parse_err)?)
                }
                "max_epochs" => s.max_epochs = Some(value.parse().with_context(parse_err)?),
                "batch_size" => s.batch_size = Some(value.parse().with_context(parse_err)?),
                "learning_rate" => s.learning_rate = Some(value.parse().with_context(parse_err)?),
                "eval_every" => s.eval_every = Some(value.parse().with_context(parse_err)?),
                "prune_rate" => s.prune_rate = Some(value.parse().with_context(parse_err)?),
                "rho" => s.rho = Some(value.parse().with_context(parse_err)?),
                "admm_outer_iters" => {
                    s.admm_outer_iters = Some(value.parse().with_context(parse_err)?)
                }
                "w_inner_steps" => s.w_inner_steps = Some(value.parse().with_context(parse_err)?),
                "retrain_epochs" => {
                    s.retrain_epochs = Some(value.parse().with_context(parse_err)?)
                }
                other => bail!("config line {}: unknown key {other:?}", idx + 1),
            }
        }
        Ok(s)
    }

    pub fn apply_to_task(&self, task: &mut TaskSpec) {
        if let Some(v) = self.seg_len {
            task.seg_len = v;
        }
        if let Some(v) = self.overlap {
            task.overlap = v;
        }
        if let Some(v) = self.half_spectrum {
            task.half_spectrum = v;
        }
        if let Some(v) = self.near_field_rate {
            task.near_field_rate = Some(v);
            task.k = None;
        }
        if let Some(v) = self.k {
            task.k = Some(v);
            task.near_field_rate = None;
        }
        if let Some(v) = self.split_ratio {
            task.split_ratio = v;
        }
        if let Some(v) = self.positive_class {
            task.positive_class = v;
        }
    }

    pub fn apply_to_train(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if self.prune_rate.is_some()
            || self.rho.is_some()
            || self.admm_outer_iters.is_some()
            || self.w_inner_steps.is_some()
            || self.retrain_epochs.is_some()
        {
            let mut pc = cfg
                .prune
                .take()
                .unwrap_or_else(|| PruneConfig::new(self.prune_rate.unwrap_or(0.1)));
            if let Some(v) = self.prune_rate {
                pc.connection_rate = v;
            }
            if let Some(v) = self.rho {
                pc.rho = v;
            }
            if let Some(v) = self.admm_outer_iters {
                pc.admm_outer_iters = v;
            }
            if let Some(v) = self.w_inner_steps {
                pc.w_inner_steps = v;
            }
            if let Some(v) = self.retrain_epochs {
                pc.retrain_epochs = v;
            }
            cfg.prune = Some(pc);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_known_keys_and_comments() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# a comment").unwrap();
        writeln!(f, "seg_len = 128").unwrap();
        writeln!(f, "learning_rate = 0.005  # inline").unwrap();
        writeln!(f, "prune_rate = 0.1").unwrap();
        let s = Settings::from_file(f.path()).unwrap();
        let mut task = TaskSpec::synthetic("mlp", 1);
        s.apply_to_task(&mut task);
        assert_eq!(task.seg_len, 128);
        let mut cfg = TrainConfig::default();
        s.apply_to_train(&mut cfg);
        assert_eq!(cfg.learning_rate, 0.005);
        assert_eq!(cfg.prune.unwrap().connection_rate, 0.1);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "seg_length = 128").unwrap();
        let err = Settings::from_file(f.path()).unwrap_err();
        assert!(err.to_string().contains("seg_length"));
    }
}
