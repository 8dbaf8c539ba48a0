//! Run configuration: training settings, field shapes and the dataset path,
//! read from `key=value` files and overridden by `--set key=value` flags.

use std::fs;
use std::path::{Path, PathBuf};

use nvv_core::model::{FieldShapes, LevelSpec};
use nvv_core::train::TrainConfig;

use crate::dataset::{parse_key_values, parse_list};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub shapes: FieldShapes,
    pub dataset: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { train: TrainConfig::default(), shapes: FieldShapes::default(), dataset: None }
    }
}

/// Every key accepted by [`RunConfig::set`].
pub const KEYS: &[&str] = &[
    "profile",
    "dataset",
    "lambda_rate",
    "lambda_reg",
    "gof_length",
    "iters_intra",
    "iters_pred",
    "rays_per_batch",
    "samples",
    "lr_grid",
    "lr_mlp",
    "lr_laplace",
    "lr_final_ratio",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "seed",
    "warm_start",
    "background",
    "coef_init",
    "basis_init",
    "laplace_b_init",
    "feature_noise",
    "stop_transmittance",
    "coef_dims",
    "coef_channels",
    "levels",
    "hidden",
    "direction_octaves",
    "feature_scale",
];

impl RunConfig {
    /// Settings sized for a single CPU core: 48x48 views, 8^3 coefficient
    /// grid, width-32 MLP, 1000 intra and 200 predicted iterations.
    pub fn desk() -> Self {
        let train = TrainConfig {
            iters_intra: 1000,
            iters_pred: 200,
            rays_per_batch: 256,
            samples: 32,
            lr_grid: 0.05,
            lr_laplace: 0.05,
            coef_init: 4.0,
            basis_init: 4.0,
            ..TrainConfig::default()
        };
        let shapes = FieldShapes { coef_dims: [8; 3], hidden: vec![32, 32], ..FieldShapes::default() };
        Self { train, shapes, dataset: None }
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {:?}", v))
        }
        fn flag(v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(format!("expected a boolean, got {:?}", v)),
            }
        }
        fn list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
            parse_list(v).ok_or_else(|| format!("cannot parse list {:?}", v))
        }
        let t = &mut self.train;
        let s = &mut self.shapes;
        match key {
            "profile" => {
                let dataset = self.dataset.take();
                *self = match value {
                    "default" => RunConfig::default(),
                    "desk" => RunConfig::desk(),
                    _ => return Err(format!("unknown profile {:?} (default, desk)", value)),
                };
                self.dataset = dataset;
            }
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "lambda_rate" | "lambda1" => t.lambda_rate = num(value)?,
            "lambda_reg" | "lambda2" => t.lambda_reg = num(value)?,
            "gof_length" => t.gof_length = num(value)?,
            "iters_intra" => t.iters_intra = num(value)?,
            "iters_pred" => t.iters_pred = num(value)?,
            "rays_per_batch" => t.rays_per_batch = num(value)?,
            "samples" => t.samples = num(value)?,
            "lr_grid" => t.lr_grid = num(value)?,
            "lr_mlp" => t.lr_mlp = num(value)?,
            "lr_laplace" => t.lr_laplace = num(value)?,
            "lr_final_ratio" => t.lr_final_ratio = num(value)?,
            "adam_beta1" => t.adam.beta1 = num(value)?,
            "adam_beta2" => t.adam.beta2 = num(value)?,
            "adam_eps" => t.adam.eps = num(value)?,
            "seed" => t.seed = num(value)?,
            "warm_start" => t.warm_start = flag(value)?,
            "background" => {
                let v: Vec<f64> = list(value)?;
                t.background = match v.len() {
                    1 => [v[0]; 3],
                    3 => [v[0], v[1], v[2]],
                    _ => return Err("background needs one or three values".into()),
                };
            }
            "coef_init" => t.coef_init = num(value)?,
            "basis_init" => t.basis_init = num(value)?,
            "laplace_b_init" => t.laplace_b_init = num(value)?,
            "feature_noise" => t.feature_noise = flag(value)?,
            "stop_transmittance" => t.stop_transmittance = num(value)?,
            "coef_dims" => {
                let v: Vec<usize> = list(value)?;
                s.coef_dims = match v.len() {
                    1 => [v[0]; 3],
                    3 => [v[0], v[1], v[2]],
                    _ => return Err("coef_dims needs one or three values".into()),
                };
            }
            "coef_channels" => s.coef_channels = num(value)?,
            "levels" => {
                // dims:channels:frequency per level, comma separated
                let mut levels = Vec::new();
                for part in value.split(',') {
                    let f: Vec<&str> = part.trim().split(':').collect();
                    if f.len() != 3 {
                        return Err(format!("level {:?} is not dims:channels:frequency", part));
                    }
                    levels.push(LevelSpec { dims: [num(f[0])?; 3], channels: num(f[1])?, frequency: num(f[2])? });
                }
                s.levels = levels;
            }
            "hidden" => s.hidden = list(value)?,
            "direction_octaves" => s.direction_octaves = num(value)?,
            "feature_scale" => s.feature_scale = num(value)?,
            _ => return Err(format!("unknown key {:?}", key)),
        }
        Ok(())
    }

    /// Apply `key=value` pairs in order.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v).map_err(|m| Error::Usage(format!("{}: {}", k, m)))?;
        }
        Ok(())
    }

    /// Read a config file. A `profile` key is applied before the others, and
    /// a relative `dataset` path is taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let kv = parse_key_values(&text, path)?;
        let mut cfg = RunConfig::default();
        if let Some(p) = kv.get("profile") {
            cfg.set("profile", p).map_err(|m| Error::parse(path, m))?;
        }
        for (k, v) in kv.iter().filter(|(k, _)| k.as_str() != "profile") {
            cfg.set(k, v).map_err(|m| Error::parse(path, format!("{}: {}", k, m)))?;
        }
        if let Some(d) = &cfg.dataset {
            if d.is_relative() {
                cfg.dataset = Some(path.parent().unwrap_or(Path::new(".")).join(d));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.shapes.validate()?;
        Ok(())
    }

    /// The configuration as a loadable file.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let s = &self.shapes;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        if let Some(d) = &self.dataset {
            out += &format!("dataset={}\n", d.display());
        }
        out += &format!(
            "lambda_rate={}\nlambda_reg={}\ngof_length={}\niters_intra={}\niters_pred={}\nrays_per_batch={}\nsamples={}\n",
            t.lambda_rate, t.lambda_reg, t.gof_length, t.iters_intra, t.iters_pred, t.rays_per_batch, t.samples
        );
        out += &format!(
            "lr_grid={}\nlr_mlp={}\nlr_laplace={}\nlr_final_ratio={}\nadam_beta1={}\nadam_beta2={}\nadam_eps={}\nseed={}\n",
            t.lr_grid, t.lr_mlp, t.lr_laplace, t.lr_final_ratio, t.adam.beta1, t.adam.beta2, t.adam.eps, t.seed
        );
        out += &format!(
            "warm_start={}\nbackground={}\ncoef_init={}\nbasis_init={}\nlaplace_b_init={}\nfeature_noise={}\nstop_transmittance={}\n",
            t.warm_start,
            join(&t.background),
            t.coef_init,
            t.basis_init,
            t.laplace_b_init,
            t.feature_noise,
            t.stop_transmittance
        );
        let levels: Vec<String> = s
            .levels
            .iter()
            .map(|l| format!("{}:{}:{}", l.dims[0], l.channels, l.frequency))
            .collect();
        out += &format!(
            "coef_dims={}\ncoef_channels={}\nlevels={}\nhidden={}\ndirection_octaves={}\nfeature_scale={}\n",
            s.coef_dims.map(|d| d.to_string()).join(","),
            s.coef_channels,
            levels.join(","),
            s.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
            s.direction_octaves,
            s.feature_scale
        );
        out
    }
}

/// Split `key=value` override strings.
pub fn split_overrides(items: &[String]) -> Result<Vec<(&str, &str)>> {
    items
        .iter()
        .map(|s| s.split_once('=').map(|(k, v)| (k.trim(), v.trim())).ok_or_else(|| Error::Usage(format!("override {:?} is not key=value", s))))
        .collect()
}
