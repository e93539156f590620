//! Flat key/value configuration: one JSON object, no nesting, every key
//! optional. Command-line flags override file values; defaults fill the
//! rest. The fully resolved configuration is embedded in each run report
//! and round-trips losslessly through the same format.

use prf_core::bias::{Budget, QValue};
use prf_core::functions::RegressionFn;
use prf_core::models::ModelSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConfig {
    pub command: Option<String>,
    pub model: Option<String>,
    /// Split count (toy/purf/ubprf) or target leaves (holdout).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Depth of the balanced/midpoint models (2^p leaves).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Comma-separated midpoint coordinate weights.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_prime: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mtry: Option<usize>,
    #[serde(rename = "fn", skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    /// `lo:hi` (powers of two) or a comma-separated list of k values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_last: Option<bool>,
    /// Comma-separated forest sizes, e.g. `1,16,inf`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_list: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_u_tree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_u_inf: Option<usize>,
    /// `full`, `borderless` or `both`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub border: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test_x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_replicates: Option<usize>,
    /// Anchor point: one coordinate, or comma-separated for d > 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot: Option<bool>,
}

macro_rules! take_first {
    ($self:ident, $base:ident; $($field:ident),* $(,)?) => {
        RawConfig { $($field: $self.$field.or($base.$field)),* }
    };
}

impl RawConfig {
    /// Overlay `self` (higher precedence) on `base`.
    pub fn merge_over(self, base: RawConfig) -> RawConfig {
        take_first!(self, base;
            command, model, k, p, d, weights, n_prime, sigma_prime, mtry,
            function, grid, drop_last, q_list, q, n_x, n_u_tree, n_u_inf,
            border, eps, stratified, n, sigma, n_replicates, n_test_x,
            direct_replicates, x, t_points, reps, seed, out_dir, plot)
    }

    pub fn load(path: &Path) -> Result<RawConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> &str {
        self.out_dir.as_deref().unwrap_or(".")
    }

    /// Build the model, resolving the size parameter from `k`/`p` (with
    /// `size_override` taking precedence during grid sweeps).
    pub fn resolve_model(&self, size_override: Option<usize>) -> Result<ModelSpec, String> {
        let name = self.model.as_deref().ok_or("missing 'model'")?;
        let k = size_override.or(self.k);
        let d = self.d;
        let spec = match name {
            "toy" => ModelSpec::Toy { k: k.ok_or("toy needs --k")? },
            "purf" => ModelSpec::Purf { k: k.ok_or("purf needs --k")? },
            "bprf" => ModelSpec::Bprf {
                depth: self.resolve_depth(size_override)?,
                dim: d.unwrap_or(1),
            },
            "ubprf" => ModelSpec::Ubprf { k: k.ok_or("ubprf needs --k")?, dim: d.unwrap_or(1) },
            "midpoint" => {
                let dim = d.unwrap_or(1);
                let weights = match &self.weights {
                    Some(w) => parse_f64_list(w)?,
                    None => vec![1.0 / dim as f64; dim],
                };
                ModelSpec::Midpoint { depth: self.resolve_depth(size_override)?, dim, weights }
            }
            "holdout" => {
                let leaves = k.ok_or("holdout needs --k (target leaves)")?;
                ModelSpec::Holdout {
                    leaves,
                    dim: d.unwrap_or(1),
                    n_prime: self.n_prime.unwrap_or(leaves * leaves),
                    sigma: self.sigma_prime.unwrap_or(0.25),
                    mtry: self.mtry,
                }
            }
            other => {
                return Err(format!(
                    "unknown model '{other}'; valid choices: toy, purf, bprf, ubprf, midpoint, holdout"
                ))
            }
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    /// Depth of the recursive models: `--p`, or `log2` of a leaf-count
    /// override coming from a sweep grid.
    fn resolve_depth(&self, size_override: Option<usize>) -> Result<usize, String> {
        match (size_override, self.p) {
            (Some(leaves), _) => {
                if !leaves.is_power_of_two() {
                    return Err(format!("leaf count {leaves} is not a power of two"));
                }
                Ok(leaves.trailing_zeros() as usize)
            }
            (None, Some(p)) => Ok(p),
            (None, None) => Err("recursive models need --p (or a k grid of powers of two)".into()),
        }
    }

    pub fn resolve_function(&self, dim: usize) -> Result<RegressionFn, String> {
        let name = self.function.as_deref().ok_or("missing 'fn'")?;
        RegressionFn::from_name(name, dim).map_err(|e| e.to_string())
    }

    pub fn resolve_budget(&self, spec: &ModelSpec) -> Budget {
        let mut b = Budget::default_for(spec);
        if let Some(v) = self.n_x {
            b.n_x = v;
        }
        if let Some(v) = self.n_u_tree {
            b.n_u_tree = v;
        }
        if let Some(v) = self.n_u_inf {
            b.n_u_inf = v;
        }
        b
    }

    pub fn resolve_q_list(&self, default: &str) -> Result<Vec<QValue>, String> {
        let text = self.q_list.as_deref().unwrap_or(default);
        text.split(',')
            .map(|s| QValue::parse(s.trim()).map_err(|e| e.to_string()))
            .collect()
    }

    pub fn resolve_grid(&self) -> Result<Vec<usize>, String> {
        let mut grid = match self.grid.as_deref() {
            None => vec![32, 64, 128, 256, 512],
            Some(spec) if spec.contains(':') => {
                let (lo, hi) = spec.split_once(':').unwrap();
                let lo: usize = lo.parse().map_err(|_| format!("bad grid bound '{lo}'"))?;
                let hi: usize = hi.parse().map_err(|_| format!("bad grid bound '{hi}'"))?;
                if lo == 0 || hi < lo {
                    return Err(format!("bad grid '{spec}'"));
                }
                let mut g = Vec::new();
                let mut k = lo;
                while k <= hi {
                    g.push(k);
                    k *= 2;
                }
                g
            }
            Some(list) => {
                let mut g = Vec::new();
                for part in list.split(',') {
                    g.push(part.trim().parse().map_err(|_| format!("bad grid entry '{part}'"))?);
                }
                g
            }
        };
        if self.drop_last == Some(true) && grid.len() > 3 {
            grid.pop();
        }
        if grid.len() < 3 {
            return Err("rate grids need at least 3 sizes".into());
        }
        Ok(grid)
    }

    pub fn resolve_x(&self, dim: usize, default: f64) -> Result<Vec<f64>, String> {
        match &self.x {
            None => Ok(vec![default; dim]),
            Some(text) => {
                let v = parse_f64_list(text)?;
                if v.len() == 1 && dim > 1 {
                    Ok(vec![v[0]; dim])
                } else if v.len() == dim {
                    Ok(v)
                } else {
                    Err(format!("x has {} coordinates, model has {dim}", v.len()))
                }
            }
        }
    }
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad number '{s}'")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_prefers_overlay() {
        let file = RawConfig { k: Some(64), seed: Some(1), ..Default::default() };
        let flags = RawConfig { k: Some(128), ..Default::default() };
        let merged = flags.merge_over(file);
        assert_eq!(merged.k, Some(128));
        assert_eq!(merged.seed, Some(1));
    }

    #[test]
    fn round_trips_losslessly() {
        let cfg = RawConfig {
            command: Some("rate-sweep".into()),
            model: Some("toy".into()),
            function: Some("sinusoidal".into()),
            grid: Some("32:256".into()),
            seed: Some(7),
            eps: Some(0.03125),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RawConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RawConfig>("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn grid_parsing() {
        let cfg = RawConfig { grid: Some("32:512".into()), ..Default::default() };
        assert_eq!(cfg.resolve_grid().unwrap(), vec![32, 64, 128, 256, 512]);
        let cfg = RawConfig {
            grid: Some("32:512".into()),
            drop_last: Some(true),
            ..Default::default()
        };
        assert_eq!(cfg.resolve_grid().unwrap(), vec![32, 64, 128, 256]);
        let cfg = RawConfig { grid: Some("8,16,64".into()), ..Default::default() };
        assert_eq!(cfg.resolve_grid().unwrap(), vec![8, 16, 64]);
    }

    #[test]
    fn unknown_model_lists_choices() {
        let cfg = RawConfig { model: Some("cart".into()), k: Some(4), ..Default::default() };
        let err = cfg.resolve_model(None).unwrap_err();
        assert!(err.contains("toy, purf, bprf"));
    }

    #[test]
    fn holdout_defaults() {
        let cfg = RawConfig { model: Some("holdout".into()), k: Some(32), d: Some(5), ..Default::default() };
        match cfg.resolve_model(None).unwrap() {
            ModelSpec::Holdout { n_prime, sigma, mtry, .. } => {
                assert_eq!(n_prime, 1024);
                assert_eq!(sigma, 0.25);
                assert_eq!(mtry, None);
            }
            _ => panic!(),
        }
    }
}
