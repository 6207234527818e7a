//! Run configuration: a TOML file merged under command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use qwick_core::distribution::QExpParams;
use qwick_core::estimator::read_dense_matrix_csv;
use qwick_core::tensor::{Dims, RotationTensor};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Options shared by every subcommand. All optional so a config file can
/// supply them; flags win.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Common {
    /// Shape parameter K (> 3/2); conflicts with --D.
    #[arg(long = "K", global = true, conflicts_with = "d")]
    pub k: Option<f64>,
    /// Mixture degrees of freedom D = 2K - 1 (> 2).
    #[arg(long = "D", global = true)]
    pub d: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Number of assets.
    #[arg(long = "N", global = true)]
    pub n: Option<usize>,
    /// Number of time steps.
    #[arg(long = "T", global = true)]
    pub t: Option<usize>,
    /// identity | file:PATH | kron:PATH_A,PATH_B
    #[arg(long, global = true)]
    pub rotation: Option<String>,
    #[arg(long, global = true)]
    pub nmax: Option<usize>,
    /// "7", "1,2,3" or "0..200" (end exclusive).
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file with [params], [dims] and [run] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    params: ParamsSection,
    #[serde(default)]
    dims: DimsSection,
    #[serde(default)]
    run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSection {
    #[serde(rename = "K")]
    k: Option<f64>,
    #[serde(rename = "D")]
    d: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsSection {
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "T")]
    t: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    rotation: Option<String>,
    nmax: Option<usize>,
    seeds: Option<String>,
    out: Option<PathBuf>,
    format: Option<Format>,
    threads: Option<usize>,
}

/// Flags merged over the config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub k: Option<f64>,
    pub d: Option<f64>,
    pub sigma: f64,
    pub n: Option<usize>,
    pub t: Option<usize>,
    pub rotation: String,
    pub nmax: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn resolve(flags: &Common) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str::<FileConfig>(&text).map_err(|e| {
                    CliError::Usage(format!("invalid config {}: {e}", path.display()))
                })?
            }
            None => FileConfig::default(),
        };
        // A flag for either shape parameter overrides both file entries.
        let (k, d) = if flags.k.is_some() || flags.d.is_some() {
            (flags.k, flags.d)
        } else {
            (file.params.k, file.params.d)
        };
        if k.is_some() && d.is_some() {
            return Err(CliError::Usage("give exactly one of K and D".into()));
        }
        let seeds = flags
            .seeds
            .clone()
            .or(file.run.seeds)
            .map(|s| parse_seeds(&s))
            .transpose()?;
        Ok(RunConfig {
            k,
            d,
            sigma: flags.sigma.or(file.params.sigma).unwrap_or(1.0),
            n: flags.n.or(file.dims.n),
            t: flags.t.or(file.dims.t),
            rotation: flags
                .rotation
                .clone()
                .or(file.run.rotation)
                .unwrap_or_else(|| "identity".into()),
            nmax: flags.nmax.or(file.run.nmax),
            seeds,
            out: flags.out.clone().or(file.run.out),
            format: flags.format.or(file.run.format),
            threads: flags.threads.or(file.run.threads),
        })
    }

    pub fn params(&self) -> Result<QExpParams<f64>, CliError> {
        let p = match (self.k, self.d) {
            (Some(k), None) => QExpParams::from_k(k, self.sigma)?,
            (None, Some(d)) => QExpParams::from_d(d, self.sigma)?,
            (None, None) => {
                return Err(CliError::Usage(
                    "missing shape parameter: pass --K or --D".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("give exactly one of --K and --D".into()))
            }
        };
        Ok(p)
    }

    pub fn params_or(&self, k: f64) -> Result<QExpParams<f64>, CliError> {
        if self.k.is_none() && self.d.is_none() {
            Ok(QExpParams::from_k(k, self.sigma)?)
        } else {
            self.params()
        }
    }

    pub fn dims(&self) -> Result<Dims, CliError> {
        match (self.n, self.t) {
            (Some(n), Some(t)) => Ok(Dims::new(n, t)?),
            _ => Err(CliError::Usage(
                "missing dimensions: pass --N and --T".into(),
            )),
        }
    }

    pub fn nmax(&self, default: usize) -> usize {
        self.nmax.unwrap_or(default)
    }

    pub fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    pub fn rotation_tensor(&self) -> Result<Arc<RotationTensor<f64>>, CliError> {
        let spec = self.rotation.trim();
        let tensor = if spec == "identity" {
            RotationTensor::identity(self.dims()?)
        } else if let Some(path) = spec.strip_prefix("file:") {
            let dims = self.dims()?;
            RotationTensor::dense(dims, read_dense_matrix_csv(Path::new(path))?)?
        } else if let Some(rest) = spec.strip_prefix("kron:") {
            let (a, b) = rest.split_once(',').ok_or_else(|| {
                CliError::Usage(format!("kron rotation needs two paths, got {rest:?}"))
            })?;
            let a = read_dense_matrix_csv(Path::new(a))?;
            let b = read_dense_matrix_csv(Path::new(b))?;
            let o = RotationTensor::kronecker(a, b)?;
            let dims = o.dims();
            if self.n.is_some_and(|n| n != dims.n) || self.t.is_some_and(|t| t != dims.t) {
                return Err(CliError::Usage(format!(
                    "Kronecker factors give N = {}, T = {}, which disagrees with --N/--T",
                    dims.n, dims.t
                )));
            }
            o
        } else {
            return Err(CliError::Usage(format!(
                "unknown rotation {spec:?}; expected identity, file:PATH or kron:PATH_A,PATH_B"
            )));
        };
        Ok(Arc::new(tensor))
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse seeds {s:?}; use 7, 1,2,3 or 0..200"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| bad()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("1, 2,3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("0..4").unwrap(), vec![0, 1, 2, 3]);
        assert!(parse_seeds("4..4").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[params]\nK = 4.0\nsigma = 2.0\n[dims]\nN = 3\nT = 9\n[run]\nnmax = 2\n",
        )
        .unwrap();
        let flags = Common {
            sigma: Some(1.5),
            config: Some(path),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.sigma, 1.5);
        assert_eq!(cfg.k, Some(4.0));
        assert_eq!((cfg.n, cfg.t, cfg.nmax), (Some(3), Some(9), Some(2)));
        let flags = Common {
            d: Some(9.0),
            ..flags
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!((cfg.k, cfg.d), (None, Some(9.0)));
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[params]\nkappa = 1\n").unwrap();
        let flags = Common {
            config: Some(path),
            ..Default::default()
        };
        assert!(matches!(
            RunConfig::resolve(&flags),
            Err(CliError::Usage(_))
        ));
    }
}
