//! Flat `key=value` configuration, overridden by flags of the same names.

use std::collections::BTreeMap;
use std::path::PathBuf;

use kp5_core::runs::{Experiment, RunConfig};
use serde::Serialize;

pub const KEYS: [&str; 10] = ["nx", "ny", "lx", "ly", "alpha", "t_max", "dt", "small_data_delta", "picard_tol", "seed"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(flatten)]
    pub run: RunConfig,
    pub output_dir: PathBuf,
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key=value, got '{line}'", n + 1))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(format!("config line {}: unknown key '{k}'", n + 1));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("malformed value for '{key}': '{v}'"))
}

fn positive(key: &str, v: &str) -> Result<f64, String> {
    let x: f64 = num(key, v)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(format!("'{key}' must be positive, got {v}"));
    }
    Ok(x)
}

/// Applies `values` (file first, then flags) on top of the defaults.
pub fn parse_config(
    experiment: &str,
    file: &BTreeMap<String, String>,
    flags: &BTreeMap<String, String>,
    output_dir: Option<PathBuf>,
) -> Result<ExperimentConfig, String> {
    let experiment: Experiment = experiment.parse().map_err(|e: kp5_core::Kp5Error| e.to_string())?;
    let mut run = RunConfig::default();
    let mut merged = file.clone();
    merged.extend(flags.iter().map(|(k, v)| (k.clone(), v.clone())));
    for (k, v) in &merged {
        match k.as_str() {
            "nx" => run.nx = num(k, v)?,
            "ny" => run.ny = num(k, v)?,
            "lx" => run.lx = positive(k, v)?,
            "ly" => run.ly = positive(k, v)?,
            "alpha" => {
                let a: f64 = num(k, v)?;
                if !(a > 0.0 && a.is_finite()) {
                    return Err(format!("'alpha' = {v} rejected: alpha > 0 required"));
                }
                run.alpha = a;
            }
            "t_max" => run.t_max = positive(k, v)?,
            "dt" => run.dt = if v == "auto" { None } else { Some(positive(k, v)?) },
            "small_data_delta" => run.small_data_delta = positive(k, v)?,
            "picard_tol" => run.picard_tol = positive(k, v)?,
            "seed" => run.seed = num(k, v)?,
            _ => return Err(format!("unknown key '{k}'")),
        }
    }
    let output_dir = output_dir.ok_or("missing --out directory")?;
    Ok(ExperimentConfig { experiment, run, output_dir })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("resonance", &parse_file("").unwrap(), &BTreeMap::new(), Some("o".into())).unwrap();
        assert_eq!(c.run, RunConfig::default());
        assert_eq!(c.experiment, Experiment::Resonance);
    }

    #[test]
    fn flag_overrides_file() {
        let file = parse_file("# profile\nseed = 7\nalpha=2.5\n").unwrap();
        let c = parse_config("kernel", &file, &flags(&[("seed", "9")]), Some("o".into())).unwrap();
        assert_eq!((c.run.seed, c.run.alpha), (9, 2.5));
    }

    #[test]
    fn rejections_name_the_key() {
        let none = BTreeMap::new();
        let e = parse_config("kernel", &none, &flags(&[("alpha", "-1")]), Some("o".into())).unwrap_err();
        assert!(e.contains("alpha > 0 required"), "{e}");
        let e = parse_config("kernel", &none, &flags(&[("nx", "six")]), Some("o".into())).unwrap_err();
        assert!(e.contains("'nx'"), "{e}");
        assert!(parse_file("bogus=1").unwrap_err().contains("unknown key 'bogus'"));
        assert!(parse_file("novalue").is_err());
        assert!(parse_config("nope", &none, &none, Some("o".into())).is_err());
        assert!(parse_config("kernel", &none, &none, None).unwrap_err().contains("--out"));
        let c = parse_config("kernel", &none, &flags(&[("dt", "auto")]), Some("o".into())).unwrap();
        assert_eq!(c.run.dt, None);
    }
}
