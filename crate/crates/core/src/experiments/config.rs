//! `key = value` settings files, `--key value` overrides and the
//! `VAKON_SETTINGS` defaults file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cartpole::continuous::ReducedState;
use crate::cartpole::CartPoleParams;
use crate::cartpole::diagnostics::MultiplierScale;
use crate::types::{ConfigPoint, Coords, SolverSettings};

use super::ExperimentError;

pub const SETTINGS_ENV: &str = "VAKON_SETTINGS";

/// Raw settings in insertion-independent order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ExperimentError::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(ExperimentError::Config(format!("line {}: empty key", i + 1)));
            }
            entries.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Later sources win.
    pub fn merge(&mut self, other: RawConfig) {
        self.entries.extend(other.entries);
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| ExperimentError::Config(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ExperimentError> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|e| ExperimentError::Config(format!("{key} = {v:?}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Settings file from `VAKON_SETTINGS` (if set), then `--config`, then flags.
    ///
    /// Flags are `--key value` pairs; `--flag` followed by another flag or
    /// nothing is read as `true`.
    pub fn from_sources(args: &[String], env: Option<&str>) -> Result<Self, ExperimentError> {
        let flags = parse_flags(args)?;
        let mut out = RawConfig::default();
        if let Some(path) = env.filter(|p| !p.is_empty()) {
            out.merge(RawConfig::load(Path::new(path))?);
        }
        if let Some(path) = flags.get("config") {
            out.merge(RawConfig::load(Path::new(path))?);
        }
        let mut flags = flags;
        flags.entries.remove("config");
        out.merge(flags);
        Ok(out)
    }
}

fn parse_flags(args: &[String]) -> Result<RawConfig, ExperimentError> {
    let mut out = RawConfig::default();
    let mut i = 0;
    while i < args.len() {
        let key = args[i]
            .strip_prefix("--")
            .ok_or_else(|| ExperimentError::Config(format!("unexpected argument {:?}", args[i])))?;
        if let Some((k, v)) = key.split_once('=') {
            out.set(k, v);
            i += 1;
        } else if i + 1 < args.len() && !args[i + 1].starts_with("--") {
            out.set(key, &args[i + 1]);
            i += 2;
        } else {
            out.set(key, "true");
            i += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    CartPole,
    /// Free second-difference problem in the plane; no constraints.
    Toy,
}

/// Initial data for the flow.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedData {
    Explicit { q: [ConfigPoint; 4], lam: [Coords; 2] },
    /// Seed matched to the continuous solution through this state.
    Matched(ReducedState),
}

pub const KNOWN_KEYS: &[&str] = &[
    "model", "M", "m", "l", "g", "hbar", "h", "N", "q0", "q1", "q2", "q3", "lam0", "lam1", "state0",
    "b0", "b1", "b2", "b3", "newton_tol", "max_iter", "singular_tol", "backtrack_max",
    "project", "csv", "svg", "h_list", "T", "homotopy", "corrupt", "early", "scale", "samples",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    pub params: CartPoleParams,
    pub h: f64,
    pub n_last: usize,
    pub seed: Option<SeedData>,
    /// `(q_0, q_1, q_{N-1}, q_N)`.
    pub boundary: Option<[ConfigPoint; 4]>,
    pub settings: SolverSettings,
    pub project: bool,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub h_list: Vec<f64>,
    pub horizon: f64,
    /// Continuation stages for the oracle; 0 solves directly.
    pub homotopy: usize,
    /// Test hook: name of an analytic partial to corrupt in `check`.
    pub corrupt: Option<String>,
    pub early: usize,
    pub scale: MultiplierScale,
    pub samples: usize,
}

fn point(raw: &RawConfig, key: &str) -> Result<Option<ConfigPoint>, ExperimentError> {
    raw.list(key)?
        .map(|v| ConfigPoint::from_slice(&v).map_err(|e| ExperimentError::Config(format!("{key}: {e}"))))
        .transpose()
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ExperimentError> {
        if let Some(bad) = raw.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(ExperimentError::Config(format!("unknown key {bad:?}")));
        }
        let model = match raw.get("model").unwrap_or("cartpole") {
            "cartpole" => Model::CartPole,
            "toy" => Model::Toy,
            other => return Err(ExperimentError::Config(format!("unknown model {other:?}"))),
        };
        let d = CartPoleParams::default();
        let params = CartPoleParams::new(
            raw.or("M", d.big_m)?,
            raw.or("m", d.m)?,
            raw.or("l", d.l)?,
            raw.or("g", d.g)?,
            raw.or("hbar", d.hbar)?,
        )
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
        let h: f64 = raw.or("h", 0.01)?;
        if !(h.is_finite() && h > 0.0) {
            return Err(ExperimentError::Config(format!("h must be positive, got {h}")));
        }
        let ds = SolverSettings::default();
        let settings = SolverSettings {
            newton_tol: raw.or("newton_tol", ds.newton_tol)?,
            max_iter: raw.or("max_iter", ds.max_iter)?,
            singular_tol: raw.or("singular_tol", ds.singular_tol)?,
            backtrack_max: raw.or("backtrack_max", ds.backtrack_max)?,
            ..ds
        };
        settings.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;

        let explicit = ["q0", "q1", "q2", "q3", "lam0", "lam1"];
        let seed = if raw.contains("state0") {
            if explicit.iter().any(|k| raw.contains(k)) {
                return Err(ExperimentError::Config("give either state0 or q0..q3/lam0/lam1, not both".into()));
            }
            let v = raw.list("state0")?.unwrap_or_default();
            let a: [f64; 8] = v.try_into().map_err(|_| {
                ExperimentError::Config(
                    "state0 needs x,theta,xdot,thetadot,xddot,p1theta,p1theta_dot,pi_dot".into(),
                )
            })?;
            let state = ReducedState::from_physical(&params, a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]);
            Some(SeedData::Matched(state))
        } else if explicit.iter().any(|k| raw.contains(k)) {
            let mut q = Vec::with_capacity(4);
            for k in &explicit[..4] {
                q.push(point(raw, k)?.ok_or_else(|| ExperimentError::Config(format!("seed needs {k}")))?);
            }
            let lam = |k: &str| -> Result<Coords, ExperimentError> {
                Ok(Coords::from_vec(raw.list(k)?.unwrap_or_default()))
            };
            let q: [ConfigPoint; 4] = q.try_into().expect("four points");
            Some(SeedData::Explicit { q, lam: [lam("lam0")?, lam("lam1")?] })
        } else {
            None
        };
        let boundary = {
            let keys = ["b0", "b1", "b2", "b3"];
            if keys.iter().any(|k| raw.contains(k)) {
                let mut b = Vec::with_capacity(4);
                for k in keys {
                    b.push(point(raw, k)?.ok_or_else(|| ExperimentError::Config(format!("boundary needs {k}")))?);
                }
                Some(b.try_into().expect("four points"))
            } else {
                None
            }
        };
        let scale = match raw.get("scale").unwrap_or("calibrated") {
            "calibrated" => MultiplierScale::Calibrated,
            "theoretical" => MultiplierScale::Theoretical,
            v => MultiplierScale::Fixed(
                v.parse()
                    .map_err(|e| ExperimentError::Config(format!("scale = {v:?}: {e}")))?,
            ),
        };
        Ok(Self {
            model,
            params,
            h,
            n_last: raw.or("N", 200)?,
            seed,
            boundary,
            settings,
            project: raw.or("project", false)?,
            csv: raw.get("csv").map(PathBuf::from),
            svg: raw.get("svg").map(PathBuf::from),
            h_list: raw.list("h_list")?.unwrap_or_else(|| vec![0.02, 0.01, 0.005]),
            horizon: raw.or("T", 1.0)?,
            homotopy: raw.or("homotopy", 0)?,
            corrupt: raw.get("corrupt").map(str::to_string),
            early: raw.or("early", 50)?,
            scale,
            samples: raw.or("samples", 100)?,
        })
    }

    pub fn require_seed(&self) -> Result<&SeedData, ExperimentError> {
        if self.boundary.is_some() {
            return Err(ExperimentError::Config("flow runs take seed data, not boundary data".into()));
        }
        self.seed
            .as_ref()
            .ok_or_else(|| ExperimentError::Config("flow runs need q0..q3 with lam0/lam1, or state0".into()))
    }

    pub fn require_boundary(&self) -> Result<[&ConfigPoint; 4], ExperimentError> {
        if self.seed.is_some() {
            return Err(ExperimentError::Config("boundary runs take b0..b3, not seed data".into()));
        }
        let b = self
            .boundary
            .as_ref()
            .ok_or_else(|| ExperimentError::Config("boundary runs need b0, b1, b2, b3".into()))?;
        Ok([&b[0], &b[1], &b[2], &b[3]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let raw = RawConfig::parse("# header\n\nh = 0.05   # step\nN=20\n").unwrap();
        assert_eq!(raw.get("h"), Some("0.05"));
        assert_eq!(raw.get("N"), Some("20"));
        assert!(RawConfig::parse("just words").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "h = 0.05\nN = 20\n").unwrap();
        let env = dir.path().join("defaults.cfg");
        std::fs::write(&env, "h = 0.1\nm = 0.2\n").unwrap();
        let a = args(&format!("--config {} --N 30 --project", file.display()));
        let raw = RawConfig::from_sources(&a, env.to_str()).unwrap();
        assert_eq!(raw.get("h"), Some("0.05"));
        assert_eq!(raw.get("N"), Some("30"));
        assert_eq!(raw.get("m"), Some("0.2"));
        assert_eq!(raw.get("project"), Some("true"));
    }

    #[test]
    fn seed_and_boundary_modes_are_exclusive() {
        let mut raw = RawConfig::parse("q0=0,0\nq1=0,0\nq2=0,0\nq3=0,0\nlam0=0\nlam1=0").unwrap();
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert!(cfg.require_seed().is_ok());
        assert!(cfg.require_boundary().is_err());
        raw.set("b0", "0,0");
        raw.set("b1", "0,0");
        raw.set("b2", "0,0");
        raw.set("b3", "0,0");
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert!(cfg.require_seed().is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_params() {
        assert!(ExperimentConfig::from_raw(&RawConfig::parse("stepsize = 1").unwrap()).is_err());
        assert!(ExperimentConfig::from_raw(&RawConfig::parse("m = 0").unwrap()).is_err());
        assert!(ExperimentConfig::from_raw(&RawConfig::parse("h = -1").unwrap()).is_err());
    }
}
