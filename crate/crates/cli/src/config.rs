//! Flat key=value config files and the delay/construction string grammars.

use acm_core::construction::{ConstructionSpec, MixComponent};
use acm_core::delay::{DelayModel, DelaySpec, DEFAULT_CENSOR_EPS};
use std::path::{Path, PathBuf};

/// Parse a delay spec string: `det:C`, `geometric:P`,
/// `shifted-geometric:SHIFT:P`, `finite:V1=P1,V2=P2,...`.
pub fn parse_delay(s: &str) -> Result<DelayModel, String> {
    let (kind, rest) = match s.split_once(':') {
        Some((k, r)) => (k, r),
        None => (s, ""),
    };
    let spec = match kind {
        "det" | "deterministic" => {
            let c: u32 = rest
                .parse()
                .map_err(|_| format!("bad deterministic delay {rest:?}"))?;
            DelaySpec::Deterministic(c)
        }
        "geometric" | "geo" => {
            let p: f64 = rest
                .parse()
                .map_err(|_| format!("bad geometric parameter {rest:?}"))?;
            DelaySpec::Geometric(p)
        }
        "shifted-geometric" => {
            let (shift, p) = rest
                .split_once(':')
                .ok_or_else(|| "shifted-geometric needs SHIFT:P".to_string())?;
            let shift: u32 = shift
                .parse()
                .map_err(|_| format!("bad shift {shift:?}"))?;
            let p: f64 = p.parse().map_err(|_| format!("bad parameter {p:?}"))?;
            DelaySpec::ShiftedGeometric { shift, p }
        }
        "finite" => {
            let mut pairs = Vec::new();
            for item in rest.split(',') {
                let (v, p) = item
                    .split_once('=')
                    .ok_or_else(|| format!("finite entry {item:?} needs V=P"))?;
                let v: u32 = v.parse().map_err(|_| format!("bad value {v:?}"))?;
                let p: f64 = p.parse().map_err(|_| format!("bad weight {p:?}"))?;
                pairs.push((v, p));
            }
            DelaySpec::FiniteSupport(pairs)
        }
        other => return Err(format!("unknown delay kind {other:?}")),
    };
    DelayModel::new(spec).map_err(|e| e.to_string())
}

/// Parse a construction spec string: `nakamoto`, `kleaves:K`,
/// `all-leaves`, `mixture:K1=W1,...,inf=W`, `state-varying:K:ALPHA`,
/// `two-ended`.
pub fn parse_construction(s: &str) -> Result<ConstructionSpec, String> {
    let (kind, rest) = match s.split_once(':') {
        Some((k, r)) => (k, r),
        None => (s, ""),
    };
    let spec = match kind {
        "nakamoto" => ConstructionSpec::Nakamoto,
        "kleaves" => {
            let k: u32 = rest
                .parse()
                .map_err(|_| format!("bad leaf count {rest:?}"))?;
            ConstructionSpec::KLeaves(k)
        }
        "all-leaves" => ConstructionSpec::AllLeaves,
        "mixture" => {
            let mut parts = Vec::new();
            for item in rest.split(',') {
                let (key, w) = item
                    .split_once('=')
                    .ok_or_else(|| format!("mixture entry {item:?} needs KEY=WEIGHT"))?;
                let component = if key == "inf" {
                    MixComponent::AllLeaves
                } else {
                    let k: u32 = key
                        .parse()
                        .map_err(|_| format!("bad mixture key {key:?}"))?;
                    MixComponent::KLeaves(k)
                };
                let w: f64 = w.parse().map_err(|_| format!("bad weight {w:?}"))?;
                parts.push((component, w));
            }
            ConstructionSpec::Mixture(parts)
        }
        "state-varying" => {
            let (k, alpha) = rest
                .split_once(':')
                .ok_or_else(|| "state-varying needs K:ALPHA".to_string())?;
            let k: u32 = k.parse().map_err(|_| format!("bad leaf count {k:?}"))?;
            let alpha: f64 = alpha
                .parse()
                .map_err(|_| format!("bad alpha {alpha:?}"))?;
            ConstructionSpec::StateVarying { k, alpha }
        }
        "two-ended" => ConstructionSpec::TwoEndedExample,
        other => return Err(format!("unknown construction kind {other:?}")),
    };
    spec.validated().map_err(|e| e.to_string())
}

/// Merged run configuration. Sources, weakest first: built-in defaults,
/// config file, command-line flags, then the ACM_OUT_DIR environment
/// variable for the output directory.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub delay: Option<String>,
    pub construction: Option<String>,
    pub horizon: Option<u32>,
    pub replicas: Option<u32>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub margin: Option<u32>,
    pub censor_eps: Option<f64>,
    pub no_confirm: bool,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| format!("line {}: bad {what} {value:?}", lineno + 1);
            match key {
                "delay" => cfg.delay = Some(value.to_string()),
                "construction" => cfg.construction = Some(value.to_string()),
                "horizon" => cfg.horizon = Some(value.parse().map_err(|_| bad("horizon"))?),
                "replicas" => {
                    cfg.replicas = Some(value.parse().map_err(|_| bad("replicas"))?)
                }
                "seed" => cfg.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
                "margin" => cfg.margin = Some(value.parse().map_err(|_| bad("margin"))?),
                "censor_eps" => {
                    cfg.censor_eps = Some(value.parse().map_err(|_| bad("censor_eps"))?)
                }
                "no_confirm" => {
                    cfg.no_confirm = value.parse().map_err(|_| bad("no_confirm"))?
                }
                other => return Err(format!("line {}: unknown key {other:?}", lineno + 1)),
            }
        }
        Ok(cfg)
    }

    /// Overlay `over` on top of self: any field set there wins.
    pub fn merged_with(mut self, over: &RunConfig) -> RunConfig {
        if over.delay.is_some() {
            self.delay = over.delay.clone();
        }
        if over.construction.is_some() {
            self.construction = over.construction.clone();
        }
        if over.horizon.is_some() {
            self.horizon = over.horizon;
        }
        if over.replicas.is_some() {
            self.replicas = over.replicas;
        }
        if over.seed.is_some() {
            self.seed = over.seed;
        }
        if over.out_dir.is_some() {
            self.out_dir = over.out_dir.clone();
        }
        if over.margin.is_some() {
            self.margin = over.margin;
        }
        if over.censor_eps.is_some() {
            self.censor_eps = over.censor_eps;
        }
        self.no_confirm |= over.no_confirm;
        self
    }

    pub fn apply_env(mut self) -> RunConfig {
        if let Ok(dir) = std::env::var("ACM_OUT_DIR") {
            if !dir.is_empty() {
                self.out_dir = Some(PathBuf::from(dir));
            }
        }
        self
    }

    pub fn censor_eps(&self) -> f64 {
        self.censor_eps.unwrap_or(DEFAULT_CENSOR_EPS)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_delay_grammar() {
        assert_eq!(parse_delay("det:2").unwrap().min_support(), 2);
        assert!((parse_delay("geometric:0.5").unwrap().mean() - 2.0).abs() < 1e-12);
        assert_eq!(
            parse_delay("shifted-geometric:1:0.5").unwrap().min_support(),
            2
        );
        let m = parse_delay("finite:1=0.3,2=0.7").unwrap();
        assert!((m.mean() - 1.7).abs() < 1e-12);
        assert!(parse_delay("geometric:zzz").is_err());
        assert!(parse_delay("nope:1").is_err());
    }

    #[test]
    fn parses_construction_grammar() {
        assert_eq!(parse_construction("nakamoto").unwrap(), ConstructionSpec::Nakamoto);
        assert_eq!(
            parse_construction("kleaves:3").unwrap(),
            ConstructionSpec::KLeaves(3)
        );
        assert_eq!(
            parse_construction("all-leaves").unwrap(),
            ConstructionSpec::AllLeaves
        );
        assert!(matches!(
            parse_construction("mixture:1=0.9,inf=0.1").unwrap(),
            ConstructionSpec::Mixture(_)
        ));
        assert!(matches!(
            parse_construction("state-varying:2:0.5").unwrap(),
            ConstructionSpec::StateVarying { k: 2, .. }
        ));
        assert_eq!(
            parse_construction("two-ended").unwrap(),
            ConstructionSpec::TwoEndedExample
        );
        assert!(parse_construction("kleaves:0").is_err());
        assert!(parse_construction("mixture:1=2.0").is_err());
        assert!(parse_construction("whatever").is_err());
    }

    #[test]
    fn config_file_roundtrip_and_overlay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\ndelay = geometric:0.75\nconstruction = kleaves:2\nhorizon = 500\nseed = 7\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.delay.as_deref(), Some("geometric:0.75"));
        assert_eq!(cfg.horizon, Some(500));
        assert_eq!(cfg.seed, Some(7));

        let flags = RunConfig {
            horizon: Some(1000),
            ..RunConfig::default()
        };
        let merged = cfg.merged_with(&flags);
        assert_eq!(merged.horizon, Some(1000));
        assert_eq!(merged.delay.as_deref(), Some("geometric:0.75"));

        std::fs::write(&path, "wat = 1\n").unwrap();
        assert!(RunConfig::from_file(&path).unwrap_err().contains("unknown key"));
        std::fs::write(&path, "horizon ten\n").unwrap();
        assert!(RunConfig::from_file(&path).is_err());
    }
}
