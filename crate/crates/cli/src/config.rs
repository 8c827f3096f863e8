//! Experiment configuration: a flat `key = value` text format with dotted
//! keys, chosen over nested formats so configs diff line by line.
//!
//! Parsing materialises every default, so `parse → serialize → parse` is
//! the identity and the echoed config documents the whole run. Unknown
//! keys are fatal and named.

use std::collections::BTreeMap;
use std::fmt;

use qdistill::channels::ChannelKind;
use qdistill::optimize::InputParameterization;

#[derive(Debug, Clone, PartialEq, Eq, Copy)]
pub enum Scenario {
    Rate,
    Typical,
    Code,
    KeyGen,
    KeyDist,
    EntGen,
    EntDist,
    EntTrans,
    Optimize,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self, String> {
        Ok(match s {
            "rate" => Self::Rate,
            "typical" => Self::Typical,
            "code" => Self::Code,
            "keygen" => Self::KeyGen,
            "keydist" => Self::KeyDist,
            "entgen" => Self::EntGen,
            "entdist" => Self::EntDist,
            "enttrans" => Self::EntTrans,
            "optimize" => Self::Optimize,
            other => return Err(format!("unknown scenario `{other}`")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rate => "rate",
            Self::Typical => "typical",
            Self::Code => "code",
            Self::KeyGen => "keygen",
            Self::KeyDist => "keydist",
            Self::EntGen => "entgen",
            Self::EntDist => "entdist",
            Self::EntTrans => "enttrans",
            Self::Optimize => "optimize",
        }
    }

    /// Scenarios driven by a channel (the rest consume a cqq source).
    pub fn uses_channel(&self) -> bool {
        matches!(
            self,
            Self::Rate | Self::KeyGen | Self::EntGen | Self::EntTrans | Self::Optimize
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    /// Two letters, product pure conditionals with the given overlaps.
    TwoPure { p0: f64, overlap_b: f64, overlap_e: f64 },
    /// Orthogonal on B, constant on E.
    Ideal { probs: Vec<f64> },
    /// Purified Bell-diagonal state, measured in the computational basis.
    BellDiagonal { probs: [f64; 4] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub channel: Option<ChannelKind>,
    pub source: Option<SourceSpec>,
    pub n_list: Vec<usize>,
    pub delta: f64,
    pub epsilon: f64,
    pub rate_backoff: f64,
    pub trials: u32,
    pub seed: u64,
    pub out: String,
    pub optimize_param: InputParameterization,
    pub optimize_budget: usize,
    /// Optional overrides for the code table shape.
    pub code_m_bits: Option<u32>,
    pub code_s_bits: Option<u32>,
    /// Fill the wall_time_ms column (defaults to off so repeated runs emit
    /// byte-identical CSV).
    pub timing: bool,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "channel.kind",
    "channel.p",
    "channel.gamma",
    "source.kind",
    "source.p0",
    "source.overlap_b",
    "source.overlap_e",
    "source.probs",
    "n_list",
    "delta",
    "epsilon",
    "rate_backoff",
    "trials",
    "seed",
    "out",
    "optimize.param",
    "optimize.budget",
    "code.m_bits",
    "code.s_bits",
    "timing",
];

fn parse_f64(map: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64, ConfigError> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| err(format!("key `{key}`: `{v}` is not a number"))),
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| err(format!("`{p}` is not a number")))
        })
        .collect()
}

impl ExperimentConfig {
    /// Parses the flat key-value text, materialising all defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("line {}: expected `key = value`", lineno + 1)));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }

        let scenario = Scenario::parse(
            map.get("scenario")
                .ok_or_else(|| err("missing required key `scenario`"))?,
        )
        .map_err(err)?;

        // channel or source, as the scenario demands
        let channel = if scenario.uses_channel() {
            let kind = map
                .get("channel.kind")
                .ok_or_else(|| err(format!("scenario `{}` needs `channel.kind`", scenario.name())))?;
            let p = parse_f64(&map, "channel.p", 0.0)?;
            let gamma = parse_f64(&map, "channel.gamma", 0.0)?;
            Some(match kind.as_str() {
                "identity" => ChannelKind::Identity,
                "depolarizing" => ChannelKind::Depolarizing(p),
                "dephasing" => ChannelKind::Dephasing(p),
                "amplitude_damping" => ChannelKind::AmplitudeDamping(gamma),
                "erasure" => ChannelKind::Erasure(p),
                other => return Err(err(format!("unknown channel kind `{other}`"))),
            })
        } else {
            if map.keys().any(|k| k.starts_with("channel.")) {
                return Err(err(format!(
                    "scenario `{}` takes a source, not a channel",
                    scenario.name()
                )));
            }
            None
        };
        let source = if scenario.uses_channel() {
            if map.keys().any(|k| k.starts_with("source.")) {
                return Err(err(format!(
                    "scenario `{}` takes a channel, not a source",
                    scenario.name()
                )));
            }
            None
        } else {
            let kind = map
                .get("source.kind")
                .ok_or_else(|| err(format!("scenario `{}` needs `source.kind`", scenario.name())))?;
            Some(match kind.as_str() {
                "two_pure" => SourceSpec::TwoPure {
                    p0: parse_f64(&map, "source.p0", 0.5)?,
                    overlap_b: parse_f64(&map, "source.overlap_b", 0.6)?,
                    overlap_e: parse_f64(&map, "source.overlap_e", 0.6)?,
                },
                "ideal" => {
                    let probs = match map.get("source.probs") {
                        None => vec![0.5, 0.5],
                        Some(v) => parse_list(v)?,
                    };
                    SourceSpec::Ideal { probs }
                }
                "bell_diagonal" => {
                    let probs = match map.get("source.probs") {
                        None => return Err(err("bell_diagonal needs `source.probs` (4 values)")),
                        Some(v) => {
                            let list = parse_list(v)?;
                            if list.len() != 4 {
                                return Err(err("bell_diagonal needs exactly 4 probabilities"));
                            }
                            [list[0], list[1], list[2], list[3]]
                        }
                    };
                    SourceSpec::BellDiagonal { probs }
                }
                other => return Err(err(format!("unknown source kind `{other}`"))),
            })
        };

        let n_list: Vec<usize> = match map.get("n_list") {
            None => vec![4],
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|_| err(format!("n_list entry `{p}` is not an integer")))
                })
                .collect::<Result<_, _>>()?,
        };
        if n_list.is_empty() {
            return Err(err("n_list must be non-empty"));
        }
        if n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("n_list must be strictly ascending"));
        }

        let trials = match map.get("trials") {
            None => 100,
            Some(v) => v
                .parse::<u32>()
                .map_err(|_| err(format!("trials `{v}` is not an integer")))?,
        };
        let seed = match map.get("seed") {
            None => 0,
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| err(format!("seed `{v}` is not an integer")))?,
        };
        let optimize_param = match map.get("optimize.param").map(|s| s.as_str()) {
            None | Some("pure_qubit_angles") => InputParameterization::PureQubitAngles,
            Some("diagonal_ensemble") => InputParameterization::DiagonalEnsemble { dim: 2 },
            Some("full_pure_state") => InputParameterization::FullPureState { dim: 2 },
            Some(other) => return Err(err(format!("unknown optimize.param `{other}`"))),
        };
        let optimize_budget = match map.get("optimize.budget") {
            None => 2000,
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| err(format!("optimize.budget `{v}` is not an integer")))?,
        };
        let parse_bits = |key: &str| -> Result<Option<u32>, ConfigError> {
            match map.get(key) {
                None => Ok(None),
                Some(v) if v == "auto" => Ok(None),
                Some(v) => v
                    .parse::<u32>()
                    .map(Some)
                    .map_err(|_| err(format!("{key} `{v}` is not an integer or `auto`"))),
            }
        };
        let timing = match map.get("timing").map(|s| s.as_str()) {
            None | Some("off") => false,
            Some("on") => true,
            Some(other) => return Err(err(format!("timing must be on/off, got `{other}`"))),
        };

        let cfg = Self {
            scenario,
            channel,
            source,
            n_list,
            delta: parse_f64(&map, "delta", 0.1)?,
            epsilon: parse_f64(&map, "epsilon", 0.05)?,
            rate_backoff: parse_f64(&map, "rate_backoff", 0.2)?,
            trials,
            seed,
            out: map.get("out").cloned().unwrap_or_else(|| "results.csv".into()),
            optimize_param,
            optimize_budget,
            code_m_bits: parse_bits("code.m_bits")?,
            code_s_bits: parse_bits("code.s_bits")?,
            timing,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.delta <= 0.0 {
            return Err(err("delta must be > 0"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(err("epsilon must lie in (0, 1)"));
        }
        match &self.source {
            Some(SourceSpec::Ideal { probs }) => {
                if probs.len() < 2 {
                    return Err(err("ideal source needs at least two letters"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(err(format!("source.probs sums to {total}")));
                }
            }
            Some(SourceSpec::BellDiagonal { probs }) => {
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(err(format!("source.probs sums to {total}")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Serialises the full config (all defaults materialised), keys sorted.
    pub fn serialize(&self) -> String {
        let mut lines: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| lines.push((k.to_string(), v));
        push("scenario", self.scenario.name().to_string());
        if let Some(ch) = &self.channel {
            match ch {
                ChannelKind::Identity => push("channel.kind", "identity".into()),
                ChannelKind::Depolarizing(p) => {
                    push("channel.kind", "depolarizing".into());
                    push("channel.p", fmt_f64(*p));
                }
                ChannelKind::Dephasing(p) => {
                    push("channel.kind", "dephasing".into());
                    push("channel.p", fmt_f64(*p));
                }
                ChannelKind::AmplitudeDamping(g) => {
                    push("channel.kind", "amplitude_damping".into());
                    push("channel.gamma", fmt_f64(*g));
                }
                ChannelKind::Erasure(p) => {
                    push("channel.kind", "erasure".into());
                    push("channel.p", fmt_f64(*p));
                }
            }
        }
        if let Some(src) = &self.source {
            match src {
                SourceSpec::TwoPure { p0, overlap_b, overlap_e } => {
                    push("source.kind", "two_pure".into());
                    push("source.p0", fmt_f64(*p0));
                    push("source.overlap_b", fmt_f64(*overlap_b));
                    push("source.overlap_e", fmt_f64(*overlap_e));
                }
                SourceSpec::Ideal { probs } => {
                    push("source.kind", "ideal".into());
                    push(
                        "source.probs",
                        probs.iter().map(|p| fmt_f64(*p)).collect::<Vec<_>>().join(","),
                    );
                }
                SourceSpec::BellDiagonal { probs } => {
                    push("source.kind", "bell_diagonal".into());
                    push(
                        "source.probs",
                        probs.iter().map(|p| fmt_f64(*p)).collect::<Vec<_>>().join(","),
                    );
                }
            }
        }
        push(
            "n_list",
            self.n_list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
        );
        push("delta", fmt_f64(self.delta));
        push("epsilon", fmt_f64(self.epsilon));
        push("rate_backoff", fmt_f64(self.rate_backoff));
        push("trials", self.trials.to_string());
        push("seed", self.seed.to_string());
        push("out", self.out.clone());
        push(
            "optimize.param",
            match self.optimize_param {
                InputParameterization::PureQubitAngles => "pure_qubit_angles".into(),
                InputParameterization::DiagonalEnsemble { .. } => "diagonal_ensemble".into(),
                InputParameterization::FullPureState { .. } => "full_pure_state".into(),
            },
        );
        push("optimize.budget", self.optimize_budget.to_string());
        push(
            "code.m_bits",
            self.code_m_bits.map(|b| b.to_string()).unwrap_or_else(|| "auto".into()),
        );
        push(
            "code.s_bits",
            self.code_s_bits.map(|b| b.to_string()).unwrap_or_else(|| "auto".into()),
        );
        push("timing", if self.timing { "on".into() } else { "off".into() });
        lines.sort();
        let mut out = String::new();
        for (k, v) in lines {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

/// Plain decimal rendering that survives a parse round trip.
fn fmt_f64(x: f64) -> String {
    let s = format!("{x}");
    if s.parse::<f64>() == Ok(x) {
        s
    } else {
        format!("{x:.17e}")
    }
}
