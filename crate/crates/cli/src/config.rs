//! Flat `key=value` run configuration: defaults, then a config file, then
//! `--set` pairs, then dedicated flags. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use fuelgauge::traces::{Hazard, LengthLaw, Mode, SynthConfig};

#[derive(Debug, Clone)]
pub struct Key {
    pub name: &'static str,
    pub default: String,
}

pub fn key(name: &'static str, default: impl Display) -> Key {
    Key {
        name,
        default: default.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct Params {
    command: &'static str,
    values: BTreeMap<&'static str, String>,
}

impl Params {
    pub fn new(command: &'static str, keys: Vec<Key>) -> Self {
        Self {
            command,
            values: keys.into_iter().map(|k| (k.name, k.default)).collect(),
        }
    }

    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        if let Some(slot) = self.values.get_mut(name) {
            *slot = value.trim().to_owned();
            return Ok(());
        }
        let known: Vec<_> = self.values.keys().copied().collect();
        bail!("unknown key `{name}` for `{}` (known: {})", self.command, known.join(", "))
    }

    /// Sets `name` when the flag was given.
    pub fn flag<T: Display>(&mut self, name: &str, value: Option<T>) -> Result<()> {
        match value {
            Some(v) => self.set(name, &v.to_string()),
            None => Ok(()),
        }
    }

    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=value, got `{pair}`"))?;
        self.set(k.trim(), v)
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.set_pair(line)
                .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn str(&self, name: &str) -> &str {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("key `{name}` not declared for `{}`", self.command))
    }

    pub fn get<T>(&self, name: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.str(name);
        raw.parse()
            .map_err(|e| anyhow!("key `{name}`: cannot parse `{raw}`: {e}"))
    }

    /// `None` for an empty value.
    pub fn opt<T>(&self, name: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if self.str(name).is_empty() {
            Ok(None)
        } else {
            self.get(name).map(Some)
        }
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        let raw = self.str(name);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    pub fn require_path(&self, name: &str) -> Result<PathBuf> {
        self.path(name)
            .ok_or_else(|| anyhow!("`{}` needs `{name}` to be set", self.command))
    }

    /// Comma-separated list.
    pub fn list<T>(&self, name: &str) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.str(name)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| anyhow!("key `{name}`: cannot parse `{s}`: {e}")))
            .collect()
    }

    pub fn bool(&self, name: &str) -> Result<bool> {
        match self.str(name) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            other => bail!("key `{name}`: expected true or false, got `{other}`"),
        }
    }

    /// Sorted `key=value` lines.
    pub fn snapshot(&self) -> String {
        let mut out = format!("# {}\n", self.command);
        for (k, v) in &self.values {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

/// Keys describing a synthetic world; `length_law` in the textual form of
/// [`parse_length_law`].
pub fn synth_keys(defaults: &SynthConfig, length_law: &str) -> Vec<Key> {
    vec![
        key("hidden_dim", defaults.hidden_dim),
        key("world_seed", defaults.world_seed),
        key("signal_gain", defaults.signal_gain),
        key("noise_std", defaults.noise_std),
        key("distractor_std", defaults.distractor_std),
        key("distractor_decay", defaults.distractor_decay),
        key("length_law", length_law),
        key("max_len", defaults.max_len),
        key("hazard", format_hazard(&defaults.hazard)),
        key(
            "feedback_scale",
            defaults.feedback_scale.map(|v| v.to_string()).unwrap_or_default(),
        ),
    ]
}

pub fn synth_config(p: &Params, mode: Mode) -> Result<SynthConfig> {
    let config = SynthConfig {
        hidden_dim: p.get("hidden_dim")?,
        world_seed: p.get("world_seed")?,
        fuel_direction: None,
        signal_gain: p.get("signal_gain")?,
        noise_std: p.get("noise_std")?,
        distractor_std: p.get("distractor_std")?,
        distractor_decay: p.get("distractor_decay")?,
        length_law: parse_length_law(p.str("length_law"))?,
        max_len: p.get("max_len")?,
        mode,
        hazard: parse_hazard(p.str("hazard"))?,
        feedback_scale: p.opt("feedback_scale")?,
    };
    config.validate()?;
    Ok(config)
}

/// `lognormal:<median>:<sigma>` or `fixed:<n>`.
pub fn parse_length_law(s: &str) -> Result<LengthLaw> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |v: &str| v.parse::<f64>().map_err(|_| anyhow!("bad number `{v}` in length law `{s}`"));
    match parts[..] {
        ["lognormal", median, sigma] => {
            let median = num(median)?;
            if median <= 0.0 {
                bail!("length law median must be > 0");
            }
            Ok(LengthLaw::LogNormal {
                mu: median.ln(),
                sigma: num(sigma)?,
            })
        }
        ["fixed", n] => Ok(LengthLaw::Fixed(n.parse().map_err(|_| anyhow!("bad length `{n}`"))?)),
        _ => bail!("length law must be lognormal:<median>:<sigma> or fixed:<n>, got `{s}`"),
    }
}

/// `logistic:<slope>:<threshold>`, `step:<threshold>`, or `constant:<p>`.
pub fn parse_hazard(s: &str) -> Result<Hazard> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |v: &str| v.parse::<f64>().map_err(|_| anyhow!("bad number `{v}` in hazard `{s}`"));
    let hazard = match parts[..] {
        ["logistic", slope, threshold] => Hazard::Logistic {
            slope: num(slope)?,
            threshold: num(threshold)?,
        },
        ["step", threshold] => Hazard::Step {
            threshold: num(threshold)?,
        },
        ["constant", p] => Hazard::Constant { p: num(p)? },
        _ => bail!("hazard must be logistic:<slope>:<threshold>, step:<threshold>, or constant:<p>, got `{s}`"),
    };
    hazard.validate()?;
    Ok(hazard)
}

pub fn format_hazard(h: &Hazard) -> String {
    match *h {
        Hazard::Logistic { slope, threshold } => format!("logistic:{slope}:{threshold}"),
        Hazard::Step { threshold } => format!("step:{threshold}"),
        Hazard::Constant { p } => format!("constant:{p}"),
    }
}
