//! Configuration assembly: file, then `--set` overrides, then subcommand flags.

use crate::CliError;
use mlmoments::dsmc::{DtPolicy, InitialCondition};
use mlmoments::io::{parse_list, Config, RunManifest};
use mlmoments::kernels::{admissible_beta, AngularKernel, CollisionKernel};
use mlmoments::specfun::MLSpec;
use std::path::Path;

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config, CliError> {
    let mut cfg = match path {
        None => Config::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            if text.trim_start().starts_with('{') {
                Config::parse(&RunManifest::parse(&text)?.config)?
            } else {
                Config::parse(&text)?
            }
        }
    };
    cfg.schema_version()?;
    for o in overrides {
        let (lhs, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects section.key=value, got {o:?}")))?;
        let (section, key) = lhs.rsplit_once('.').unwrap_or(("", lhs));
        cfg.set(section.trim(), key.trim(), value.trim())?;
    }
    Ok(cfg)
}

/// Stores a flag value when given.
pub fn put<T: ToString>(cfg: &mut Config, section: &str, key: &str, value: &Option<T>) -> Result<(), CliError> {
    if let Some(v) = value {
        cfg.set(section, key, v.to_string())?;
    }
    Ok(())
}

pub fn f64_or(cfg: &Config, section: &str, key: &str, default: f64) -> Result<f64, CliError> {
    Ok(cfg.get_f64(section, key)?.unwrap_or(default))
}

pub fn u64_or(cfg: &Config, section: &str, key: &str, default: u64) -> Result<u64, CliError> {
    Ok(cfg.get_u64(section, key)?.unwrap_or(default))
}

pub fn list_or(cfg: &Config, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
    Ok(cfg.get_list(section, key)?.unwrap_or_else(|| default.to_vec()))
}

pub fn required_f64(cfg: &Config, section: &str, key: &str) -> Result<f64, CliError> {
    cfg.get_f64(section, key)?
        .ok_or_else(|| CliError::Usage(format!("missing {section}.{key}")))
}

pub fn seed(cfg: &Config) -> Result<u64, CliError> {
    u64_or(cfg, "", "seed", 0)
}

/// `lo..hi` or `lo..=hi` inclusive integer range, or a comma list.
pub fn int_grid(text: &str) -> Result<Vec<u32>, CliError> {
    let bad = || CliError::Usage(format!("expected an integer range lo..hi or a list, got {text:?}"));
    if let Some((lo, hi)) = text.split_once("..") {
        let hi = hi.trim_start_matches('=');
        let (lo, hi): (u32, u32) = (
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
        );
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    parse_list(text)?
        .into_iter()
        .map(|x| {
            if x >= 0.0 && x.fract() == 0.0 && x <= f64::from(u32::MAX) {
                Ok(x as u32)
            } else {
                Err(bad())
            }
        })
        .collect()
}

/// Kernel from `[kernel]`: `family` is `bounded`, `power_law` or `truncated`.
pub fn kernel(cfg: &Config) -> Result<CollisionKernel, CliError> {
    let dim = u64_or(cfg, "kernel", "dim", 3)? as usize;
    let gamma = f64_or(cfg, "kernel", "gamma", 1.0)?;
    let family = cfg.get("kernel", "family").unwrap_or("bounded");
    let c = f64_or(cfg, "kernel", "c", 1.0)?;
    let ang = match family {
        "bounded" => AngularKernel::bounded(f64_or(cfg, "kernel", "b0", 1.0)?, dim)?,
        "power_law" => {
            let nu = f64_or(cfg, "kernel", "nu", 1.0)?;
            AngularKernel::new(mlmoments::kernels::AngularFamily::PowerLawSingular { nu, c }, dim)?
        }
        "truncated" => {
            let nu = f64_or(cfg, "kernel", "nu", 1.0)?;
            let theta_min = required_f64(cfg, "kernel", "theta_min")?;
            AngularKernel::new(
                mlmoments::kernels::AngularFamily::TruncatedSingular { nu, theta_min, c },
                dim,
            )?
        }
        other => return Err(CliError::Usage(format!("unknown kernel family {other:?}"))),
    };
    Ok(CollisionKernel::new(gamma, ang)?)
}

/// `[kernel]` key/value pairs of a preset.
type PresetKeys = Vec<(&'static str, &'static str)>;

/// Named kernels used by the ε profile and Povzner sweeps, with their β.
pub fn preset(name: &str) -> Result<(PresetKeys, f64), CliError> {
    Ok(match name {
        "bounded" => (vec![("family", "bounded"), ("b0", "1")], 0.1),
        "power_law" => (vec![("family", "power_law"), ("nu", "1")], 2.0),
        "truncated" => (
            vec![("family", "truncated"), ("nu", "1.5"), ("theta_min", "0.001")],
            1.6,
        ),
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset {other:?}; use bounded, power_law or truncated"
            )))
        }
    })
}

/// Writes a preset into `[kernel]` (keys already set win) and `[eps] beta` if unset.
pub fn apply_preset(cfg: &mut Config, name: &str) -> Result<(), CliError> {
    let (keys, beta) = preset(name)?;
    for (k, v) in keys {
        if cfg.get("kernel", k).is_none() {
            cfg.set("kernel", k, v)?;
        }
    }
    if cfg.get("eps", "beta").is_none() && cfg.get("eps", "s").is_none() {
        cfg.set("eps", "beta", beta.to_string())?;
    }
    Ok(())
}

/// β from `[eps] beta`, or from the tail order `[eps] s` via the admissibility rule.
pub fn beta(cfg: &Config) -> Result<f64, CliError> {
    match (cfg.get_f64("eps", "beta")?, cfg.get_f64("eps", "s")?) {
        (Some(_), Some(_)) => Err(CliError::Usage("give eps.beta or eps.s, not both".into())),
        (Some(b), None) => Ok(b),
        (None, Some(s)) => Ok(admissible_beta(s)?),
        (None, None) => Ok(2.0),
    }
}

pub fn initial_condition(cfg: &Config) -> Result<InitialCondition, CliError> {
    let f = |k: &str, d: f64| f64_or(cfg, "ic", k, d);
    Ok(match cfg.get("ic", "family").unwrap_or("maxwellian") {
        "maxwellian" => InitialCondition::Maxwellian {
            temperature: f("temperature", 1.0)?,
        },
        "bimaxwellian" => InitialCondition::ShiftedBiMaxwellian {
            t1: f("t1", 1.0)?,
            t2: f("t2", 1.0)?,
            shift: f("shift", 0.0)?,
        },
        "compact" => InitialCondition::CompactSupport {
            radius: f("radius", 1.0)?,
        },
        "heavy_tail" => InitialCondition::HeavyTail {
            s0: f("s0", 1.0)?,
            alpha0: f("alpha0", 0.5)?,
        },
        other => return Err(CliError::Usage(format!("unknown initial condition {other:?}"))),
    })
}

pub fn dt_policy(cfg: &Config) -> Result<DtPolicy, CliError> {
    let d = DtPolicy::default();
    Ok(DtPolicy {
        max_dt: f64_or(cfg, "run", "max_dt", d.max_dt)?,
        safety: f64_or(cfg, "run", "safety", d.safety)?,
    })
}

pub fn ml_spec(cfg: &Config, alpha_key: &str) -> Result<MLSpec, CliError> {
    Ok(MLSpec::new(
        required_f64(cfg, "ml", "s")?,
        required_f64(cfg, "ml", alpha_key)?,
    )?)
}
