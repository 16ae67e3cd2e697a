//! Config files: `[lattice]`, `[run]` and `[grids]` sections of `key = value`
//! lines, layered with environment variables and `--set` overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use cablegff::{Censoring, ExperimentConfig, LatticeSpec, WeightMode};
use ini::Ini;

/// Prefix of environment overrides: `CABLEGFF_N=500` sets `n`.
pub const ENV_PREFIX: &str = "CABLEGFF_";

/// Every accepted key with its section.
const KEYS: &[(&str, &str)] = &[
    ("lattice", "d"),
    ("lattice", "L"),
    ("lattice", "L_obs"),
    ("lattice", "weights"),
    ("lattice", "c_lo"),
    ("lattice", "c_hi"),
    ("lattice", "weight_seed"),
    ("run", "seed"),
    ("run", "n"),
    ("run", "m"),
    ("run", "workers"),
    ("run", "out"),
    ("run", "censoring"),
    ("run", "u"),
    ("run", "k_sigma"),
    ("run", "truncation_margin"),
    ("run", "slope_rel_tol"),
    ("run", "prefactor_rel_tol"),
    ("run", "cov_sigma"),
    ("run", "emptiness_sigma"),
    ("run", "min_r2"),
    ("run", "tail_min_count"),
    ("run", "twopoint_max"),
    ("run", "hist_bins"),
    ("run", "batches"),
    ("run", "r_k"),
    ("run", "r0"),
    ("run", "h"),
    ("run", "lambda_factor"),
    ("run", "locuniq_threshold"),
    ("run", "locuniq_scale"),
    ("run", "patch_radius"),
    ("run", "dense_limit"),
    ("grids", "a_grid"),
    ("grids", "r_grid"),
    ("grids", "u_grid"),
    ("grids", "b_grid"),
    ("grids", "onearm_window"),
    ("grids", "twopoint_window"),
    ("grids", "kappa_window"),
    ("grids", "volume_tail_window"),
    ("grids", "tail_range"),
    ("grids", "volume_range"),
    ("grids", "twopoint_fit_range"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Missing(&'static str),
    Unknown(String),
    Invalid { key: String, msg: String },
    Syntax(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Missing(k) => write!(f, "missing mandatory key `{k}`"),
            ConfigError::Unknown(k) => write!(f, "unknown key `{k}`"),
            ConfigError::Invalid { key, msg } => write!(f, "invalid value for `{key}`: {msg}"),
            ConfigError::Syntax(msg) => write!(f, "syntax: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        msg: msg.into(),
    }
}

/// Canonical key for a user-supplied name; `section.key` and bare keys are
/// both accepted, case-insensitively.
fn canonical(name: &str, section: Option<&str>) -> Result<&'static str, ConfigError> {
    let (sec, key) = match name.split_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (section, name),
    };
    KEYS.iter()
        .find(|(s, k)| {
            k.eq_ignore_ascii_case(key.trim())
                && sec.is_none_or(|x| x.trim().eq_ignore_ascii_case(s))
        })
        .map(|(_, k)| *k)
        .ok_or_else(|| ConfigError::Unknown(name.into()))
}

/// Raw key-value settings, later sources overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    /// Reads config text. Keys outside a known section are rejected.
    pub fn parse(&mut self, text: &str) -> Result<(), ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(ConfigError::Unknown(format!("{k} (outside any section)")));
                }
                continue;
            };
            if !KEYS.iter().any(|(s, _)| s.eq_ignore_ascii_case(section)) {
                return Err(ConfigError::Unknown(format!("[{section}]")));
            }
            for (k, v) in props.iter() {
                let key = canonical(k, Some(section))
                    .map_err(|_| ConfigError::Unknown(format!("{section}.{k}")))?;
                self.values.insert(key, v.trim().to_string());
            }
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            ConfigError::Syntax(format!("expected key=value, got `{assignment}`"))
        })?;
        let key = canonical(k.trim(), None)?;
        self.values.insert(key, v.trim().to_string());
        Ok(())
    }

    /// Applies `CABLEGFF_<KEY>` variables.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(
        &mut self,
        vars: I,
    ) -> Result<(), ConfigError> {
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        vars.sort();
        for (k, v) in vars {
            let key = canonical(&k[ENV_PREFIX.len()..], None)
                .map_err(|_| ConfigError::Unknown(k.clone()))?;
            self.values.insert(key, v.trim().to_string());
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| invalid(key, format!("`{v}`: {e}")))
            })
            .transpose()
    }

    /// Fully resolved config with defaults applied and validated.
    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let d: usize = self.num("d")?.ok_or(ConfigError::Missing("d"))?;
        let l: usize = self.num("L")?.ok_or(ConfigError::Missing("L"))?;
        let seed: u64 = self.num("seed")?.ok_or(ConfigError::Missing("seed"))?;
        let l_obs: usize = match self.num("L_obs")? {
            Some(v) => v,
            None => (2.0 * l as f64 / 3.0).round() as usize,
        };
        let weight_mode = match self.get("weights").unwrap_or("unit") {
            "unit" => WeightMode::Unit,
            "random" => WeightMode::UniformlyEllipticRandom {
                c_lo: self.num("c_lo")?.unwrap_or(0.5),
                c_hi: self.num("c_hi")?.unwrap_or(2.0),
                seed: self.num("weight_seed")?.unwrap_or(0),
            },
            other => {
                return Err(invalid(
                    "weights",
                    format!("`{other}` (expected unit or random)"),
                ))
            }
        };
        let spec = LatticeSpec {
            d,
            half_side: l,
            obs_radius: l_obs,
            weight_mode,
        };
        spec.validate()
            .map_err(|e| invalid("lattice", e.to_string()))?;
        let mut cfg = ExperimentConfig::new(spec, seed);

        macro_rules! set {
            ($($key:literal => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.num($key)? { cfg.$field = v; })*
            };
        }
        set! {
            "n" => n_samples, "m" => m, "workers" => workers, "u" => u,
            "k_sigma" => k_sigma, "truncation_margin" => truncation_margin,
            "slope_rel_tol" => slope_rel_tol, "prefactor_rel_tol" => prefactor_rel_tol,
            "cov_sigma" => cov_sigma, "emptiness_sigma" => emptiness_sigma, "min_r2" => min_r2,
            "tail_min_count" => tail_min_count, "twopoint_max" => twopoint_max,
            "hist_bins" => hist_bins, "batches" => batches, "r_k" => r_k, "r0" => r0, "h" => h,
            "lambda_factor" => lambda_factor, "locuniq_threshold" => locuniq_threshold,
            "locuniq_scale" => locuniq_scale, "patch_radius" => patch_radius, "dense_limit" => dense_limit,
        }
        if let Some(v) = self.get("out") {
            cfg.out_dir = PathBuf::from(v);
        }
        if let Some(v) = self.get("censoring") {
            cfg.censoring = match v {
                "boundary" => Censoring::Boundary,
                "window" => Censoring::Window,
                other => {
                    return Err(invalid(
                        "censoring",
                        format!("`{other}` (expected boundary or window)"),
                    ))
                }
            };
        }
        for (key, field) in [
            ("a_grid", &mut cfg.a_grid),
            ("u_grid", &mut cfg.u_grid),
            ("b_grid", &mut cfg.b_grid),
        ] {
            if let Some(v) = self.get(key) {
                *field = parse_grid(key, v)?;
            }
        }
        if let Some(v) = self.get("r_grid") {
            cfg.r_grid = integers("r_grid", &parse_grid("r_grid", v)?)?;
        }
        for (key, field) in [
            ("onearm_window", &mut cfg.onearm_window),
            ("twopoint_window", &mut cfg.twopoint_window),
            ("kappa_window", &mut cfg.kappa_window),
            ("volume_tail_window", &mut cfg.volume_tail_window),
            ("tail_range", &mut cfg.tail_range),
            ("volume_range", &mut cfg.volume_range),
        ] {
            if let Some(v) = self.get(key) {
                *field = pair(key, &parse_grid(key, v)?)?;
            }
        }
        if let Some(v) = self.get("twopoint_fit_range") {
            let p = integers(
                "twopoint_fit_range",
                &pair("twopoint_fit_range", &parse_grid("twopoint_fit_range", v)?)?,
            )?;
            cfg.twopoint_fit_range = [p[0], p[1]];
        }
        cfg.validate()
            .map_err(|e| invalid("config", e.to_string()))?;
        Ok(cfg)
    }
}

/// Comma-separated numbers and `start:step:stop` ranges (stop included).
pub fn parse_grid(key: &str, text: &str) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let nums: Vec<f64> = item
            .split(':')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(key, format!("`{item}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        match nums[..] {
            [x] => out.push(x),
            [start, step, stop] => {
                if !(step != 0.0 && (stop - start) / step >= -1e-9) {
                    return Err(invalid(key, format!("empty or infinite range `{item}`")));
                }
                let k = ((stop - start) / step + 1e-9).floor() as usize;
                if k > 100_000 {
                    return Err(invalid(key, format!("range `{item}` has too many points")));
                }
                out.extend((0..=k).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12));
            }
            _ => {
                return Err(invalid(
                    key,
                    format!("`{item}` is neither a number nor start:step:stop"),
                ))
            }
        }
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(invalid(key, "values must be finite"));
    }
    Ok(out)
}

fn integers(key: &str, xs: &[f64]) -> Result<Vec<usize>, ConfigError> {
    xs.iter()
        .map(|&x| {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(invalid(key, format!("{x} is not a nonnegative integer")))
            }
        })
        .collect()
}

fn pair(key: &str, xs: &[f64]) -> Result<[f64; 2], ConfigError> {
    match xs {
        [a, b] => Ok([*a, *b]),
        _ => Err(invalid(
            key,
            format!("expected two values, got {}", xs.len()),
        )),
    }
}

fn list<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// The resolved config in the input format; parsing it gives back `cfg`.
pub fn echo(cfg: &ExperimentConfig) -> String {
    let mut ini = Ini::new();
    let s = &cfg.lattice;
    {
        let mut sec = ini.with_section(Some("lattice"));
        sec.set("d", s.d.to_string())
            .set("L", s.half_side.to_string())
            .set("L_obs", s.obs_radius.to_string());
        match s.weight_mode {
            WeightMode::Unit => {
                sec.set("weights", "unit");
            }
            WeightMode::UniformlyEllipticRandom { c_lo, c_hi, seed } => {
                sec.set("weights", "random")
                    .set("c_lo", c_lo.to_string())
                    .set("c_hi", c_hi.to_string())
                    .set("weight_seed", seed.to_string());
            }
        }
    }
    ini.with_section(Some("run"))
        .set("seed", cfg.seed.to_string())
        .set("n", cfg.n_samples.to_string())
        .set("m", cfg.m.to_string())
        .set("workers", cfg.workers.to_string())
        .set("out", cfg.out_dir.display().to_string())
        .set(
            "censoring",
            match cfg.censoring {
                Censoring::Boundary => "boundary",
                Censoring::Window => "window",
            },
        )
        .set("u", cfg.u.to_string())
        .set("k_sigma", cfg.k_sigma.to_string())
        .set("truncation_margin", cfg.truncation_margin.to_string())
        .set("slope_rel_tol", cfg.slope_rel_tol.to_string())
        .set("prefactor_rel_tol", cfg.prefactor_rel_tol.to_string())
        .set("cov_sigma", cfg.cov_sigma.to_string())
        .set("emptiness_sigma", cfg.emptiness_sigma.to_string())
        .set("min_r2", cfg.min_r2.to_string())
        .set("tail_min_count", cfg.tail_min_count.to_string())
        .set("twopoint_max", cfg.twopoint_max.to_string())
        .set("hist_bins", cfg.hist_bins.to_string())
        .set("batches", cfg.batches.to_string())
        .set("r_k", cfg.r_k.to_string())
        .set("r0", cfg.r0.to_string())
        .set("h", cfg.h.to_string())
        .set("lambda_factor", cfg.lambda_factor.to_string())
        .set("locuniq_threshold", cfg.locuniq_threshold.to_string())
        .set("locuniq_scale", cfg.locuniq_scale.to_string())
        .set("patch_radius", cfg.patch_radius.to_string())
        .set("dense_limit", cfg.dense_limit.to_string());
    ini.with_section(Some("grids"))
        .set("a_grid", list(&cfg.a_grid))
        .set("r_grid", list(&cfg.r_grid))
        .set("u_grid", list(&cfg.u_grid))
        .set("b_grid", list(&cfg.b_grid))
        .set("onearm_window", list(&cfg.onearm_window))
        .set("twopoint_window", list(&cfg.twopoint_window))
        .set("kappa_window", list(&cfg.kappa_window))
        .set("volume_tail_window", list(&cfg.volume_tail_window))
        .set("tail_range", list(&cfg.tail_range))
        .set("volume_range", list(&cfg.volume_range))
        .set("twopoint_fit_range", list(&cfg.twopoint_fit_range));
    let mut out = Vec::new();
    ini.write_to(&mut out).expect("write to memory");
    String::from_utf8(out).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut s = Settings::default();
        s.parse(text)?;
        s.resolve()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = resolve("[lattice]\nd = 3\nL = 16\n[run]\nseed = 1\n").unwrap();
        assert_eq!(cfg.lattice.obs_radius, 11);
        assert_eq!(cfg.m, 1);
        assert_eq!(cfg.n_samples, 10_000);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn ranges_expand() {
        let g = parse_grid("a_grid", "-0.5:0.1:0.5").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], -0.5);
        assert_eq!(g[3], -0.2);
        assert_eq!(g[10], 0.5);
        assert_eq!(
            parse_grid("x", "1, 2:2:6, 9").unwrap(),
            vec![1.0, 2.0, 4.0, 6.0, 9.0]
        );
        assert!(parse_grid("x", "1:0:2").is_err());
        assert!(parse_grid("x", "2:1:1").is_err());
        assert!(parse_grid("x", "1:2").is_err());
    }

    #[test]
    fn missing_and_unknown_keys() {
        assert_eq!(
            resolve("[lattice]\nd = 3\n[run]\nseed = 1\n"),
            Err(ConfigError::Missing("L"))
        );
        assert_eq!(
            resolve("[lattice]\nL = 3\n[run]\nseed = 1\n"),
            Err(ConfigError::Missing("d"))
        );
        assert_eq!(
            resolve("[lattice]\nd = 3\nL = 8\n"),
            Err(ConfigError::Missing("seed"))
        );
        assert!(matches!(
            resolve("[lattice]\nd = 3\nL = 8\nfoo = 1\n"),
            Err(ConfigError::Unknown(_))
        ));
        assert!(matches!(
            resolve("[extra]\nd = 3\n"),
            Err(ConfigError::Unknown(_))
        ));
        assert!(matches!(
            resolve("[run]\nd = 3\n"),
            Err(ConfigError::Unknown(_))
        ));
        assert!(matches!(resolve("d = 3\n"), Err(ConfigError::Unknown(_))));
    }

    #[test]
    fn out_of_window_grid_is_rejected() {
        let err = resolve("[lattice]\nd = 3\nL = 16\n[run]\nseed = 1\n[grids]\nr_grid = 4, 16\n")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { .. }), "{err}");
    }

    #[test]
    fn overrides_layer_in_order() {
        let mut s = Settings::default();
        s.parse("[lattice]\nd = 3\nL = 8\n[run]\nseed = 1\nn = 5\n")
            .unwrap();
        s.apply_env([
            ("CABLEGFF_N".to_string(), "7".to_string()),
            ("HOME".into(), "/".into()),
        ])
        .unwrap();
        assert_eq!(s.resolve().unwrap().n_samples, 7);
        s.set("run.n=9").unwrap();
        assert_eq!(s.resolve().unwrap().n_samples, 9);
        s.set("A_GRID = 0:0.5:1").unwrap();
        assert_eq!(s.resolve().unwrap().a_grid, vec![0.0, 0.5, 1.0]);
        assert!(s.set("grids.n=1").is_err());
        assert!(s
            .apply_env([("CABLEGFF_NOPE".to_string(), "1".to_string())])
            .is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut s = Settings::default();
        s.parse("[lattice]\nd = 3\nL = 9\nweights = random\nc_hi = 3\n[run]\nseed = 4\ncensoring = window\n[grids]\na_grid = -0.3:0.1:0.3\n")
            .unwrap();
        let cfg = s.resolve().unwrap();
        let again = resolve(&echo(&cfg)).unwrap();
        assert_eq!(again, cfg);
    }
}
