//! Scenario configuration: array geometry, user groups, link budget and
//! deployment ranges.
//!
//! Scenarios are read from a flat `key = value` text file. Angles are in
//! degrees, distances in meters and powers in dBm at the file boundary;
//! everything is converted to linear milliwatts internally.
//!
//! Per-group keys (`users_per_group`, `mean_eaod_deg`, ...) accept either a
//! single value, broadcast to every group, or a comma-separated list with one
//! value per group.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Uniform rectangular array of `mx × my` antennas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub mx: usize,
    pub my: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn new(mx: usize, my: usize, spacing: f64) -> Result<Self> {
        let geom = Self { mx, my, spacing };
        geom.validate()?;
        Ok(geom)
    }

    /// Half-wavelength spaced square array.
    pub fn square(side: usize) -> Self {
        Self {
            mx: side,
            my: side,
            spacing: 0.5,
        }
    }

    pub fn m(&self) -> usize {
        self.mx * self.my
    }

    pub fn validate(&self) -> Result<()> {
        if self.mx == 0 || self.my == 0 {
            return Err(Error::config("array dimensions must be at least 1"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::config("antenna spacing must be positive"));
        }
        Ok(())
    }
}

/// Angular support of one user group: mean elevation/azimuth of departure
/// and the half-width of the interval around each mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupAngularSupport {
    pub mean_eaod_deg: f64,
    pub mean_aaod_deg: f64,
    pub eaod_spread_deg: f64,
    pub aaod_spread_deg: f64,
    pub users: usize,
}

impl GroupAngularSupport {
    pub fn validate(&self, index: usize) -> Result<()> {
        let finite = [
            self.mean_eaod_deg,
            self.mean_aaod_deg,
            self.eaod_spread_deg,
            self.aaod_spread_deg,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config(format!("group {index}: non-finite angle")));
        }
        if self.eaod_spread_deg < 0.0 || self.aaod_spread_deg < 0.0 {
            return Err(Error::config(format!("group {index}: negative spread")));
        }
        if self.users == 0 {
            return Err(Error::config(format!("group {index}: needs at least one user")));
        }
        Ok(())
    }

    /// Elevation interval after clamping to `[1°, 179°]`, in degrees.
    pub fn eaod_range_deg(&self) -> (f64, f64) {
        let lo = (self.mean_eaod_deg - self.eaod_spread_deg).clamp(MIN_EAOD_DEG, MAX_EAOD_DEG);
        let hi = (self.mean_eaod_deg + self.eaod_spread_deg).clamp(MIN_EAOD_DEG, MAX_EAOD_DEG);
        (lo, hi)
    }

    pub fn aaod_range_deg(&self) -> (f64, f64) {
        (
            self.mean_aaod_deg - self.aaod_spread_deg,
            self.mean_aaod_deg + self.aaod_spread_deg,
        )
    }

    /// Direction cosines of the support center.
    pub fn center(&self) -> (f64, f64) {
        let theta = self.mean_eaod_deg.clamp(MIN_EAOD_DEG, MAX_EAOD_DEG).to_radians();
        let psi = self.mean_aaod_deg.to_radians();
        (theta.sin() * psi.cos(), theta.sin() * psi.sin())
    }
}

pub const MIN_EAOD_DEG: f64 = 1.0;
pub const MAX_EAOD_DEG: f64 = 179.0;

/// Linear-unit link parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub pathloss_exponent: f64,
    pub noise_power_mw: f64,
    pub total_power_mw: f64,
    pub num_paths: usize,
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.pathloss_exponent > 0.0 && self.pathloss_exponent.is_finite()) {
            return Err(Error::config("path-loss exponent must be positive"));
        }
        if !(self.noise_power_mw > 0.0 && self.noise_power_mw.is_finite()) {
            return Err(Error::config("noise power must be positive"));
        }
        if !(self.total_power_mw > 0.0 && self.total_power_mw.is_finite()) {
            return Err(Error::config("total power must be positive"));
        }
        if self.num_paths == 0 {
            return Err(Error::config("number of paths must be at least 1"));
        }
        Ok(())
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Full simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub groups: Vec<GroupAngularSupport>,
    pub total_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub pathloss_exponent: f64,
    pub num_paths: usize,
    pub bs_height_m: f64,
    pub ue_height_m: (f64, f64),
    pub horizontal_distance_m: (f64, f64),
    /// Extra distance in direction-cosine space used when selecting
    /// quantized angle pairs for a group.
    pub selection_margin: f64,
}

impl Default for Scenario {
    /// 3D microcell defaults: 16×16 array, one group of three users.
    fn default() -> Self {
        Self::microcell(16, 1, 3)
    }
}

impl Scenario {
    /// Microcell scenario with a `side × side` array and `users` split evenly
    /// over `groups`. Group `g` (0-based) is centered at EAoD 60° and AAoD
    /// `21° + 180°·g`.
    pub fn microcell(side: usize, groups: usize, users: usize) -> Self {
        let per_group = if groups == 0 { 0 } else { users / groups };
        Self {
            geometry: ArrayGeometry::square(side),
            groups: (0..groups)
                .map(|g| GroupAngularSupport {
                    mean_eaod_deg: 60.0,
                    mean_aaod_deg: 21.0 + 180.0 * g as f64,
                    eaod_spread_deg: 15.0,
                    aaod_spread_deg: 11.0,
                    users: per_group,
                })
                .collect(),
            total_power_dbm: 20.0,
            noise_psd_dbm_hz: -174.0,
            bandwidth_hz: 10_000.0,
            pathloss_exponent: 3.76,
            num_paths: 20,
            bs_height_m: 10.0,
            ue_height_m: (1.5, 2.5),
            horizontal_distance_m: (10.0, 90.0),
            selection_margin: 0.0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.groups.iter().map(|g| g.users).sum()
    }

    /// Group index of every user, users ordered group by group.
    pub fn group_of_user(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, support)| std::iter::repeat_n(g, support.users))
            .collect()
    }

    pub fn noise_power_mw(&self) -> f64 {
        dbm_to_mw(self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10())
    }

    pub fn total_power_mw(&self) -> f64 {
        dbm_to_mw(self.total_power_dbm)
    }

    pub fn link_budget(&self) -> LinkBudget {
        LinkBudget {
            pathloss_exponent: self.pathloss_exponent,
            noise_power_mw: self.noise_power_mw(),
            total_power_mw: self.total_power_mw(),
            num_paths: self.num_paths,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.groups.is_empty() {
            return Err(Error::config("at least one user group is required"));
        }
        for (g, support) in self.groups.iter().enumerate() {
            support.validate(g)?;
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth must be positive"));
        }
        self.link_budget().validate()?;
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.ue_height_m) || !ordered(self.horizontal_distance_m) {
            return Err(Error::config("deployment ranges must satisfy min <= max"));
        }
        if self.horizontal_distance_m.0 < 0.0 || !self.bs_height_m.is_finite() {
            return Err(Error::config("invalid deployment geometry"));
        }
        if !(self.selection_margin >= 0.0) {
            return Err(Error::config("selection margin must be non-negative"));
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an identical scenario.
    pub fn to_config_string(&self) -> String {
        let list = |f: &dyn Fn(&GroupAngularSupport) -> String| {
            self.groups.iter().map(f).collect::<Vec<_>>().join(",")
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("mx", self.geometry.mx.to_string());
        kv("my", self.geometry.my.to_string());
        kv("spacing", format!("{:?}", self.geometry.spacing));
        kv("groups", self.groups.len().to_string());
        kv("users_per_group", list(&|g| g.users.to_string()));
        kv("mean_eaod_deg", list(&|g| format!("{:?}", g.mean_eaod_deg)));
        kv("mean_aaod_deg", list(&|g| format!("{:?}", g.mean_aaod_deg)));
        kv("eaod_spread_deg", list(&|g| format!("{:?}", g.eaod_spread_deg)));
        kv("aaod_spread_deg", list(&|g| format!("{:?}", g.aaod_spread_deg)));
        kv("total_power_dbm", format!("{:?}", self.total_power_dbm));
        kv("noise_psd_dbm_hz", format!("{:?}", self.noise_psd_dbm_hz));
        kv("bandwidth_hz", format!("{:?}", self.bandwidth_hz));
        kv("pathloss_exponent", format!("{:?}", self.pathloss_exponent));
        kv("num_paths", self.num_paths.to_string());
        kv("bs_height_m", format!("{:?}", self.bs_height_m));
        kv("ue_height_min_m", format!("{:?}", self.ue_height_m.0));
        kv("ue_height_max_m", format!("{:?}", self.ue_height_m.1));
        kv("distance_min_m", format!("{:?}", self.horizontal_distance_m.0));
        kv("distance_max_m", format!("{:?}", self.horizontal_distance_m.1));
        kv("selection_margin", format!("{:?}", self.selection_margin));
        out
    }

    /// 64-bit fingerprint of the canonical text form.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_config_string().as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let entries = parse_key_values(text)?;
        let mut scenario = Scenario::default();
        let get = |key: &str| entries.get(key).map(String::as_str);

        if let Some(v) = get("mx") {
            scenario.geometry.mx = parse_num("mx", v)?;
        }
        if let Some(v) = get("my") {
            scenario.geometry.my = parse_num("my", v)?;
        }
        if let Some(v) = get("spacing") {
            scenario.geometry.spacing = parse_num("spacing", v)?;
        }

        let num_groups: usize = match get("groups") {
            Some(v) => parse_num("groups", v)?,
            None => 1,
        };
        if num_groups == 0 {
            return Err(Error::config("groups must be at least 1"));
        }

        let users_per_group: Vec<usize> = match (get("users_per_group"), get("users")) {
            (Some(_), Some(_)) => {
                return Err(Error::config("specify either users or users_per_group, not both"))
            }
            (Some(v), None) => per_group_list("users_per_group", v, num_groups)?,
            (None, Some(v)) => {
                let total: usize = parse_num("users", v)?;
                if total % num_groups != 0 {
                    return Err(Error::config(format!(
                        "{total} users cannot be split evenly over {num_groups} groups"
                    )));
                }
                vec![total / num_groups; num_groups]
            }
            (None, None) => vec![3; num_groups],
        };
        let default_aaod: Vec<f64> = (0..num_groups).map(|g| 21.0 + 180.0 * g as f64).collect();
        let eaod = optional_list("mean_eaod_deg", get("mean_eaod_deg"), num_groups, 60.0)?;
        let aaod = match get("mean_aaod_deg") {
            Some(v) => per_group_list("mean_aaod_deg", v, num_groups)?,
            None => default_aaod,
        };
        let eaod_spread = optional_list("eaod_spread_deg", get("eaod_spread_deg"), num_groups, 15.0)?;
        let aaod_spread = optional_list("aaod_spread_deg", get("aaod_spread_deg"), num_groups, 11.0)?;
        scenario.groups = (0..num_groups)
            .map(|g| GroupAngularSupport {
                mean_eaod_deg: eaod[g],
                mean_aaod_deg: aaod[g],
                eaod_spread_deg: eaod_spread[g],
                aaod_spread_deg: aaod_spread[g],
                users: users_per_group[g],
            })
            .collect();

        let float = |key: &'static str, slot: &mut f64| -> Result<()> {
            if let Some(v) = entries.get(key) {
                *slot = parse_num(key, v)?;
            }
            Ok(())
        };
        float("total_power_dbm", &mut scenario.total_power_dbm)?;
        float("noise_psd_dbm_hz", &mut scenario.noise_psd_dbm_hz)?;
        float("bandwidth_hz", &mut scenario.bandwidth_hz)?;
        float("pathloss_exponent", &mut scenario.pathloss_exponent)?;
        float("bs_height_m", &mut scenario.bs_height_m)?;
        float("ue_height_min_m", &mut scenario.ue_height_m.0)?;
        float("ue_height_max_m", &mut scenario.ue_height_m.1)?;
        float("distance_min_m", &mut scenario.horizontal_distance_m.0)?;
        float("distance_max_m", &mut scenario.horizontal_distance_m.1)?;
        float("selection_margin", &mut scenario.selection_margin)?;
        if let Some(v) = entries.get("num_paths") {
            scenario.num_paths = parse_num("num_paths", v)?;
        }

        const KNOWN: &[&str] = &[
            "mx",
            "my",
            "spacing",
            "groups",
            "users",
            "users_per_group",
            "mean_eaod_deg",
            "mean_aaod_deg",
            "eaod_spread_deg",
            "aaod_spread_deg",
            "total_power_dbm",
            "noise_psd_dbm_hz",
            "bandwidth_hz",
            "pathloss_exponent",
            "num_paths",
            "bs_height_m",
            "ue_height_min_m",
            "ue_height_max_m",
            "distance_min_m",
            "distance_max_m",
            "selection_margin",
        ];
        if let Some(unknown) = entries.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::config(format!("unknown scenario key `{unknown}`")));
        }

        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text)
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub(crate) fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::config(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{value}`")))
}

fn per_group_list<T: std::str::FromStr + Clone>(key: &str, value: &str, groups: usize) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(|v| parse_num(key, v))
        .collect::<Result<_>>()?;
    match items.len() {
        1 => Ok(vec![items[0].clone(); groups]),
        n if n == groups => Ok(items),
        n => Err(Error::config(format!(
            "`{key}` has {n} values for {groups} groups"
        ))),
    }
}

fn optional_list(key: &str, value: Option<&str>, groups: usize, default: f64) -> Result<Vec<f64>> {
    match value {
        Some(v) => per_group_list(key, v, groups),
        None => Ok(vec![default; groups]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_power_from_psd_and_bandwidth() {
        let s = Scenario::default();
        let expected = 10f64.powf(-13.4);
        assert!((s.noise_power_mw() - expected).abs() / expected < 1e-12);
        assert!((s.total_power_mw() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut s = Scenario::microcell(8, 2, 6);
        s.selection_margin = 0.03;
        let parsed = Scenario::from_config_str(&s.to_config_string()).unwrap();
        assert_eq!(parsed, s);
        assert_eq!(parsed.fingerprint(), s.fingerprint());
    }

    #[test]
    fn second_group_defaults_to_opposite_azimuth() {
        let s = Scenario::from_config_str("groups = 2\nusers = 4\n").unwrap();
        assert_eq!(s.groups[1].mean_aaod_deg, 201.0);
        assert_eq!(s.group_of_user(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        assert!(Scenario::from_config_str("groups = 2\nusers = 3\n").is_err());
        assert!(Scenario::from_config_str("mx = 0\n").is_err());
        assert!(Scenario::from_config_str("users_per_group = 1,2,3\n").is_err());
        assert!(Scenario::from_config_str("bogus = 1\n").is_err());
        assert!(Scenario::from_config_str("mx 4\n").is_err());
        assert!(Scenario::from_config_str("eaod_spread_deg = -1\n").is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Scenario::microcell(8, 1, 3);
        let b = Scenario::microcell(8, 1, 4);
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
