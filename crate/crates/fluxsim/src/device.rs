//! Device description and configuration ingestion.
//!
//! Internal units are angular frequencies in rad/ns throughout. Device files
//! mix two conventions, exactly like the device tables they come from:
//! columns quoted "/2pi" are linear GHz, raw energies are rad/ns. Every
//! energy-like field in a file therefore carries an explicit unit tag,
//! either `ghz_over_2pi` or `rad_per_ns`; silent unit mistakes are the
//! dominant failure mode in this kind of work.
//!
//! External fluxes are handled in radians internally (2 pi = one flux
//! quantum) and as fractions of the flux quantum (`*_over_2pi`) in files.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("section [{section}]: missing field `{field}`")]
    MissingField { section: String, field: String },
    #[error("section [{section}], field `{field}`: {msg}")]
    BadField { section: String, field: String, msg: String },
    #[error("invalid device: {0}")]
    Invalid(String),
}

/// Convert a linear frequency in GHz to an angular frequency in rad/ns.
pub fn to_angular(ghz: f64) -> f64 {
    TAU * ghz
}

/// Fixed-frequency transmon energies (rad/ns).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedTransmonParams {
    pub e_c: f64,
    pub e_j: f64,
}

impl FixedTransmonParams {
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if !(self.e_c > 0.0) {
            return Err(ConfigError::Invalid(format!("E_C must be positive, got {}", self.e_c)));
        }
        if !(self.e_j > 0.0) {
            return Err(ConfigError::Invalid(format!("E_J must be positive, got {}", self.e_j)));
        }
        let mut warnings = Vec::new();
        if self.e_j / self.e_c < 10.0 {
            warnings.push(format!(
                "fixed transmon with E_J/E_C = {:.2} is outside the transmon regime",
                self.e_j / self.e_c
            ));
        }
        Ok(warnings)
    }
}

/// Flux-tunable transmon energies (rad/ns).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunableTransmonParams {
    pub e_c: f64,
    pub e_j1: f64,
    pub e_j2: f64,
}

impl TunableTransmonParams {
    /// Total Josephson energy E_J1 + E_J2.
    pub fn e_sigma(&self) -> f64 {
        self.e_j1 + self.e_j2
    }

    /// Asymmetry factor d = (E_J2 - E_J1) / (E_J2 + E_J1).
    pub fn asymmetry(&self) -> f64 {
        (self.e_j2 - self.e_j1) / (self.e_j2 + self.e_j1)
    }

    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if !(self.e_c > 0.0) {
            return Err(ConfigError::Invalid(format!("E_C must be positive, got {}", self.e_c)));
        }
        if !(self.e_j1 > 0.0) || !(self.e_j2 > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "Josephson energies must be positive, got E_J1 = {}, E_J2 = {}",
                self.e_j1, self.e_j2
            )));
        }
        let d = self.asymmetry();
        if !(d > -1.0 && d < 1.0) {
            return Err(ConfigError::Invalid(format!("asymmetry factor d = {d} out of (-1, 1)")));
        }
        let mut warnings = Vec::new();
        if self.e_sigma() / self.e_c < 10.0 {
            warnings.push(format!(
                "tunable transmon with E_Sigma/E_C = {:.2} is outside the transmon regime",
                self.e_sigma() / self.e_c
            ));
        }
        Ok(warnings)
    }
}

/// Transmission line resonator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResonatorParams {
    /// Resonator angular frequency (rad/ns).
    pub omega_r: f64,
    /// Number of Fock states kept.
    pub fock_cutoff: usize,
}

impl ResonatorParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.omega_r > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "resonator frequency must be positive, got {}",
                self.omega_r
            )));
        }
        if self.fock_cutoff < 2 {
            return Err(ConfigError::Invalid(format!(
                "resonator Fock cutoff must be at least 2, got {}",
                self.fock_cutoff
            )));
        }
        Ok(())
    }
}

/// Measured qubit frequency and anharmonicity (rad/ns) for effective models
/// that are parameterised from a device table instead of circuit energies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveQubitParams {
    pub omega: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Subsystem {
    Fixed { params: FixedTransmonParams, effective: Option<EffectiveQubitParams> },
    Tunable {
        params: TunableTransmonParams,
        /// Flux offset phi(0) in radians.
        phi0: f64,
        effective: Option<EffectiveQubitParams>,
    },
    Resonator { params: ResonatorParams },
}

impl Subsystem {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Subsystem::Fixed { .. } => "fixed_transmon",
            Subsystem::Tunable { .. } => "tunable_transmon",
            Subsystem::Resonator { .. } => "resonator",
        }
    }

    pub fn is_tunable(&self) -> bool {
        matches!(self, Subsystem::Tunable { .. })
    }

    pub fn effective(&self) -> Option<EffectiveQubitParams> {
        match self {
            Subsystem::Fixed { effective, .. } | Subsystem::Tunable { effective, .. } => *effective,
            Subsystem::Resonator { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingKind {
    ChargeCharge,
    ResonatorCharge,
}

/// Dipole-dipole coupling between subsystems `i` and `j` with bare strength
/// G (rad/ns).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingSpec {
    pub i: usize,
    pub j: usize,
    pub g: f64,
    pub kind: CouplingKind,
}

/// A validated multi-subsystem device.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceSpec {
    pub subsystems: Vec<Subsystem>,
    pub couplings: Vec<CouplingSpec>,
    /// Basis states kept per subsystem in the truncated product basis.
    pub n_m: usize,
    /// Charge-basis cutoff: charge numbers run over {-N_c, ..., +N_c}.
    pub n_c: usize,
    /// Index of the subsystem the flux pulse is applied to.
    pub pulse_target: usize,
    /// Non-fatal validation notes (e.g. marginal transmon regime).
    pub warnings: Vec<String>,
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.subsystems.is_empty() {
            return Err(ConfigError::Invalid("device has no subsystems".into()));
        }
        if self.n_m < 2 {
            return Err(ConfigError::Invalid(format!("N_m must be at least 2, got {}", self.n_m)));
        }
        if self.n_c < 10 {
            return Err(ConfigError::Invalid(format!("N_c must be at least 10, got {}", self.n_c)));
        }
        let n = self.subsystems.len();
        if self.pulse_target >= n {
            return Err(ConfigError::Invalid(format!(
                "pulse target {} out of range (device has {n} subsystems)",
                self.pulse_target
            )));
        }
        for c in &self.couplings {
            if c.i == c.j {
                return Err(ConfigError::Invalid(format!("coupling connects {0} to itself", c.i)));
            }
            if c.i >= n || c.j >= n {
                return Err(ConfigError::Invalid(format!(
                    "coupling ({}, {}) references a missing subsystem",
                    c.i, c.j
                )));
            }
            let res_i = matches!(self.subsystems[c.i], Subsystem::Resonator { .. });
            let res_j = matches!(self.subsystems[c.j], Subsystem::Resonator { .. });
            let expected = if res_i || res_j {
                if res_i && res_j {
                    return Err(ConfigError::Invalid(format!(
                        "coupling ({}, {}) connects two resonators, which is not modelled",
                        c.i, c.j
                    )));
                }
                CouplingKind::ResonatorCharge
            } else {
                CouplingKind::ChargeCharge
            };
            if c.kind != expected {
                return Err(ConfigError::Invalid(format!(
                    "coupling ({}, {}) has kind {:?} but subsystem kinds imply {:?}",
                    c.i, c.j, c.kind, expected
                )));
            }
        }
        Ok(())
    }

    /// Flux offset of the pulsed subsystem (radians).
    pub fn pulse_target_phi0(&self) -> Option<f64> {
        match &self.subsystems[self.pulse_target] {
            Subsystem::Tunable { phi0, .. } => Some(*phi0),
            _ => None,
        }
    }

    /// Native basis dimension of subsystem `k` (charge basis for transmons,
    /// Fock basis for resonators).
    pub fn native_dim(&self, k: usize) -> usize {
        match &self.subsystems[k] {
            Subsystem::Resonator { params } => params.fock_cutoff,
            _ => 2 * self.n_c + 1,
        }
    }

    /// Truncated basis dimension of subsystem `k` with `n_m` states kept per
    /// transmon. Resonators always keep their full Fock cutoff.
    pub fn truncated_dim(&self, k: usize, n_m: usize) -> usize {
        match &self.subsystems[k] {
            Subsystem::Resonator { params } => params.fock_cutoff,
            _ => n_m,
        }
    }

    /// Canonical configuration text; reparsing it reproduces the spec.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for (k, sub) in self.subsystems.iter().enumerate() {
            let _ = writeln!(s, "[subsystem.{k}]");
            let _ = writeln!(s, "kind = {}", sub.kind_name());
            match sub {
                Subsystem::Fixed { params, effective } => {
                    let _ = writeln!(s, "e_c = {} rad_per_ns", params.e_c);
                    let _ = writeln!(s, "e_j = {} rad_per_ns", params.e_j);
                    if let Some(eff) = effective {
                        let _ = writeln!(s, "omega = {} rad_per_ns", eff.omega);
                        let _ = writeln!(s, "alpha = {} rad_per_ns", eff.alpha);
                    }
                }
                Subsystem::Tunable { params, phi0, effective } => {
                    let _ = writeln!(s, "e_c = {} rad_per_ns", params.e_c);
                    let _ = writeln!(s, "e_j1 = {} rad_per_ns", params.e_j1);
                    let _ = writeln!(s, "e_j2 = {} rad_per_ns", params.e_j2);
                    let _ = writeln!(s, "phi0_over_2pi = {}", phi0 / TAU);
                    if let Some(eff) = effective {
                        let _ = writeln!(s, "omega = {} rad_per_ns", eff.omega);
                        let _ = writeln!(s, "alpha = {} rad_per_ns", eff.alpha);
                    }
                }
                Subsystem::Resonator { params } => {
                    let _ = writeln!(s, "omega_r = {} rad_per_ns", params.omega_r);
                    let _ = writeln!(s, "fock_cutoff = {}", params.fock_cutoff);
                }
            }
            let _ = writeln!(s);
        }
        for (k, c) in self.couplings.iter().enumerate() {
            let _ = writeln!(s, "[coupling.{k}]");
            let _ = writeln!(s, "i = {}", c.i);
            let _ = writeln!(s, "j = {}", c.j);
            let _ = writeln!(s, "g = {} rad_per_ns", c.g);
            let kind = match c.kind {
                CouplingKind::ChargeCharge => "charge_charge",
                CouplingKind::ResonatorCharge => "resonator_charge",
            };
            let _ = writeln!(s, "kind = {kind}");
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "[simulation]");
        let _ = writeln!(s, "n_m = {}", self.n_m);
        let _ = writeln!(s, "n_c = {}", self.n_c);
        let _ = writeln!(s, "pulse_target = {}", self.pulse_target);
        s
    }

    /// FNV-1a digest of the canonical serialization, for run manifests.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.to_config_string().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

pub fn load_device_spec(path: impl AsRef<Path>) -> Result<DeviceSpec, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_device_spec(&text)
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

impl Section {
    fn take(&self, key: &str) -> Option<&(String, String, usize)> {
        self.entries.iter().find(|(k, _, _)| k == key)
    }

    /// An energy-like value with a mandatory unit tag.
    fn energy(&self, key: &str) -> Result<f64, ConfigError> {
        let (_, raw, _) = self.take(key).ok_or_else(|| ConfigError::MissingField {
            section: self.name.clone(),
            field: key.into(),
        })?;
        let parts: Vec<&str> = raw.split_whitespace().collect();
        let bad = |msg: &str| ConfigError::BadField {
            section: self.name.clone(),
            field: key.into(),
            msg: msg.into(),
        };
        if parts.len() != 2 {
            return Err(bad("expected `<value> <unit>` with unit ghz_over_2pi or rad_per_ns"));
        }
        let value: f64 = parts[0].parse().map_err(|_| bad("value is not a number"))?;
        match parts[1] {
            "ghz_over_2pi" => Ok(to_angular(value)),
            "rad_per_ns" => Ok(value),
            other => Err(bad(&format!("unknown unit tag `{other}`"))),
        }
    }

    fn optional_energy(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        if self.take(key).is_none() {
            return Ok(None);
        }
        self.energy(key).map(Some)
    }

    fn number(&self, key: &str) -> Result<f64, ConfigError> {
        let (_, raw, _) = self.take(key).ok_or_else(|| ConfigError::MissingField {
            section: self.name.clone(),
            field: key.into(),
        })?;
        raw.trim().parse().map_err(|_| ConfigError::BadField {
            section: self.name.clone(),
            field: key.into(),
            msg: "expected a bare number".into(),
        })
    }

    fn count(&self, key: &str) -> Result<usize, ConfigError> {
        let (_, raw, _) = self.take(key).ok_or_else(|| ConfigError::MissingField {
            section: self.name.clone(),
            field: key.into(),
        })?;
        raw.trim().parse().map_err(|_| ConfigError::BadField {
            section: self.name.clone(),
            field: key.into(),
            msg: "expected a non-negative integer".into(),
        })
    }

    fn string(&self, key: &str) -> Result<&str, ConfigError> {
        self.take(key).map(|(_, v, _)| v.as_str()).ok_or_else(|| ConfigError::MissingField {
            section: self.name.clone(),
            field: key.into(),
        })
    }
}

pub fn parse_device_spec(text: &str) -> Result<DeviceSpec, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Parse {
                line: line_no,
                msg: "unterminated section header".into(),
            })?;
            sections.push(Section { name: name.trim().to_string(), line: line_no, entries: Vec::new() });
        } else if let Some((k, v)) = line.split_once('=') {
            let section = sections.last_mut().ok_or(ConfigError::Parse {
                line: line_no,
                msg: "key-value pair before any section header".into(),
            })?;
            section.entries.push((k.trim().to_string(), v.trim().to_string(), line_no));
        } else {
            return Err(ConfigError::Parse {
                line: line_no,
                msg: format!("cannot parse `{line}`"),
            });
        }
    }

    let mut subsystems: Vec<(usize, Subsystem)> = Vec::new();
    let mut couplings: Vec<CouplingSpec> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut sim: Option<&Section> = None;

    for sec in &sections {
        if let Some(rest) = sec.name.strip_prefix("subsystem.") {
            let index: usize = rest.parse().map_err(|_| ConfigError::Parse {
                line: sec.line,
                msg: format!("bad subsystem index `{rest}`"),
            })?;
            let kind = sec.string("kind")?;
            let effective = match (sec.optional_energy("omega")?, sec.optional_energy("alpha")?) {
                (Some(omega), Some(alpha)) => Some(EffectiveQubitParams { omega, alpha }),
                (None, None) => None,
                _ => {
                    return Err(ConfigError::BadField {
                        section: sec.name.clone(),
                        field: "omega/alpha".into(),
                        msg: "effective parameters require both omega and alpha".into(),
                    })
                }
            };
            let sub = match kind {
                "fixed_transmon" => {
                    let params =
                        FixedTransmonParams { e_c: sec.energy("e_c")?, e_j: sec.energy("e_j")? };
                    warnings.extend(params.validate()?);
                    Subsystem::Fixed { params, effective }
                }
                "tunable_transmon" => {
                    let params = TunableTransmonParams {
                        e_c: sec.energy("e_c")?,
                        e_j1: sec.energy("e_j1")?,
                        e_j2: sec.energy("e_j2")?,
                    };
                    warnings.extend(params.validate()?);
                    let phi0 = TAU * sec.number("phi0_over_2pi")?;
                    Subsystem::Tunable { params, phi0, effective }
                }
                "resonator" => {
                    let params = ResonatorParams {
                        omega_r: sec.energy("omega_r")?,
                        fock_cutoff: if sec.take("fock_cutoff").is_some() {
                            sec.count("fock_cutoff")?
                        } else {
                            4
                        },
                    };
                    params.validate()?;
                    Subsystem::Resonator { params }
                }
                other => {
                    return Err(ConfigError::BadField {
                        section: sec.name.clone(),
                        field: "kind".into(),
                        msg: format!("unknown subsystem kind `{other}`"),
                    })
                }
            };
            subsystems.push((index, sub));
        } else if sec.name.starts_with("coupling.") {
            let i = sec.count("i")?;
            let j = sec.count("j")?;
            let g = sec.energy("g")?;
            let kind = match sec.take("kind") {
                None => None,
                Some((_, v, _)) => match v.as_str() {
                    "charge_charge" => Some(CouplingKind::ChargeCharge),
                    "resonator_charge" => Some(CouplingKind::ResonatorCharge),
                    other => {
                        return Err(ConfigError::BadField {
                            section: sec.name.clone(),
                            field: "kind".into(),
                            msg: format!("unknown coupling kind `{other}`"),
                        })
                    }
                },
            };
            couplings.push(CouplingSpec { i, j, g, kind: kind.unwrap_or(CouplingKind::ChargeCharge) });
        } else if sec.name == "simulation" {
            sim = Some(sec);
        } else {
            return Err(ConfigError::Parse {
                line: sec.line,
                msg: format!("unknown section [{}]", sec.name),
            });
        }
    }

    subsystems.sort_by_key(|(idx, _)| *idx);
    for (expect, (idx, _)) in subsystems.iter().enumerate() {
        if *idx != expect {
            return Err(ConfigError::Invalid(format!(
                "subsystem indices must be contiguous from 0; missing index {expect}"
            )));
        }
    }
    let subsystems: Vec<Subsystem> = subsystems.into_iter().map(|(_, s)| s).collect();

    let sim = sim.ok_or(ConfigError::Invalid("missing [simulation] section".into()))?;
    let n_m = sim.count("n_m")?;
    let n_c = if sim.take("n_c").is_some() { sim.count("n_c")? } else { 25 };
    let pulse_target = sim.count("pulse_target")?;

    // infer coupling kinds that were not stated
    for c in couplings.iter_mut() {
        if c.i < subsystems.len() && c.j < subsystems.len() {
            let res = matches!(subsystems[c.i], Subsystem::Resonator { .. })
                || matches!(subsystems[c.j], Subsystem::Resonator { .. });
            if res {
                c.kind = CouplingKind::ResonatorCharge;
            }
        }
    }

    let spec = DeviceSpec { subsystems, couplings, n_m, n_c, pulse_target, warnings };
    spec.validate()?;
    Ok(spec)
}
