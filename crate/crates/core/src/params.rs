//! Model parameters, physical constants and the flat `key = value` parameter
//! file format.
//!
//! Keys in the parameter file are the symbol names of the model (`x0`, `N0`,
//! `mu_max`, `K_N`, ...). Keys that are absent take the default value set,
//! so an empty file yields the reference cell configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Gas constant, Faraday constant, Avogadro number and temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Gas constant, J/(mol K).
    pub r: f64,
    /// Faraday constant, C/mol.
    pub f: f64,
    /// Avogadro number, 1/mol.
    pub n_av: f64,
    /// Temperature, K.
    pub t: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            r: 8.314,
            f: 96486.0,
            n_av: 6.023e23,
            t: 298.0,
        }
    }
}

impl PhysicalConstants {
    /// `F / (R T)`, 1/V.
    pub fn f_over_rt(&self) -> f64 {
        self.f / (self.r * self.t)
    }
}

/// Kinetic, photonic, geometric and electrical parameters of the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParameters {
    /// Initial cell concentration, g/m³.
    pub x0: f64,
    /// Initial nutrient concentration, g/m³.
    pub n0: f64,
    /// Maximum specific growth rate, 1/s.
    pub mu_max: f64,
    /// Half-saturation constant of growth on nutrient, g/m³.
    pub k_n: f64,
    /// Cell death rate, 1/s.
    pub k2: f64,
    /// Yield of cells on nutrient.
    pub y_xn: f64,
    /// Maximum cell density, g/m³.
    pub x_max: f64,
    /// Internal resistance, Ω.
    pub r_int: f64,
    /// Incident light intensity, lux.
    pub l0: f64,
    /// Lux to photons/s conversion factor.
    pub c_f: f64,
    /// Quantum yield, electrons per photon.
    pub q: f64,
    /// Photon uptake efficiency.
    pub eta_eff: f64,
    /// Illuminated area, m².
    pub a_s: f64,
    /// Electrode area, m².
    pub a_e: f64,
    /// Charge-transfer-like exponent of the lumped kinetics.
    pub alpha: f64,
    /// Electrons transferred per reaction.
    pub n: f64,
    /// Standard cell potential, V.
    pub e0: f64,
    pub constants: PhysicalConstants,
}

impl Default for ModelParameters {
    fn default() -> Self {
        Self {
            x0: 12.2,
            n0: 2890.0,
            mu_max: 5e-5,
            k_n: 4.0,
            k2: 5.32e-6,
            y_xn: 10.0,
            x_max: 1e5,
            r_int: 599.0,
            l0: 625.0,
            c_f: 1e16,
            q: 0.742,
            eta_eff: 0.5,
            a_s: 6.25e-4,
            a_e: 4.84e-4,
            alpha: 0.005,
            n: 2.0,
            e0: 1.241,
            constants: PhysicalConstants::default(),
        }
    }
}

/// File keys in canonical output order.
pub const PARAMETER_KEYS: [&str; 21] = [
    "x0", "N0", "mu_max", "K_N", "k2", "Y_xN", "x_max", "R_int", "L0", "C_f", "Q", "eta_eff",
    "A_s", "A_E", "alpha", "n", "E0", "R", "F", "N_Av", "T",
];

impl ModelParameters {
    pub fn get(&self, key: &str) -> Option<f64> {
        let c = &self.constants;
        Some(match key {
            "x0" => self.x0,
            "N0" => self.n0,
            "mu_max" => self.mu_max,
            "K_N" => self.k_n,
            "k2" => self.k2,
            "Y_xN" => self.y_xn,
            "x_max" => self.x_max,
            "R_int" => self.r_int,
            "L0" => self.l0,
            "C_f" => self.c_f,
            "Q" => self.q,
            "eta_eff" => self.eta_eff,
            "A_s" => self.a_s,
            "A_E" => self.a_e,
            "alpha" => self.alpha,
            "n" => self.n,
            "E0" => self.e0,
            "R" => c.r,
            "F" => c.f,
            "N_Av" => c.n_av,
            "T" => c.t,
            _ => return None,
        })
    }

    /// Sets the field named by `key`. Returns `false` for an unknown key.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        let slot = match key {
            "x0" => &mut self.x0,
            "N0" => &mut self.n0,
            "mu_max" => &mut self.mu_max,
            "K_N" => &mut self.k_n,
            "k2" => &mut self.k2,
            "Y_xN" => &mut self.y_xn,
            "x_max" => &mut self.x_max,
            "R_int" => &mut self.r_int,
            "L0" => &mut self.l0,
            "C_f" => &mut self.c_f,
            "Q" => &mut self.q,
            "eta_eff" => &mut self.eta_eff,
            "A_s" => &mut self.a_s,
            "A_E" => &mut self.a_e,
            "alpha" => &mut self.alpha,
            "n" => &mut self.n,
            "E0" => &mut self.e0,
            "R" => &mut self.constants.r,
            "F" => &mut self.constants.f,
            "N_Av" => &mut self.constants.n_av,
            "T" => &mut self.constants.t,
            _ => return false,
        };
        *slot = value;
        true
    }

    pub fn validate(&self) -> Result<()> {
        for key in PARAMETER_KEYS {
            let v = self.get(key).expect("canonical key");
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::validation(
                    key,
                    format!("{v} must be finite and strictly positive"),
                ));
            }
        }
        if self.alpha >= 1.0 {
            return Err(Error::validation(
                "alpha",
                format!("{} must lie in (0, 1)", self.alpha),
            ));
        }
        if self.eta_eff > 1.0 {
            return Err(Error::validation(
                "eta_eff",
                format!("{} must lie in (0, 1]", self.eta_eff),
            ));
        }
        if self.q > 1.0 {
            return Err(Error::validation(
                "Q",
                format!("{} must lie in (0, 1]", self.q),
            ));
        }
        if self.x0 > self.x_max {
            return Err(Error::validation(
                "x0",
                format!("{} exceeds x_max = {}", self.x0, self.x_max),
            ));
        }
        Ok(())
    }

    /// Parses parameter-file text. Unspecified keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut params = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `key = value`, found `{content}`"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let parsed: f64 = value.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{key}`: `{value}` is not a number"),
            })?;
            if !params.set(key, parsed) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
        }
        params.validate()?;
        Ok(params)
    }

    /// Serializes every key in canonical order. Values use the shortest
    /// round-trip decimal form, so parsing the output reproduces `self`.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for key in PARAMETER_KEYS {
            let _ = writeln!(out, "{key} = {:?}", self.get(key).expect("canonical key"));
        }
        out
    }
}

/// Reads and validates a parameter file.
pub fn load_parameters(path: impl AsRef<Path>) -> Result<ModelParameters> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ModelParameters::parse(&text)
}

/// Standard potentials of the two electrode reactions, in millivolts so the
/// tabulated values and their difference are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfCellPotentials {
    /// Anode: reduced methylene blue oxidation, mV.
    pub anode_mv: f64,
    /// Cathode: oxygen reduction to water, mV.
    pub cathode_mv: f64,
}

impl Default for HalfCellPotentials {
    fn default() -> Self {
        Self {
            anode_mv: -11.0,
            cathode_mv: 1230.0,
        }
    }
}

impl HalfCellPotentials {
    /// `E_cathode - E_anode`, V.
    pub fn cell_potential(&self) -> f64 {
        (self.cathode_mv - self.anode_mv) / 1000.0
    }
}

/// Standard cell potential of the reference half-cell pair, V.
pub fn standard_cell_potential() -> f64 {
    HalfCellPotentials::default().cell_potential()
}
