//! Cell parameters: electrolyte, electrode, and porous-geometry data, the
//! assembled [`CellConfig`], and the per-run [`ParameterPoint`].
//!
//! Defaults are the reference parameter set of the model (a symmetric cell
//! with ideal-electrode materials and a solvation-number-4 electrolyte).
//! A configuration can also be loaded from a plain `key = value` text file,
//! see [`CellConfig::from_key_values`].

use crate::error::{Error, Result};
use crate::materials::{f_active, f_electrolyte};

/// Thermal voltage k_B*T/e_0 at 298.15 K, in volts. Used only when
/// converting the dimensionless cell voltage to a dimensional report.
pub const THERMAL_VOLTAGE: f64 = 0.025692579;

/// Liquid electrolyte parameters (incompressible, solvation-aware model).
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrolyteParams {
    /// Pure-solvent molar concentration n_ES,ref in mol/L.
    pub n_solvent_ref: f64,
    /// Reference electrolyte concentration n_EC,ref in mol/L.
    pub n_salt_ref: f64,
    /// Solvation number kappa (>= 1).
    pub solvation_number: f64,
    /// Transference number t in (0, 1).
    pub transference: f64,
    /// Dimensionless chemical diffusion coefficient.
    pub diff_coeff: f64,
    /// Dimensionless molar conductivity.
    pub molar_conductivity: f64,
}

impl Default for ElectrolyteParams {
    fn default() -> Self {
        Self {
            n_solvent_ref: 11.9103,
            n_salt_ref: 1.0,
            solvation_number: 4.0,
            transference: 0.5,
            diff_coeff: 5.0,
            molar_conductivity: 10.0,
        }
    }
}

impl ElectrolyteParams {
    /// Derived transport parameter `S = (2t - 1) * Lambda`. Zero for the
    /// symmetric transference number 0.5.
    pub fn s_e(&self) -> f64 {
        (2.0 * self.transference - 1.0) * self.molar_conductivity
    }

    /// Ratio of pure-solvent to reference salt concentration; the prefactor
    /// of the dimensionless total-concentration function.
    pub fn concentration_ratio(&self) -> f64 {
        self.n_solvent_ref / self.n_salt_ref
    }

    /// Uniform initial electrolyte mole fraction
    /// `y_E0 = n_EC / (n_ES - 2*kappa*n_EC)`.
    pub fn y_initial(&self) -> f64 {
        self.n_salt_ref / (self.n_solvent_ref - 2.0 * self.solvation_number * self.n_salt_ref)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvation_number < 1.0 {
            return Err(Error::Config(format!(
                "solvation number must be >= 1, got {}",
                self.solvation_number
            )));
        }
        if !(self.transference > 0.0 && self.transference < 1.0) {
            return Err(Error::Config(format!(
                "transference number must lie in (0,1), got {}",
                self.transference
            )));
        }
        if self.diff_coeff <= 0.0 || self.molar_conductivity <= 0.0 {
            return Err(Error::Config(
                "diffusion coefficient and molar conductivity must be positive".into(),
            ));
        }
        let y0 = self.y_initial();
        if !(y0 > 0.0 && y0 < 0.5) {
            return Err(Error::Config(format!(
                "initial electrolyte mole fraction {y0} outside (0, 0.5)"
            )));
        }
        Ok(())
    }
}

/// Active-material parameters of one electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeParams {
    /// Lattice-site molar concentration n_lat in mol/L.
    pub lattice_density: f64,
    /// Initial filling fraction in (0, 1).
    pub y_initial: f64,
    /// Mixing-enthalpy parameter gamma (> -2.5; below that the material
    /// phase-separates).
    pub enthalpy_gamma: f64,
    /// Dimensionless solid-phase electronic conductivity.
    pub solid_conductivity: f64,
    /// Dimensionless reference diffusion coefficient of the active phase.
    pub diff_ref: f64,
    /// Dimensionless exchange rate of the intercalation reaction.
    pub exchange_rate: f64,
    /// Half-cell energy vs. metallic lithium, in volts. A reporting offset
    /// for the dimensional cell voltage only.
    pub half_cell_energy: f64,
    /// Particle radius relative to the micro unit cell, in (0, 0.5).
    pub particle_radius: f64,
    /// Micro unit-cell width in nanometres (metadata).
    pub unit_cell_width_nm: f64,
}

impl ElectrodeParams {
    fn base(y_initial: f64, half_cell_energy: f64) -> Self {
        Self {
            lattice_density: 37.3114,
            y_initial,
            enthalpy_gamma: 1.0,
            solid_conductivity: 10.0,
            diff_ref: 1.0,
            exchange_rate: 1.0,
            half_cell_energy,
            particle_radius: 0.4,
            unit_cell_width_nm: 10.0,
        }
    }

    pub fn default_anode() -> Self {
        Self::base(0.99, 0.2)
    }

    pub fn default_cathode() -> Self {
        Self::base(0.01, 3.95)
    }

    pub fn validate(&self, which: &str) -> Result<()> {
        if self.enthalpy_gamma <= -2.5 {
            return Err(Error::Config(format!(
                "{which}: enthalpy parameter {} entails phase separation (must be > -2.5)",
                self.enthalpy_gamma
            )));
        }
        if !(self.y_initial > 0.0 && self.y_initial < 1.0) {
            return Err(Error::Config(format!(
                "{which}: initial filling must lie in (0,1), got {}",
                self.y_initial
            )));
        }
        if self.diff_ref <= 0.0 || self.exchange_rate <= 0.0 {
            return Err(Error::Config(format!(
                "{which}: diffusion and exchange rates must be positive"
            )));
        }
        if !(self.particle_radius > 0.0 && self.particle_radius < 0.5) {
            return Err(Error::Config(format!(
                "{which}: particle radius must lie in (0, 0.5), got {}",
                self.particle_radius
            )));
        }
        Ok(())
    }
}

/// Homogenized porous-media data of one region. The separator carries no
/// solid phase: `psi_s`/`pi_s` are absent there and `theta` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PorousGeometry {
    /// Electrolyte phase fraction.
    pub psi_e: f64,
    /// Electrolyte porosity corrector.
    pub pi_e: f64,
    /// Solid phase fraction (electrodes only).
    pub psi_s: Option<f64>,
    /// Solid porosity corrector (electrodes only).
    pub pi_s: Option<f64>,
    /// Interfacial area factor; zero in the separator.
    pub theta: f64,
    /// Region width in micrometres.
    pub width_um: f64,
}

impl PorousGeometry {
    pub fn default_electrode() -> Self {
        Self {
            psi_e: 0.72713951,
            pi_e: 0.86842790,
            psi_s: Some(0.27286022),
            pi_s: Some(0.09819225),
            theta: 1.96328590,
            width_um: 100.0,
        }
    }

    pub fn default_separator() -> Self {
        Self {
            psi_e: 0.72713951,
            pi_e: 0.86842790,
            psi_s: None,
            pi_s: None,
            theta: 0.0,
            width_um: 100.0,
        }
    }

    pub fn validate(&self, which: &str) -> Result<()> {
        if !(self.psi_e > 0.0 && self.psi_e < 1.0) {
            return Err(Error::Config(format!(
                "{which}: electrolyte phase fraction must lie in (0,1)"
            )));
        }
        if !(self.pi_e > 0.0 && self.pi_e <= 1.0) {
            return Err(Error::Config(format!(
                "{which}: electrolyte porosity corrector must lie in (0,1]"
            )));
        }
        if self.theta < 0.0 {
            return Err(Error::Config(format!(
                "{which}: interfacial area factor must be nonnegative"
            )));
        }
        if self.width_um <= 0.0 {
            return Err(Error::Config(format!("{which}: width must be positive")));
        }
        Ok(())
    }
}

/// Region tags of the macroscopic domain, ordered from the grounded anode
/// collector to the current-carrying cathode collector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Anode,
    Separator,
    Cathode,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Anode => "anode",
            Region::Separator => "separator",
            Region::Cathode => "cathode",
        }
    }
}

/// Electrode tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Electrode {
    Anode,
    Cathode,
}

/// All physical, geometric, and termination parameters of the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    pub electrolyte: ElectrolyteParams,
    pub anode: ElectrodeParams,
    pub cathode: ElectrodeParams,
    pub geom_anode: PorousGeometry,
    pub geom_separator: PorousGeometry,
    pub geom_cathode: PorousGeometry,
    /// Symmetry factor of the reaction rate factor, in [0, 1].
    pub bv_symmetry: f64,
    /// Termination voltage (dimensionless solid potential at the cathode).
    pub e_min: f64,
    /// Applied-current scaling `eta_W = psi_A^Cat * W^Cat / W`; consistent
    /// with the geometry by construction, see [`CellConfig::validate`].
    pub eta_w_cat: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        let geom_cathode = PorousGeometry::default_electrode();
        let cathode = ElectrodeParams::default_cathode();
        let mut cfg = Self {
            electrolyte: ElectrolyteParams::default(),
            anode: ElectrodeParams::default_anode(),
            cathode,
            geom_anode: PorousGeometry::default_electrode(),
            geom_separator: PorousGeometry::default_separator(),
            geom_cathode,
            bv_symmetry: 0.5,
            e_min: -0.2,
            eta_w_cat: 0.0,
        };
        cfg.eta_w_cat = cfg.derived_eta_w_cat();
        cfg
    }
}

impl CellConfig {
    pub fn electrode(&self, e: Electrode) -> &ElectrodeParams {
        match e {
            Electrode::Anode => &self.anode,
            Electrode::Cathode => &self.cathode,
        }
    }

    pub fn geometry(&self, r: Region) -> &PorousGeometry {
        match r {
            Region::Anode => &self.geom_anode,
            Region::Separator => &self.geom_separator,
            Region::Cathode => &self.geom_cathode,
        }
    }

    /// Total cell width in micrometres.
    pub fn total_width(&self) -> f64 {
        self.geom_anode.width_um + self.geom_separator.width_um + self.geom_cathode.width_um
    }

    /// Width fraction of a region.
    pub fn width_fraction(&self, r: Region) -> f64 {
        self.geometry(r).width_um / self.total_width()
    }

    /// Active phase fraction of the cathode, derived from the interfacial
    /// area factor as `psi_A = r_A * theta / 3`. For an unobstructed sphere
    /// (theta = 4*pi*r^2) this is the sphere volume fraction 4/3*pi*r^3;
    /// using theta keeps the lithium taken up through the reactive surface
    /// and the charge delivered at the collector in exact balance.
    pub fn psi_a_cathode(&self) -> f64 {
        self.cathode.particle_radius * self.geom_cathode.theta / 3.0
    }

    /// The value `eta_w_cat` must take for geometric consistency.
    pub fn derived_eta_w_cat(&self) -> f64 {
        self.psi_a_cathode() * self.width_fraction(Region::Cathode)
    }

    /// Lattice-to-reference concentration ratio of an electrode.
    pub fn eta_n(&self, e: Electrode) -> f64 {
        self.electrode(e).lattice_density / self.electrolyte.n_salt_ref
    }

    /// Uniform initial electrolyte mole fraction.
    pub fn y_e_initial(&self) -> f64 {
        self.electrolyte.y_initial()
    }

    /// Initial solid potential on the cathode,
    /// `f_A^An(y_An,0) - f_A^Cat(y_Cat,0)`; the anode is grounded.
    pub fn phi_s_cathode_initial(&self) -> Result<f64> {
        Ok(f_active(self.anode.y_initial, self.anode.enthalpy_gamma)?
            - f_active(self.cathode.y_initial, self.cathode.enthalpy_gamma)?)
    }

    /// Uniform initial electrolyte potential,
    /// `f_A^An(y_An,0) - f_E(y_E0)`.
    pub fn phi_e_initial(&self) -> Result<f64> {
        Ok(f_active(self.anode.y_initial, self.anode.enthalpy_gamma)?
            - f_electrolyte(self.y_e_initial(), self.electrolyte.solvation_number)?)
    }

    /// Offset added to the thermal-voltage-scaled dimensionless cell
    /// voltage in the dimensional report.
    pub fn voltage_offset(&self) -> f64 {
        self.cathode.half_cell_energy - self.anode.half_cell_energy
    }

    pub fn validate(&self) -> Result<()> {
        self.electrolyte.validate()?;
        self.anode.validate("anode")?;
        self.cathode.validate("cathode")?;
        self.geom_anode.validate("anode geometry")?;
        self.geom_separator.validate("separator geometry")?;
        self.geom_cathode.validate("cathode geometry")?;
        for (g, which) in [(&self.geom_anode, "anode"), (&self.geom_cathode, "cathode")] {
            if g.psi_s.is_none() || g.pi_s.is_none() {
                return Err(Error::Config(format!(
                    "{which} geometry must define a solid phase"
                )));
            }
            if g.theta <= 0.0 {
                return Err(Error::Config(format!(
                    "{which} geometry needs a positive interfacial area factor"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.bv_symmetry) {
            return Err(Error::Config(format!(
                "symmetry factor must lie in [0,1], got {}",
                self.bv_symmetry
            )));
        }
        let expected = self.derived_eta_w_cat();
        if (self.eta_w_cat - expected).abs() > 1e-12 * expected.abs().max(1.0) {
            return Err(Error::Config(format!(
                "eta_w_cat = {} inconsistent with geometry (expected {expected})",
                self.eta_w_cat
            )));
        }
        let frac_sum: f64 = [Region::Anode, Region::Separator, Region::Cathode]
            .iter()
            .map(|&r| self.width_fraction(r))
            .sum();
        if (frac_sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config("width fractions do not sum to one".into()));
        }
        Ok(())
    }

    /// Parse a `key = value` configuration text. Unknown keys are rejected;
    /// keys that are absent keep their default values. `#` starts a comment.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = CellConfig::default();
        let mut eta_w_explicit = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Config(format!("line {}: `{}` is not a number", lineno + 1, value))
            })?;
            if key == "eta_W_cat" {
                eta_w_explicit = true;
            }
            cfg.set_key(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        if !eta_w_explicit {
            cfg.eta_w_cat = cfg.derived_eta_w_cat();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_key(&mut self, key: &str, v: f64) -> Result<()> {
        let el = &mut self.electrolyte;
        match key {
            "n_ES_ref" => el.n_solvent_ref = v,
            "n_EC_ref" => el.n_salt_ref = v,
            "kappa_E" => el.solvation_number = v,
            "t_EC" => el.transference = v,
            "D_E" => el.diff_coeff = v,
            "Lambda_E" => el.molar_conductivity = v,
            "alpha_bv" => self.bv_symmetry = v,
            "E_min" => self.e_min = v,
            "eta_W_cat" => self.eta_w_cat = v,
            _ => {
                let (prefix, field) = key.split_once('.').ok_or_else(|| {
                    Error::Config(format!("unknown configuration key `{key}`"))
                })?;
                match prefix {
                    "anode" | "cathode" => {
                        let e = if prefix == "anode" {
                            &mut self.anode
                        } else {
                            &mut self.cathode
                        };
                        match field {
                            "n_lat" => e.lattice_density = v,
                            "y0" => e.y_initial = v,
                            "gamma" => e.enthalpy_gamma = v,
                            "sigma_S" => e.solid_conductivity = v,
                            "D_A_ref" => e.diff_ref = v,
                            "L" => e.exchange_rate = v,
                            "E_half" => e.half_cell_energy = v,
                            "r_A" => e.particle_radius = v,
                            "ell_nm" => e.unit_cell_width_nm = v,
                            _ => {
                                return Err(Error::Config(format!(
                                    "unknown configuration key `{key}`"
                                )))
                            }
                        }
                    }
                    "geom_anode" | "geom_separator" | "geom_cathode" => {
                        let g = match prefix {
                            "geom_anode" => &mut self.geom_anode,
                            "geom_separator" => &mut self.geom_separator,
                            _ => &mut self.geom_cathode,
                        };
                        match field {
                            "psi_E" => g.psi_e = v,
                            "pi_E" => g.pi_e = v,
                            "psi_S" => g.psi_s = Some(v),
                            "pi_S" => g.pi_s = Some(v),
                            "theta" => g.theta = v,
                            "W_um" => g.width_um = v,
                            _ => {
                                return Err(Error::Config(format!(
                                    "unknown configuration key `{key}`"
                                )))
                            }
                        }
                    }
                    _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
                }
            }
        }
        Ok(())
    }

    /// Canonical text rendering; hashing this gives the configuration hash
    /// stored in reduced-model artifacts.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let el = &self.electrolyte;
        for (k, v) in [
            ("n_ES_ref", el.n_solvent_ref),
            ("n_EC_ref", el.n_salt_ref),
            ("kappa_E", el.solvation_number),
            ("t_EC", el.transference),
            ("D_E", el.diff_coeff),
            ("Lambda_E", el.molar_conductivity),
            ("alpha_bv", self.bv_symmetry),
            ("E_min", self.e_min),
            ("eta_W_cat", self.eta_w_cat),
        ] {
            s.push_str(&format!("{k} = {v:.17e}\n"));
        }
        for (name, e) in [("anode", &self.anode), ("cathode", &self.cathode)] {
            for (k, v) in [
                ("n_lat", e.lattice_density),
                ("y0", e.y_initial),
                ("gamma", e.enthalpy_gamma),
                ("sigma_S", e.solid_conductivity),
                ("D_A_ref", e.diff_ref),
                ("L", e.exchange_rate),
                ("E_half", e.half_cell_energy),
                ("r_A", e.particle_radius),
                ("ell_nm", e.unit_cell_width_nm),
            ] {
                s.push_str(&format!("{name}.{k} = {v:.17e}\n"));
            }
        }
        for (name, g) in [
            ("geom_anode", &self.geom_anode),
            ("geom_separator", &self.geom_separator),
            ("geom_cathode", &self.geom_cathode),
        ] {
            for (k, v) in [
                ("psi_E", Some(g.psi_e)),
                ("pi_E", Some(g.pi_e)),
                ("psi_S", g.psi_s),
                ("pi_S", g.pi_s),
                ("theta", Some(g.theta)),
                ("W_um", Some(g.width_um)),
            ] {
                if let Some(v) = v {
                    s.push_str(&format!("{name}.{k} = {v:.17e}\n"));
                }
            }
        }
        s
    }

    /// FNV-1a hash of the canonical configuration text. Everything except
    /// the per-run [`ParameterPoint`] enters the hash.
    pub fn hash(&self) -> u64 {
        fnv1a(self.canonical_text().as_bytes())
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// The parameters varied between simulations: charge rate and the common
/// diffusion/reaction scale of both electrodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterPoint {
    /// C-rate of the discharge.
    pub c_rate: f64,
    /// Reference diffusion coefficient applied to both electrodes.
    pub d_scale: f64,
    /// Exchange rate applied to both electrodes.
    pub l_scale: f64,
}

impl ParameterPoint {
    pub fn new(c_rate: f64, d_scale: f64, l_scale: f64) -> Self {
        Self {
            c_rate,
            d_scale,
            l_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // c_rate = 0 is admitted as the open-circuit limit used by the
        // equilibrium checks; d and l must be strictly positive.
        if self.c_rate < 0.0 || self.d_scale <= 0.0 || self.l_scale <= 0.0 {
            return Err(Error::Config(format!("invalid parameter point {self:?}")));
        }
        Ok(())
    }
}

impl Default for ParameterPoint {
    /// The nominal operating point of the experiments: one C, with both
    /// parameter scales at one half.
    fn default() -> Self {
        Self::new(1.0, 0.5, 0.5)
    }
}
