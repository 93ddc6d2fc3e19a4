//! Region-wise coefficient functions of the homogenized system.
//!
//! Each hatted coefficient bundles the porous-media factors of its region
//! with the state-dependent material functions:
//!
//! * `D_hat_A = D_ref * (1 - y_A) * Gamma_A(y_A) * nu^2`  (electrodes)
//! * `D_hat_E = psi_E * pi_E * D_E * n_tot(y_E) * Gamma_E(y_E)`
//! * `S_hat_E = psi_E * pi_E * S_E * n_tot(y_E) * Gamma_E(y_E)`
//! * `sigma_hat_E = psi_E * pi_E * Lambda_E * n_tot(y_E) * y_E`
//! * `sigma_hat_S = psi_S * pi_S * sigma_S`  (electrodes)
//!
//! with `n_tot(y) = (n_ES/n_ref) / (1 + 2(kappa-1)y)` and the mass-term
//! weight `c_E(y) = (n_ES/n_ref) / (1 + 2(kappa-1)y)^2`. Derivative
//! variants feed the analytic Jacobian.

use crate::error::{Error, Result};
use crate::materials::gamma_electrolyte;
use crate::params::{CellConfig, Electrode, ParameterPoint, Region};

/// A value together with its derivative with respect to the state variable
/// the coefficient depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValDer {
    pub val: f64,
    pub der: f64,
}

/// Precomputed constants of one region for one parameter point. Cheap to
/// build; the assembly constructs one per region per residual evaluation.
#[derive(Debug, Clone, Copy)]
pub struct RegionCoeffs {
    pub region: Region,
    /// psi_E * pi_E * D_E
    pe_d: f64,
    /// psi_E * pi_E * S_E
    pe_s: f64,
    /// psi_E * pi_E * Lambda_E
    pe_lambda: f64,
    /// psi_S * pi_S * sigma_S, electrodes only
    sigma_hat_s: Option<f64>,
    /// D_ref (with the run's diffusion scale applied), electrodes only
    d_ref: Option<f64>,
    /// exchange rate (with the run's scale applied), electrodes only
    pub l_hat: Option<f64>,
    /// enthalpy parameter, electrodes only
    gamma_a: Option<f64>,
    /// n_ES / n_ref
    ratio: f64,
    /// 2 * (kappa - 1)
    two_km1: f64,
    kappa: f64,
    /// psi_E of the region
    pub psi_e: f64,
    /// interfacial area factor
    pub theta: f64,
    /// lattice-to-reference concentration ratio, electrodes only
    pub eta_n: Option<f64>,
    /// particle radius, electrodes only
    pub r_a: Option<f64>,
}

impl RegionCoeffs {
    /// Build the coefficient set of `region` for configuration `config`
    /// and run parameters `mu`. The run parameters overwrite the reference
    /// diffusion coefficient and exchange rate of both electrodes.
    pub fn new(config: &CellConfig, mu: &ParameterPoint, region: Region) -> Self {
        let g = config.geometry(region);
        let el = &config.electrolyte;
        let pe = g.psi_e * g.pi_e;
        let electrode = match region {
            Region::Anode => Some(Electrode::Anode),
            Region::Cathode => Some(Electrode::Cathode),
            Region::Separator => None,
        };
        let (sigma_hat_s, d_ref, l_hat, gamma_a, eta_n, r_a) = match electrode {
            Some(e) => {
                let ep = config.electrode(e);
                (
                    Some(g.psi_s.unwrap_or(0.0) * g.pi_s.unwrap_or(0.0) * ep.solid_conductivity),
                    Some(mu.d_scale),
                    Some(mu.l_scale),
                    Some(ep.enthalpy_gamma),
                    Some(config.eta_n(e)),
                    Some(ep.particle_radius),
                )
            }
            None => (None, None, None, None, None, None),
        };
        Self {
            region,
            pe_d: pe * el.diff_coeff,
            pe_s: pe * el.s_e(),
            pe_lambda: pe * el.molar_conductivity,
            sigma_hat_s,
            d_ref,
            l_hat,
            gamma_a,
            ratio: el.concentration_ratio(),
            two_km1: 2.0 * (el.solvation_number - 1.0),
            kappa: el.solvation_number,
            psi_e: g.psi_e,
            theta: g.theta,
            eta_n,
            r_a,
        }
    }

    fn check_y_e(&self, y_e: f64, context: &'static str) -> Result<()> {
        if !(y_e > 0.0 && y_e < 0.5) {
            return Err(Error::Domain {
                context,
                value: y_e,
                domain: "(0, 0.5)",
            });
        }
        Ok(())
    }

    /// Dimensionless total concentration `n_tot(y)` and derivative.
    pub fn n_tot(&self, y_e: f64) -> Result<ValDer> {
        self.check_y_e(y_e, "n_tot")?;
        let den = 1.0 + self.two_km1 * y_e;
        let val = self.ratio / den;
        Ok(ValDer {
            val,
            der: -self.ratio * self.two_km1 / (den * den),
        })
    }

    /// Mass-term weight `c_E(y)` of the electrolyte balance and derivative.
    pub fn c_e(&self, y_e: f64) -> Result<ValDer> {
        if !(0.0..0.5).contains(&y_e) {
            return Err(Error::Domain {
                context: "c_e",
                value: y_e,
                domain: "[0, 0.5)",
            });
        }
        let den = 1.0 + self.two_km1 * y_e;
        Ok(ValDer {
            val: self.ratio / (den * den),
            der: -2.0 * self.ratio * self.two_km1 / (den * den * den),
        })
    }

    fn n_tot_gamma(&self, y_e: f64, context: &'static str) -> Result<ValDer> {
        self.check_y_e(y_e, context)?;
        let n = self.n_tot(y_e)?;
        let g = gamma_electrolyte(y_e, self.kappa)?;
        let one_m2y = 1.0 - 2.0 * y_e;
        let g_der = 2.0 * self.kappa / (one_m2y * one_m2y);
        Ok(ValDer {
            val: n.val * g,
            der: n.der * g + n.val * g_der,
        })
    }

    /// Electrolyte diffusion coefficient `D_hat_E(y)` and derivative.
    pub fn d_hat_e(&self, y_e: f64) -> Result<ValDer> {
        let ng = self.n_tot_gamma(y_e, "d_hat_e")?;
        Ok(ValDer {
            val: self.pe_d * ng.val,
            der: self.pe_d * ng.der,
        })
    }

    /// Electrolyte cross coefficient `S_hat_E(y)` and derivative.
    pub fn s_hat_e(&self, y_e: f64) -> Result<ValDer> {
        let ng = self.n_tot_gamma(y_e, "s_hat_e")?;
        Ok(ValDer {
            val: self.pe_s * ng.val,
            der: self.pe_s * ng.der,
        })
    }

    /// Electrolyte conductivity `sigma_hat_E(y)` and derivative.
    pub fn sigma_hat_e(&self, y_e: f64) -> Result<ValDer> {
        if !(0.0..0.5).contains(&y_e) {
            return Err(Error::Domain {
                context: "sigma_hat_e",
                value: y_e,
                domain: "[0, 0.5)",
            });
        }
        let den = 1.0 + self.two_km1 * y_e;
        let n = self.ratio / den;
        let n_der = -self.ratio * self.two_km1 / (den * den);
        Ok(ValDer {
            val: self.pe_lambda * n * y_e,
            der: self.pe_lambda * (n_der * y_e + n),
        })
    }

    /// Solid conductivity `sigma_hat_S`; constant in the state. Requesting
    /// it in the separator is an error.
    pub fn sigma_hat_s(&self) -> Result<f64> {
        self.sigma_hat_s.ok_or(Error::NoSuchCoefficient {
            name: "sigma_hat_S",
            region: self.region.name(),
        })
    }

    /// Micro diffusion coefficient `D_hat_A(y, nu)` and derivative with
    /// respect to `y`. Requesting it in the separator is an error.
    pub fn d_hat_a(&self, y_a: f64, nu: f64) -> Result<ValDer> {
        let d_ref = self.d_ref.ok_or(Error::NoSuchCoefficient {
            name: "D_hat_A",
            region: self.region.name(),
        })?;
        let gamma = self.gamma_a.expect("electrode regions carry gamma");
        if !(0.0..=1.0).contains(&y_a) {
            return Err(Error::Domain {
                context: "d_hat_a",
                value: y_a,
                domain: "[0, 1]",
            });
        }
        // (1 - y) * Gamma_A(y) = 1 + 2*gamma*y*(1-y); finite up to the
        // crowding limit y = 1 where the coefficient vanishes into the
        // pure ideal part.
        let crowd = 1.0 + 2.0 * gamma * y_a * (1.0 - y_a);
        let crowd_der = 2.0 * gamma * (1.0 - 2.0 * y_a);
        let nu2 = nu * nu;
        Ok(ValDer {
            val: d_ref * crowd * nu2,
            der: d_ref * crowd_der * nu2,
        })
    }
}
