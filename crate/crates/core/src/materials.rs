//! Material functions of the continuum model: thermodynamic factors,
//! chemical-potential functions, and the intercalation rate factor.
//!
//! All functions are dimensionless. The chemical-potential function of the
//! active phase is implemented as `f_a(y) = ln(y/(1-y)) + gamma*(2y-1)` so
//! that `y * f_a'(y)` equals the thermodynamic factor
//! `Gamma_a = 1 + y/(1-y) + 2*gamma*y` used in the transport equations.
//! The electrolyte counterpart `f_e(y) = ln(y) - kappa*ln(1-2y)` is the
//! antiderivative of `Gamma_e / y` with integration constant zero; only
//! differences of `f_e` enter the surface affinity, so the constant cancels.

use crate::error::{Error, Result};

/// Thermodynamic factor of the electrolyte, `1 + 2*kappa*y/(1-2y)`.
///
/// Defined for `0 <= y < 0.5`.
pub fn gamma_electrolyte(y_e: f64, kappa: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&y_e) {
        return Err(Error::Domain {
            context: "gamma_electrolyte",
            value: y_e,
            domain: "[0, 0.5)",
        });
    }
    Ok(1.0 + 2.0 * kappa * y_e / (1.0 - 2.0 * y_e))
}

/// Thermodynamic factor of the active phase, `1 + y/(1-y) + 2*gamma*y`.
///
/// Defined for `0 < y < 1`.
pub fn gamma_active(y_a: f64, gamma: f64) -> Result<f64> {
    if !(y_a > 0.0 && y_a < 1.0) {
        return Err(Error::Domain {
            context: "gamma_active",
            value: y_a,
            domain: "(0, 1)",
        });
    }
    Ok(1.0 + y_a / (1.0 - y_a) + 2.0 * gamma * y_a)
}

/// Chemical-potential function of intercalated lithium,
/// `ln(y/(1-y)) + gamma*(2y-1)`.
pub fn f_active(y_a: f64, gamma: f64) -> Result<f64> {
    if !(y_a > 0.0 && y_a < 1.0) {
        return Err(Error::Domain {
            context: "f_active",
            value: y_a,
            domain: "(0, 1)",
        });
    }
    Ok((y_a / (1.0 - y_a)).ln() + gamma * (2.0 * y_a - 1.0))
}

/// Derivative of [`f_active`] with respect to `y`:
/// `1/(y(1-y)) + 2*gamma`.
pub fn f_active_deriv(y_a: f64, gamma: f64) -> Result<f64> {
    if !(y_a > 0.0 && y_a < 1.0) {
        return Err(Error::Domain {
            context: "f_active_deriv",
            value: y_a,
            domain: "(0, 1)",
        });
    }
    Ok(1.0 / (y_a * (1.0 - y_a)) + 2.0 * gamma)
}

/// Chemical-potential function of the electrolyte,
/// `ln(y) - kappa*ln(1-2y)`.
pub fn f_electrolyte(y_e: f64, kappa: f64) -> Result<f64> {
    if !(y_e > 0.0 && y_e < 0.5) {
        return Err(Error::Domain {
            context: "f_electrolyte",
            value: y_e,
            domain: "(0, 0.5)",
        });
    }
    Ok(y_e.ln() - kappa * (1.0 - 2.0 * y_e).ln())
}

/// Derivative of [`f_electrolyte`] with respect to `y`:
/// `1/y + 2*kappa/(1-2y)`.
pub fn f_electrolyte_deriv(y_e: f64, kappa: f64) -> Result<f64> {
    if !(y_e > 0.0 && y_e < 0.5) {
        return Err(Error::Domain {
            context: "f_electrolyte_deriv",
            value: y_e,
            domain: "(0, 0.5)",
        });
    }
    Ok(1.0 / y_e + 2.0 * kappa / (1.0 - 2.0 * y_e))
}

/// Rate factor of the intercalation reaction,
/// `g(z) = exp(alpha*z) - exp(-(1-alpha)*z)`.
///
/// `g(0) = 0`, `g` is strictly increasing, and for `alpha = 0.5` it is an
/// odd function. Overflow is the caller's responsibility; the assembly
/// bounds the affinity before calling.
pub fn butler_volmer_g(z: f64, alpha: f64) -> f64 {
    (alpha * z).exp() - (-(1.0 - alpha) * z).exp()
}

/// Derivative of [`butler_volmer_g`] with respect to `z`:
/// `alpha*exp(alpha*z) + (1-alpha)*exp(-(1-alpha)*z)`. Strictly positive.
pub fn butler_volmer_g_deriv(z: f64, alpha: f64) -> f64 {
    alpha * (alpha * z).exp() + (1.0 - alpha) * (-(1.0 - alpha) * z).exp()
}

/// Surface affinity of the intercalation reaction in the hat-potential
/// convention: `phi_s - phi_e + f_a(y_surf) - f_e(y_e)`.
///
/// Half-cell reference energies are reporting offsets only and do not enter
/// here; with the standard initial state the affinity is exactly zero in
/// both electrodes.
pub fn surface_affinity(
    phi_s: f64,
    phi_e: f64,
    y_a_surf: f64,
    y_e: f64,
    gamma: f64,
    kappa: f64,
) -> Result<f64> {
    Ok(phi_s - phi_e + f_active(y_a_surf, gamma)? - f_electrolyte(y_e, kappa)?)
}

/// Variable transform of the micro concentration: `g = ln(y/(1-y))`.
pub fn encode_y(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

/// Inverse transform, the logistic function. Evaluated in a form that is
/// stable for large |g|.
pub fn decode_g(g: f64) -> f64 {
    if g >= 0.0 {
        1.0 / (1.0 + (-g).exp())
    } else {
        let e = g.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic transform, `dy/dg = y(1-y)`.
pub fn decode_g_deriv(g: f64) -> f64 {
    let y = decode_g(g);
    y * (1.0 - y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn gamma_electrolyte_values() {
        assert_eq!(gamma_electrolyte(0.0, 4.0).unwrap(), 1.0);
        assert_abs_diff_eq!(gamma_electrolyte(0.1, 4.0).unwrap(), 2.0, epsilon = 1e-14);
        // value at the standard initial mole fraction
        assert_abs_diff_eq!(
            gamma_electrolyte(0.25575, 4.0).unwrap(),
            5.1886,
            epsilon = 1e-3
        );
        assert!(gamma_electrolyte(0.5, 4.0).is_err());
        assert!(gamma_electrolyte(0.7, 4.0).is_err());
    }

    #[test]
    fn gamma_active_values() {
        assert_abs_diff_eq!(gamma_active(0.5, 0.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gamma_active(0.5, 1.0).unwrap(), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            gamma_active(0.01, 1.0).unwrap(),
            1.0301010101010102,
            epsilon = 1e-12
        );
        assert!(gamma_active(0.0, 1.0).is_err());
        assert!(gamma_active(1.0, 1.0).is_err());
    }

    #[test]
    fn f_active_values() {
        for gamma in [-1.0, 0.0, 0.3, 2.0] {
            assert_abs_diff_eq!(f_active(0.5, gamma).unwrap(), 0.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(
            f_active(0.99, 1.0).unwrap(),
            99.0f64.ln() + 0.98,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            f_active(0.2, 1.0).unwrap(),
            0.25f64.ln() - 0.6,
            epsilon = 1e-14
        );
        assert!(f_active(0.0, 1.0).is_err());
    }

    #[test]
    fn f_electrolyte_values() {
        assert_abs_diff_eq!(
            f_electrolyte(0.25575, 4.0).unwrap(),
            0.25575f64.ln() - 4.0 * 0.4885f64.ln(),
            epsilon = 1e-14
        );
        // logarithmic singularity toward y -> 0: monotone decrease to -inf
        let mut prev = f_electrolyte(1e-2, 4.0).unwrap();
        for k in 3..12 {
            let v = f_electrolyte(10f64.powi(-k), 4.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(f_electrolyte(0.0, 4.0).is_err());
        assert!(f_electrolyte(0.5, 4.0).is_err());
    }

    /// y * d f/dy must reproduce the thermodynamic factors. Central finite
    /// differences at random points, relative error < 1e-6.
    #[test]
    fn thermodynamic_factor_consistency() {
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            // xorshift64*; test-only generator
            rng_state ^= rng_state >> 12;
            rng_state ^= rng_state << 25;
            rng_state ^= rng_state >> 27;
            (rng_state.wrapping_mul(0x2545f4914f6cdd1d) >> 11) as f64 / (1u64 << 53) as f64
        };
        let h = 1e-6;
        for _ in 0..50 {
            let y = 0.02 + 0.96 * next();
            let gamma = -1.0 + 3.0 * next();
            let fd = (f_active(y + h, gamma).unwrap() - f_active(y - h, gamma).unwrap()) / (2.0 * h);
            assert_relative_eq!(y * fd, gamma_active(y, gamma).unwrap(), max_relative = 1e-6);

            let ye = 0.01 + 0.47 * next();
            let kappa = 1.0 + 5.0 * next();
            let fd =
                (f_electrolyte(ye + h, kappa).unwrap() - f_electrolyte(ye - h, kappa).unwrap())
                    / (2.0 * h);
            assert_relative_eq!(
                ye * fd,
                gamma_electrolyte(ye, kappa).unwrap(),
                max_relative = 1e-6
            );
        }
        // the spec'd spot check at y=0.1, kappa=4
        let fd = (f_electrolyte(0.1 + h, 4.0).unwrap() - f_electrolyte(0.1 - h, 4.0).unwrap())
            / (2.0 * h);
        assert_relative_eq!(0.1 * fd, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn gamma_lower_bounds() {
        for k in 0..40 {
            let y = 0.012 * k as f64 + 0.005;
            let gamma = 0.8;
            assert!(gamma_active(y, gamma).unwrap() >= 1.0 + 2.0 * gamma * y);
            if y < 0.5 {
                assert!(gamma_electrolyte(y, 3.0).unwrap() >= 1.0);
            }
        }
    }

    #[test]
    fn butler_volmer_properties() {
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            assert_eq!(butler_volmer_g(0.0, alpha), 0.0);
        }
        assert_abs_diff_eq!(
            butler_volmer_g(1.0, 0.5),
            0.5f64.exp() - (-0.5f64).exp(),
            epsilon = 1e-15
        );
        // oddness at alpha = 0.5 is exact in floating point
        for z in [0.25, 1.0, 2.0, 7.5] {
            assert_eq!(butler_volmer_g(-z, 0.5), -butler_volmer_g(z, 0.5));
        }
        // monotone: derivative positive on a z grid
        for k in -20..=20 {
            let z = k as f64 * 0.5;
            assert!(butler_volmer_g_deriv(z, 0.5) > 0.0);
            let h = 1e-6;
            let fd = (butler_volmer_g(z + h, 0.37) - butler_volmer_g(z - h, 0.37)) / (2.0 * h);
            assert_relative_eq!(fd, butler_volmer_g_deriv(z, 0.37), max_relative = 1e-8);
        }
    }

    #[test]
    fn affinity_additive_in_phi_s() {
        let base = surface_affinity(0.0, 0.1, 0.3, 0.2, 1.0, 4.0).unwrap();
        let mut prev = base;
        for k in 1..5 {
            let v = surface_affinity(0.2 * k as f64, 0.1, 0.3, 0.2, 1.0, 4.0).unwrap();
            assert!(v > prev);
            assert_abs_diff_eq!(v - base, 0.2 * k as f64, epsilon = 1e-14);
            prev = v;
        }
    }

    #[test]
    fn logistic_round_trip() {
        for &y in &[1e-12, 1e-8, 0.01, 0.25, 0.5, 0.75, 0.99, 1.0 - 1e-9] {
            assert_relative_eq!(decode_g(encode_y(y)), y, max_relative = 1e-12);
        }
        assert_abs_diff_eq!(decode_g_deriv(0.0), 0.25, epsilon = 1e-15);
    }
}
