//! Physical loop constants of the second-order CP-PLL.

use crate::error::ModelError;

/// Loop constants: PI filter (`r`, `c`), VCO (`k_vco`, `omega_free`), charge
/// pump (`i_p`), and reference period (`t_ref`).
///
/// All quantities are in SI units. `omega_free` and `k_vco` are in hertz and
/// hertz per volt: phases are counted in cycles, and trailing edges occur at
/// integer phase values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopParams {
    /// Loop filter resistance (ohm, > 0).
    pub r: f64,
    /// Loop filter capacitance (farad, > 0).
    pub c: f64,
    /// VCO gain (Hz/V, > 0).
    pub k_vco: f64,
    /// Charge pump current (ampere, > 0).
    pub i_p: f64,
    /// Reference period (second, > 0).
    pub t_ref: f64,
    /// VCO free-running frequency (Hz, >= 0).
    pub omega_free: f64,
}

impl LoopParams {
    /// Checks the positivity invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        let all_finite = self.r.is_finite()
            && self.c.is_finite()
            && self.k_vco.is_finite()
            && self.i_p.is_finite()
            && self.t_ref.is_finite()
            && self.omega_free.is_finite();
        if !all_finite {
            return Err(ModelError::InvalidParams("parameters must be finite"));
        }
        if self.r <= 0.0 || self.c <= 0.0 || self.k_vco <= 0.0 || self.i_p <= 0.0 {
            return Err(ModelError::InvalidParams(
                "R, C, K_vco, I_p must be strictly positive",
            ));
        }
        if self.t_ref <= 0.0 {
            return Err(ModelError::InvalidParams("T_ref must be strictly positive"));
        }
        if self.omega_free < 0.0 {
            return Err(ModelError::InvalidParams("omega_free must be non-negative"));
        }
        Ok(())
    }

    /// Quadratic phase coefficient `K_vco * I_p / (2C)`, strictly positive.
    pub fn quad_coeff(&self) -> f64 {
        self.k_vco * self.i_p / (2.0 * self.c)
    }

    /// Linear coefficient of the pulse quadratics:
    /// `omega_free + K_vco * v + K_vco * I_p * R`.
    pub fn lin_coeff(&self, v: f64) -> f64 {
        self.omega_free + self.k_vco * v + self.k_vco * self.i_p * self.r
    }

    /// VCO frequency while the PFD output is zero and the filter holds `v`.
    pub fn hold_rate(&self, v: f64) -> f64 {
        self.omega_free + self.k_vco * v
    }

    /// Capacitor charge/discharge rate `I_p / C` during a pulse.
    pub fn slew(&self) -> f64 {
        self.i_p / self.c
    }

    /// Hold voltage of the exact-lock stationary point,
    /// `(1/T_ref - omega_free) / K_vco`.
    pub fn lock_voltage(&self) -> f64 {
        (1.0 / self.t_ref - self.omega_free) / self.k_vco
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> LoopParams {
        LoopParams {
            r: 0.2,
            c: 0.01,
            k_vco: 20.0,
            i_p: 0.1,
            t_ref: 0.125,
            omega_free: 0.0,
        }
    }

    #[test]
    fn valid_params_pass() {
        assert!(ex1().validate().is_ok());
    }

    #[test]
    fn rejects_nonpositive() {
        for field in 0..5 {
            let mut p = ex1();
            match field {
                0 => p.r = 0.0,
                1 => p.c = -1.0,
                2 => p.k_vco = 0.0,
                3 => p.i_p = 0.0,
                _ => p.t_ref = 0.0,
            }
            assert!(p.validate().is_err(), "field {field}");
        }
        let mut p = ex1();
        p.omega_free = -1.0;
        assert!(p.validate().is_err());
        p.omega_free = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn derived_quantities() {
        let p = ex1();
        assert_eq!(p.quad_coeff(), 100.0);
        assert_eq!(p.hold_rate(1.0), 20.0);
        assert_eq!(p.lin_coeff(1.0), 20.4);
        assert_eq!(p.slew(), 10.0);
        assert_eq!(p.lock_voltage(), 0.4);
    }
}
