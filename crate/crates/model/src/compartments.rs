//! Compartment state, transition rates, and the reparameterizations used for fitting.
//!
//! The population is split into six compartments: susceptible (S), infected
//! but not yet infectious (E), early infectious (I_e), progressed infectious
//! (I_p), recovered (R), and deceased (D). All quantities are fractions of
//! the population at risk, so the compartments sum to one. Alongside the
//! prevalence state we track cumulative transition fractions between
//! compartments, which is what the surveillance likelihood consumes.

use crate::error::ModelError;
use serde::{Deserialize, Serialize};

/// Tolerance for the compartment-sum conservation invariant.
pub const CONSERVATION_TOL: f64 = 1e-8;

/// Population fractions occupying each compartment at one time point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompartmentState {
    pub s: f64,
    pub e: f64,
    pub i_e: f64,
    pub i_p: f64,
    pub r: f64,
    pub d: f64,
}

impl CompartmentState {
    pub fn sum(&self) -> f64 {
        self.s + self.e + self.i_e + self.i_p + self.r + self.d
    }

    /// Currently infectious fraction (early plus progressed stages).
    pub fn infectious(&self) -> f64 {
        self.i_e + self.i_p
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.s, self.e, self.i_e, self.i_p, self.r, self.d]
    }

    pub fn from_array(x: [f64; 6]) -> Self {
        Self {
            s: x[0],
            e: x[1],
            i_e: x[2],
            i_p: x[3],
            r: x[4],
            d: x[5],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("S", self.s),
            ("E", self.e),
            ("I_e", self.i_e),
            ("I_p", self.i_p),
            ("R", self.r),
            ("D", self.d),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidParam {
                    name: "compartment",
                    reason: format!("{name} = {v} must be finite and non-negative"),
                });
            }
        }
        let sum = self.sum();
        if (sum - 1.0).abs() > CONSERVATION_TOL {
            return Err(ModelError::InvalidParam {
                name: "compartment",
                reason: format!("compartments sum to {sum}, expected 1"),
            });
        }
        Ok(())
    }
}

/// Cumulative fractions of the population that have experienced each
/// compartment transition since the start of the modeling period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulativeTransitions {
    pub s_to_e: f64,
    pub e_to_ie: f64,
    pub ie_to_ip: f64,
    pub ip_to_r: f64,
    pub ip_to_d: f64,
}

impl CumulativeTransitions {
    pub const ZERO: Self = Self {
        s_to_e: 0.0,
        e_to_ie: 0.0,
        ie_to_ip: 0.0,
        ip_to_r: 0.0,
        ip_to_d: 0.0,
    };

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.s_to_e,
            self.e_to_ie,
            self.ie_to_ip,
            self.ip_to_r,
            self.ip_to_d,
        ]
    }

    pub fn from_array(x: [f64; 5]) -> Self {
        Self {
            s_to_e: x[0],
            e_to_ie: x[1],
            ie_to_ip: x[2],
            ip_to_r: x[3],
            ip_to_d: x[4],
        }
    }

    /// Later transitions can never have been experienced by more of the
    /// population than the transitions feeding them.
    pub fn validate_ordering(&self) -> Result<(), ModelError> {
        let slack = 1e-10;
        if self.e_to_ie > self.s_to_e + slack
            || self.ie_to_ip > self.e_to_ie + slack
            || self.ip_to_r + self.ip_to_d > self.ie_to_ip + slack
        {
            return Err(ModelError::InvalidParam {
                name: "cumulative_transitions",
                reason: format!("transition ordering violated: {self:?}"),
            });
        }
        Ok(())
    }
}

/// Transition-rate parameters, all per week except the dimensionless `delta`
/// (relative infectiousness of the progressed stage, fixed rather than
/// estimated) and `eta` (infection fatality probability).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    pub nu_e: f64,
    pub nu_p: f64,
    pub eta: f64,
}

impl RateParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            ("beta", self.beta > 0.0, "must be > 0"),
            ("delta", self.delta > 0.0 && self.delta <= 1.0, "must be in (0,1]"),
            ("gamma", self.gamma > 0.0, "must be > 0"),
            ("nu_e", self.nu_e > 0.0, "must be > 0"),
            ("nu_p", self.nu_p > 0.0, "must be > 0"),
            ("eta", self.eta > 0.0 && self.eta < 1.0, "must be in (0,1)"),
        ];
        for (name, ok, what) in checks {
            if !ok {
                return Err(ModelError::InvalidParam {
                    name: "rate",
                    reason: format!("{name} {what}"),
                });
            }
        }
        Ok(())
    }
}

/// Instantaneous population-level transition rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionRates {
    pub s_to_e: f64,
    pub e_to_ie: f64,
    pub ie_to_ip: f64,
    pub ip_to_r: f64,
    pub ip_to_d: f64,
}

/// Evaluate the five transition rates at a compartment state. Total on any
/// finite inputs; degenerate states (compartments exactly zero) are valid.
pub fn transition_rates(x: &CompartmentState, p: &RateParams) -> TransitionRates {
    TransitionRates {
        s_to_e: p.beta * (x.i_e + p.delta * x.i_p) * x.s,
        e_to_ie: p.gamma * x.e,
        ie_to_ip: p.nu_e * x.i_e,
        ip_to_r: (1.0 - p.eta) * p.nu_p * x.i_p,
        ip_to_d: p.eta * p.nu_p * x.i_p,
    }
}

/// Basic reproduction number implied by an infection rate: the dominant
/// eigenvalue of the next-generation matrix at the disease-free equilibrium,
/// `R0 = beta * (1/nu_e + delta/nu_p)`.
pub fn r0_from_beta(beta: f64, p: &RateParams) -> f64 {
    beta * (1.0 / p.nu_e + p.delta / p.nu_p)
}

/// Invert [`r0_from_beta`]: infection rate giving a prescribed basic
/// reproduction number under the stage durations in `p` (the `beta` field of
/// `p` is ignored). Rejects non-positive stage durations.
pub fn beta_from_r0(r0: f64, p: &RateParams) -> Result<f64, ModelError> {
    if !(p.nu_e > 0.0) || !(p.nu_p > 0.0) {
        return Err(ModelError::InvalidParam {
            name: "rate",
            reason: format!(
                "stage rates must be positive to map R0 to beta (nu_e = {}, nu_p = {})",
                p.nu_e, p.nu_p
            ),
        });
    }
    if !(r0 > 0.0) {
        return Err(ModelError::InvalidParam {
            name: "R0",
            reason: format!("must be > 0, got {r0}"),
        });
    }
    Ok(r0 / (1.0 / p.nu_e + p.delta / p.nu_p))
}

/// Initial-condition parameters: the susceptible fraction `s0`, the fraction
/// of initially infected individuals who are already infectious `i_tilde0`,
/// and the fraction of those infectious who are still early-stage
/// `ie_tilde0`. All in (0,1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub s0: f64,
    pub i_tilde0: f64,
    pub ie_tilde0: f64,
}

impl InitParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("s0", self.s0),
            ("i_tilde0", self.i_tilde0),
            ("ie_tilde0", self.ie_tilde0),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ModelError::InvalidParam {
                    name: "init",
                    reason: format!("{name} = {v} must lie strictly in (0,1)"),
                });
            }
        }
        Ok(())
    }
}

/// Expand initial-condition parameters into a full compartment state with
/// nobody yet recovered or deceased. The construction guarantees the
/// compartments sum to one exactly (up to rounding).
pub fn initial_state(init: &InitParams) -> Result<CompartmentState, ModelError> {
    init.validate()?;
    let infected = 1.0 - init.s0;
    let e = (1.0 - init.i_tilde0) * infected;
    let i_e = init.ie_tilde0 * init.i_tilde0 * infected;
    let i_p = (1.0 - init.ie_tilde0) * init.i_tilde0 * infected;
    Ok(CompartmentState {
        s: init.s0,
        e,
        i_e,
        i_p,
        r: 0.0,
        d: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates() -> RateParams {
        RateParams {
            beta: 2.0,
            delta: 0.8,
            gamma: 1.0,
            nu_e: 1.0,
            nu_p: 1.0,
            eta: 0.01,
        }
    }

    #[test]
    fn disease_free_state_has_zero_rates() {
        let x = CompartmentState {
            s: 1.0,
            e: 0.0,
            i_e: 0.0,
            i_p: 0.0,
            r: 0.0,
            d: 0.0,
        };
        let r = transition_rates(&x, &rates());
        assert_eq!(r.s_to_e, 0.0);
        assert_eq!(r.e_to_ie, 0.0);
        assert_eq!(r.ie_to_ip, 0.0);
        assert_eq!(r.ip_to_r, 0.0);
        assert_eq!(r.ip_to_d, 0.0);
    }

    #[test]
    fn infection_rate_hand_evaluation() {
        let x = CompartmentState {
            s: 0.8,
            e: 0.0,
            i_e: 0.1,
            i_p: 0.05,
            r: 0.05,
            d: 0.0,
        };
        let r = transition_rates(&x, &rates());
        // beta (I_e + delta I_p) S = 2 (0.1 + 0.8 * 0.05) * 0.8
        assert!((r.s_to_e - 0.224).abs() < 1e-15);
    }

    #[test]
    fn zero_fatality_limit() {
        let mut p = rates();
        p.eta = 0.0;
        let x = CompartmentState {
            s: 0.5,
            e: 0.1,
            i_e: 0.2,
            i_p: 0.2,
            r: 0.0,
            d: 0.0,
        };
        let r = transition_rates(&x, &p);
        assert_eq!(r.ip_to_d, 0.0);
        assert!((r.ip_to_r - p.nu_p * x.i_p).abs() < 1e-15);
    }

    #[test]
    fn beta_from_r0_table_values() {
        let p = RateParams {
            beta: f64::NAN, // ignored
            delta: 0.8,
            gamma: 1.0 / 0.97,
            nu_e: 1.0 / 0.96,
            nu_p: 1.0 / 0.96,
            eta: 0.0092,
        };
        let beta = beta_from_r0(0.92, &p).unwrap();
        assert!((beta - 0.92 / 1.728).abs() < 1e-15);
        assert!((beta - 0.53241).abs() < 1e-5);
    }

    #[test]
    fn beta_equals_r0_in_single_stage_reduction() {
        let p = RateParams {
            beta: 0.0,
            delta: 1e-300, // delta -> 0 limit; validate() not consulted here
            gamma: 1.0,
            nu_e: 1.0,
            nu_p: 1.0,
            eta: 0.5,
        };
        let beta = beta_from_r0(1.7, &p).unwrap();
        assert!((beta - 1.7).abs() < 1e-12);
    }

    #[test]
    fn beta_r0_round_trip() {
        let mut seed = 0x9e3779b9u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let p = RateParams {
                beta: 0.0,
                delta: 0.1 + 0.9 * next(),
                gamma: 0.2 + 3.0 * next(),
                nu_e: 0.2 + 3.0 * next(),
                nu_p: 0.2 + 3.0 * next(),
                eta: 0.01,
            };
            let r0 = 0.05 + 5.0 * next();
            let beta = beta_from_r0(r0, &p).unwrap();
            assert!((r0_from_beta(beta, &p) - r0).abs() < 1e-14);
        }
    }

    #[test]
    fn beta_from_r0_rejects_bad_durations() {
        let mut p = rates();
        p.nu_e = 0.0;
        assert!(beta_from_r0(1.0, &p).is_err());
        p.nu_e = 1.0;
        p.nu_p = -2.0;
        assert!(beta_from_r0(1.0, &p).is_err());
    }

    #[test]
    fn initial_state_simulation_defaults() {
        let init = InitParams {
            s0: 1.0 - 3.1e-3,
            i_tilde0: 0.69,
            ie_tilde0: 0.44,
        };
        let x = initial_state(&init).unwrap();
        assert!((x.e - 9.61e-4).abs() < 1e-12);
        assert!((x.i_e - 9.4116e-4).abs() < 1e-12);
        assert!((x.i_p - 1.19784e-3).abs() < 1e-12);
        assert_eq!(x.r, 0.0);
        assert_eq!(x.d, 0.0);
        assert!((x.sum() - 1.0).abs() < 1e-12);
        x.validate().unwrap();
    }

    #[test]
    fn initial_state_all_infected_infectious_limit() {
        let init = InitParams {
            s0: 0.99,
            i_tilde0: 1.0 - 1e-14,
            ie_tilde0: 0.5,
        };
        let x = initial_state(&init).unwrap();
        assert!(x.e < 1e-15);
    }

    #[test]
    fn initial_state_rejects_out_of_range() {
        for bad in [
            InitParams { s0: 0.0, i_tilde0: 0.5, ie_tilde0: 0.5 },
            InitParams { s0: 1.0, i_tilde0: 0.5, ie_tilde0: 0.5 },
            InitParams { s0: 0.5, i_tilde0: -0.1, ie_tilde0: 0.5 },
            InitParams { s0: 0.5, i_tilde0: 0.5, ie_tilde0: 1.5 },
        ] {
            assert!(initial_state(&bad).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn initial_state_sums_to_one() {
        let mut s = 0.3;
        while s < 1.0 {
            let init = InitParams { s0: s, i_tilde0: 0.37, ie_tilde0: 0.81 };
            let x = initial_state(&init).unwrap();
            assert!((x.sum() - 1.0).abs() < 1e-12);
            s += 0.05;
        }
    }
}
