//! Scalar coefficients of the two-mode quantum Hamiltonian near a crossing.
//!
//! Evaluation only: no operator dynamics. The velocity-proportional part of
//! the Hamiltonian splits into intermode transfer, two-mode squeezing and
//! single-mode squeezing; each coefficient below carries units of 1/m and is
//! multiplied by the membrane velocity (and -i hbar / 2) downstream. The
//! squeezing terms are smaller than the transfer terms by roughly
//! sqrt(Delta^2 + Gamma^2) / omega_av, which is also the small parameter of
//! the expansions used here; a flag trips when it stops being small.

use crate::couplings::{analytic_g12, CrossingParams};
use crate::error::{Error, Result};

/// Coefficient set at one membrane displacement.
#[derive(Debug, Clone, Copy)]
pub struct QuantumCoefficients {
    pub q: f64,
    /// Gamma(q) [rad/s].
    pub gamma_cap: f64,
    /// Mode-overlap couplings [1/m]; diagonal entries vanish identically.
    pub g11: f64,
    pub g22: f64,
    pub g12: f64,
    pub g21: f64,
    /// Logarithmic frequency slopes (1/omega_m) d omega_m / dq [1/m].
    pub dln_omega1_dq: f64,
    pub dln_omega2_dq: f64,
    /// sqrt(omega_2 / omega_1), kept to first order in the gap.
    pub ratio_sqrt: f64,
    /// Adiabatic basis: single-mode squeeze, transfer, two-mode squeeze [1/m].
    pub adiabatic_single_squeeze: f64,
    pub adiabatic_transfer: f64,
    pub adiabatic_two_mode_squeeze: f64,
    /// Diabatic basis: transfer, two-mode squeeze, single-mode squeeze [1/m].
    pub diabatic_transfer: f64,
    pub diabatic_two_mode_squeeze: f64,
    pub diabatic_single_squeeze: f64,
    /// True when sqrt(Delta^2 + Gamma^2)/omega_av > 0.01 and the first-order
    /// expansions behind the squeeze coefficients are suspect.
    pub expansion_suspect: bool,
}

/// Two-level couplings (g11, g22, g12, g21) at displacement q [1/m].
pub fn analytic_g(crossing: &CrossingParams, q: f64) -> (f64, f64, f64, f64) {
    let g12 = analytic_g12(crossing, q);
    (0.0, 0.0, g12, -g12)
}

/// Evaluate every Hamiltonian coefficient at displacement q.
pub fn hamiltonian_coefficients(crossing: &CrossingParams, q: f64) -> Result<QuantumCoefficients> {
    if !q.is_finite() {
        return Err(Error::InvalidInput(format!("bad displacement {q}")));
    }
    let gamma_cap = crossing.gamma_of_q(q);
    let half_gap = crossing.half_gap(q);
    let (w1, w2) = crossing.frequencies(q);
    let (s1, s2) = crossing.frequency_slopes(q);
    let (_, _, g12, g21) = analytic_g(crossing, q);

    let dln1 = s1 / w1;
    let dln2 = s2 / w2;
    let ratio_sqrt = 1.0 + half_gap / crossing.omega_av;

    // Adiabatic basis: prefactor of the single-mode squeeze block is
    // (1/(2 omega_1)) d omega_1/dq; transfer is 2 g21; the two-mode squeeze
    // picks up the first expansion correction of sqrt(omega2/omega1).
    let half_dln1 = 0.5 * dln1;
    let adiabatic_single_squeeze = half_dln1;
    let adiabatic_transfer = 2.0 * g21;
    let adiabatic_two_mode_squeeze = 2.0 * g21 * half_gap / crossing.omega_av;

    // Diabatic basis.
    let diabatic_transfer = 2.0 * g21;
    let diabatic_two_mode_squeeze =
        half_dln1 * 2.0 * crossing.delta / half_gap - 2.0 * g21 * gamma_cap / crossing.omega_av;
    let diabatic_single_squeeze =
        half_dln1 * gamma_cap / half_gap + g21 * crossing.delta / crossing.omega_av;

    Ok(QuantumCoefficients {
        q,
        gamma_cap,
        g11: 0.0,
        g22: 0.0,
        g12,
        g21,
        dln_omega1_dq: dln1,
        dln_omega2_dq: dln2,
        ratio_sqrt,
        adiabatic_single_squeeze,
        adiabatic_transfer,
        adiabatic_two_mode_squeeze,
        diabatic_transfer,
        diabatic_two_mode_squeeze,
        diabatic_single_squeeze,
        expansion_suspect: half_gap / crossing.omega_av > 0.01,
    })
}
