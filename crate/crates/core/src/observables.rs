//! Energy, radiation pressure, work, and adiabaticity diagnostics.
//!
//! All per-area quantities assume a transverse mode area of 1 m^2, so
//! energy per area is eps0 (|c1|^2 + |c2|^2) and pressure follows from the
//! magnetic-field jump across the membrane.

use crate::couplings::{CrossingParams, ModeFaces, SweepTables};
use crate::dynamics::{Basis, SweepSeries};
use crate::error::{Error, Result};
use crate::{SPEED_OF_LIGHT, VACUUM_PERMITTIVITY};
use num_complex::Complex64;

/// Field energy per unit area, eps0 * sum |amplitude|^2 [J/m^2]. Works on
/// envelopes or full amplitudes; the phases drop out.
pub fn field_energy(amps: &[Complex64]) -> f64 {
    VACUUM_PERMITTIVITY * amps.iter().map(|a| a.norm_sqr()).sum::<f64>()
}

/// Radiation pressure on the membrane from a single monochromatic mode
/// [N/m^2]. Positive pushes the membrane towards +x.
pub fn pressure_single_mode(faces: &ModeFaces, amp: Complex64) -> f64 {
    -0.5 * VACUUM_PERMITTIVITY * amp.norm_sqr() * (faces.right * faces.right - faces.left * faces.left)
}

/// Radiation pressure from the interfering pair [N/m^2]. `full` are the full
/// (phase-carrying) adiabatic amplitudes; equivalently pass envelopes and the
/// phase difference theta_12 = theta_1 - theta_2 explicitly.
pub fn pressure_two_mode(faces: &[ModeFaces; 2], env: [Complex64; 2], theta_12: f64) -> f64 {
    let cross = 2.0
        * (env[0].conj() * env[1] * Complex64::from_polar(1.0, theta_12)).re
        * (faces[0].right * faces[1].right - faces[0].left * faces[1].left);
    let direct = env[0].norm_sqr() * (faces[0].right * faces[0].right - faces[0].left * faces[0].left)
        + env[1].norm_sqr() * (faces[1].right * faces[1].right - faces[1].left * faces[1].left);
    -0.5 * VACUUM_PERMITTIVITY * (direct + cross)
}

/// Cumulative work per unit area done by the membrane on the field,
/// W(t_j) = -v * int_{t_0}^{t_j} P dt, by trapezoid on a uniform time grid.
pub fn work_done(pressure: &[f64], t: &[f64], speed: f64) -> Result<Vec<f64>> {
    if pressure.len() != t.len() {
        return Err(Error::GridMismatch(format!(
            "pressure has {} points, time grid {}",
            pressure.len(),
            t.len()
        )));
    }
    if t.len() < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    for w in t.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::GridMismatch(
                "time grid must be strictly increasing".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    out.push(0.0);
    for j in 1..t.len() {
        acc += 0.5 * (t[j] - t[j - 1]) * (pressure[j - 1] + pressure[j]);
        out.push(-speed * acc);
    }
    Ok(out)
}

/// Landau-Zener jump probability exp(-pi Delta^2 / (2 v sqrt(gamma))).
pub fn landau_zener_probability(delta: f64, gamma: f64, speed: f64) -> f64 {
    (-std::f64::consts::PI * delta * delta / (2.0 * speed * gamma.sqrt())).exp()
}

/// Validity ratio of the first-order (Landau-Zener) reduction: the neglected
/// second-time-derivative scale over the kept first-order scale,
///
///   r = [gamma^2 dl^4 + Delta^4 + omega_av^4
///        + 6 omega_av^2 (Delta^2 + gamma dl^2) + 2 gamma Delta^2 dl^2]
///       / (gamma (2 v)^2),          dl = 2 q.
///
/// The reduction is safe when r >> 1; r ~ 1 flags speeds where dropping the
/// second derivative is no longer justified.
pub fn validity_ratio(crossing: &CrossingParams, q: f64, speed: f64) -> f64 {
    let dl = 2.0 * q;
    let dl2 = dl * dl;
    let d2 = crossing.delta * crossing.delta;
    let w2 = crossing.omega_av * crossing.omega_av;
    let g = crossing.gamma;
    let num = g * g * dl2 * dl2
        + d2 * d2
        + w2 * w2
        + 6.0 * w2 * (d2 + g * dl2)
        + 2.0 * g * d2 * dl2;
    num / (g * (2.0 * speed) * (2.0 * speed))
}

/// Relative size of the first relativistic correction dropped by the
/// instantaneous-mode treatment: (v/c) (n_r^2 - 1) with n_r the effective
/// refractive index the membrane presents.
pub fn relativistic_correction_ratio(speed: f64, refractive_index: f64) -> f64 {
    speed / SPEED_OF_LIGHT * (refractive_index * refractive_index - 1.0)
}

/// Per-sample observable row assembled from a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRecord {
    pub t: f64,
    pub tau: f64,
    pub q: f64,
    /// Full amplitudes, adiabatic basis (lower, upper).
    pub adiabatic: [Complex64; 2],
    /// Full amplitudes, diabatic basis (left, right).
    pub diabatic: [Complex64; 2],
    /// Mode populations in the basis the scheme integrates natively.
    pub populations: [f64; 2],
    /// eps0 sum |c|^2 [J/m^2].
    pub energy_per_area: f64,
    /// (E - E0) / E0.
    pub energy_change: f64,
    /// Radiation pressure with interference [N/m^2].
    pub pressure: f64,
    /// Cumulative work per area done by the membrane on the field [J/m^2].
    pub work_per_area: f64,
}

/// Observables along a sweep. Pressure needs the membrane-face amplitudes,
/// hence the coupling tables. Also returns the worst work-energy defect
/// max_j |DeltaE_j - W_j| / E0 as the self-consistency figure.
pub fn build_records(series: &SweepSeries, tables: &SweepTables) -> Result<(Vec<SweepRecord>, f64)> {
    if series.samples.is_empty() {
        return Err(Error::InvalidInput("empty sweep series".into()));
    }
    let adiabatic = series.to_basis(Basis::Adiabatic);
    let diabatic = series.to_basis(Basis::Diabatic);
    let n = series.samples.len();

    let speed = series.trajectory.speed;
    let mut t_grid = Vec::with_capacity(n);
    let mut pressure = Vec::with_capacity(n);
    let mut energy_grid = Vec::with_capacity(n);
    for s in adiabatic.samples.iter() {
        let tp = tables.sample(s.q)?;
        let theta_12 = s.theta[0] - s.theta[1];
        pressure.push(pressure_two_mode(&tp.faces, s.env, theta_12));
        t_grid.push(s.t);

        // Cycle-averaged total energy. Two corrections matter at the scale of
        // the work-energy budget near the crossing. First, the electric and
        // magnetic envelopes differ at the envelope-rate-over-carrier scale,
        // so the energy is the mean of the two. Second, the electric field of
        // a mode expansion with moving mode functions picks up a velocity
        // term, -dA/dt = sum_m (f_m U_m + v a_m dU_m/dq), whose cross piece
        // between the two modes carries weight v * g12 and peaks where the
        // coupling does.
        let i = Complex64::new(0.0, 1.0);
        let cross = (i
            * (s.env[0] * s.henv[1].conj() / tp.omega[1]
                * Complex64::from_polar(1.0, -theta_12)
                - s.env[1] * s.henv[0].conj() / tp.omega[0]
                    * Complex64::from_polar(1.0, theta_12)))
            .re;
        let mean = 0.5 * (field_energy(&s.env) + field_energy(&s.henv));
        energy_grid.push(mean - VACUUM_PERMITTIVITY * speed * tp.g12 * cross);
    }
    let work = work_done(&pressure, &t_grid, speed)?;

    let e0 = energy_grid[0];
    if e0 <= 0.0 {
        return Err(Error::InvalidInput("initial field energy is zero".into()));
    }
    let mut records = Vec::with_capacity(n);
    let mut defect = 0.0f64;
    for i in 0..n {
        let s = &series.samples[i];
        let energy = energy_grid[i];
        let de = (energy - e0) / e0;
        let w_rel = work[i] / e0;
        defect = defect.max((de - w_rel).abs());
        records.push(SweepRecord {
            t: s.t,
            tau: series.trajectory.tau(s.t),
            q: s.q,
            adiabatic: adiabatic.full_amplitudes(i),
            diabatic: diabatic.full_amplitudes(i),
            populations: series.populations(i),
            energy_per_area: energy,
            energy_change: de,
            pressure: pressure[i],
            work_per_area: work[i],
        });
    }
    Ok((records, defect))
}
