//! Avoided-crossing parameters and mode-coupling tables.
//!
//! Near a crossing the pair frequencies follow the two-level form
//!   omega_{1,2}(q) = omega_av -/+ sqrt(Delta^2 + Gamma(q)^2),
//! with Gamma(q) = 2 sqrt(gamma) q. Delta and omega_av come from the solved
//! spectrum at q = 0; gamma is fitted against the solved gap on a few nodes
//! and cross-checked. Couplings between the pair modes are first and second
//! q-derivative overlaps, evaluated by central differences of the closed-form
//! weighted overlaps and cached on a uniform q grid for the integrators.

use crate::error::{Error, Result};
use crate::modes::{
    solve_pair, track_pair, weighted_overlap, CavityConfig, ModeSolution, SpectrumWindow,
};
use crate::SPEED_OF_LIGHT;
use num_complex::Complex64;

/// Two-level parametrisation of one avoided crossing.
#[derive(Debug, Clone, Copy)]
pub struct CrossingParams {
    /// Index n of the crossing: built on the resonance k0 = 2 pi n / L.
    pub pair_index: usize,
    /// Mean pair frequency at the crossing [rad/s].
    pub omega_av: f64,
    /// Half the minimum gap [rad/s].
    pub delta: f64,
    /// Curvature parameter gamma [rad^2 s^-2 m^-2]; Gamma = 2 sqrt(gamma) q.
    pub gamma: f64,
    /// Lower pair frequency at q = 0 (omega_av - delta).
    pub omega0: f64,
    /// Weak-membrane estimate 2 c^2 / (omega0 L alpha).
    pub analytic_delta: f64,
    /// Weak-membrane estimate omega0^2 / L^2.
    pub analytic_gamma: f64,
    /// Worst relative error of the fitted frequencies against the solved
    /// spectrum over the fitted q range.
    pub fit_residual: f64,
}

impl CrossingParams {
    /// Diabatic half-splitting Gamma(q) = 2 sqrt(gamma) q.
    pub fn gamma_of_q(&self, q: f64) -> f64 {
        2.0 * self.gamma.sqrt() * q
    }

    /// Half the pair gap, sqrt(Delta^2 + Gamma^2).
    pub fn half_gap(&self, q: f64) -> f64 {
        let g = self.gamma_of_q(q);
        (self.delta * self.delta + g * g).sqrt()
    }

    /// Adiabatic pair frequencies (lower, upper).
    pub fn frequencies(&self, q: f64) -> (f64, f64) {
        let h = self.half_gap(q);
        (self.omega_av - h, self.omega_av + h)
    }

    /// d omega / dq for (lower, upper).
    pub fn frequency_slopes(&self, q: f64) -> (f64, f64) {
        let h = self.half_gap(q);
        let s = 4.0 * self.gamma * q / h;
        (-s, s)
    }

    /// Diabatic (left/right) frequencies sqrt((omega_av -/+ Gamma)^2 + Delta^2).
    /// Positive q lengthens the left arm, so the left frequency carries the
    /// minus sign.
    pub fn diabatic_frequencies(&self, q: f64) -> (f64, f64) {
        let g = self.gamma_of_q(q);
        let d2 = self.delta * self.delta;
        let bl = ((self.omega_av - g) * (self.omega_av - g) + d2).sqrt();
        let br = ((self.omega_av + g) * (self.omega_av + g) + d2).sqrt();
        (bl, br)
    }
}

/// Fit the two-level parameters of crossing `pair_index`.
///
/// gamma comes from a least-squares fit of gap^2(q) = 4 Delta^2 + 16 gamma q^2
/// over five nodes reaching Gamma = 2 Delta. A residual above `tol` (relative
/// frequency error, e.g. 1e-6) rejects the crossing as not two-level.
pub fn fit_crossing_params(
    total_length: f64,
    alpha: f64,
    pair_index: usize,
    tol: f64,
) -> Result<CrossingParams> {
    let centre = CavityConfig::new(total_length, alpha, 0.0)?;
    let pair0 = solve_pair(&centre, pair_index)?;
    let (w1, w2) = (pair0[0].omega, pair0[1].omega);
    let omega_av = 0.5 * (w1 + w2);
    let delta = 0.5 * (w2 - w1);
    if delta <= 0.0 {
        return Err(Error::Solver("pair is not split at q = 0".into()));
    }
    let omega0 = w1;
    let analytic_delta =
        2.0 * SPEED_OF_LIGHT * SPEED_OF_LIGHT / (omega0 * total_length * alpha);
    let analytic_gamma = omega0 * omega0 / (total_length * total_length);

    // Fit nodes out to Gamma ~ 2 Delta: q_ref = Delta / sqrt(gamma_est).
    let q_ref = delta / analytic_gamma.sqrt();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut gaps = Vec::new();
    for j in 1..=5 {
        let q = q_ref * j as f64 / 5.0;
        let cfg = CavityConfig::new(total_length, alpha, q)?;
        let pair = solve_pair(&cfg, pair_index)?;
        let gap = pair[1].omega - pair[0].omega;
        let y = 0.25 * gap * gap - delta * delta;
        let x = 4.0 * q * q;
        num += x * y;
        den += x * x;
        gaps.push((q, pair[0].omega, pair[1].omega));
    }
    let gamma = num / den;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Solver("gap fit produced non-positive gamma".into()));
    }

    let mut params = CrossingParams {
        pair_index,
        omega_av,
        delta,
        gamma,
        omega0,
        analytic_delta,
        analytic_gamma,
        fit_residual: 0.0,
    };
    let mut residual = 0.0f64;
    for (q, s1, s2) in gaps {
        let (f1, f2) = params.frequencies(q);
        residual = residual.max(((f1 - s1) / s1).abs()).max(((f2 - s2) / s2).abs());
    }
    params.fit_residual = residual;
    if residual > tol {
        return Err(Error::Solver(format!(
            "two-level fit residual {residual:.3e} exceeds {tol:.1e}; \
             crossing {pair_index} is not two-level over the fitted range"
        )));
    }
    Ok(params)
}

/// Mixing angle between the adiabatic pair and the left/right basis.
/// Convention: cos is non-negative, sin is non-positive; at the crossing
/// (Gamma = 0) both have magnitude 1/sqrt(2).
#[derive(Debug, Clone, Copy)]
pub struct MixingAngle {
    pub sin: f64,
    pub cos: f64,
}

pub fn mixing_angle(gamma_cap: f64, delta: f64) -> MixingAngle {
    let h = (delta * delta + gamma_cap * gamma_cap).sqrt();
    let up = (0.5 + 0.5 * gamma_cap / h).max(0.0);
    let dn = (0.5 - 0.5 * gamma_cap / h).max(0.0);
    MixingAngle {
        sin: -dn.sqrt(),
        cos: up.sqrt(),
    }
}

/// Which way [`rotate_pair`] maps a two-component amplitude vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    /// (lower, upper) adiabatic -> (left, right) arm amplitudes.
    AdiabaticToDiabatic,
    /// (left, right) arm -> (lower, upper) adiabatic amplitudes.
    DiabaticToAdiabatic,
}

/// Rotate full pair amplitudes between the adiabatic and left/right bases.
/// The transform is the orthogonal change of basis at the given angle; it
/// applies to full amplitudes (phases attached), not bare envelopes.
pub fn rotate_pair(v: [Complex64; 2], angle: MixingAngle, dir: Rotation) -> [Complex64; 2] {
    let (s, c) = (angle.sin, angle.cos);
    match dir {
        Rotation::AdiabaticToDiabatic => [c * v[0] - s * v[1], s * v[0] + c * v[1]],
        Rotation::DiabaticToAdiabatic => [c * v[0] + s * v[1], -s * v[0] + c * v[1]],
    }
}

/// First and second displacement-derivative couplings of the pair at one q.
/// g[m][n] = <U_m | d U_n / dq>, q2[m][n] = <U_m | d^2 U_n / dq^2>, both
/// under the dielectric-weighted inner product. g is antisymmetric.
#[derive(Debug, Clone, Copy)]
pub struct CouplingMatrices {
    pub g: [[f64; 2]; 2],
    pub q2: [[f64; 2]; 2],
}

/// Central-difference couplings at displacement q with stencil step h.
///
/// The stencil is rejected when the antisymmetry defect of g exceeds a small
/// multiple of its magnitude (h too large for the overlap curvature, or so
/// small that root round-off dominates).
pub fn coupling_matrices(
    total_length: f64,
    alpha: f64,
    pair_index: usize,
    q: f64,
    h: f64,
) -> Result<CouplingMatrices> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput(format!("bad stencil step {h}")));
    }
    let centre_cfg = CavityConfig::new(total_length, alpha, q)?;
    let centre = solve_pair(&centre_cfg, pair_index)?;
    let win = SpectrumWindow {
        k_min: centre[0].wavenumber - 1.0,
        k_max: centre[1].wavenumber + 1.0,
        modes: centre.to_vec(),
    };
    let minus = track_pair(&win, &CavityConfig::new(total_length, alpha, q - h)?, pair_index)?;
    let plus = track_pair(&win, &CavityConfig::new(total_length, alpha, q + h)?, pair_index)?;
    if minus.is_ambiguous() || plus.is_ambiguous() {
        return Err(Error::Stencil(format!(
            "stencil step {h} too large: mode identity lost across it"
        )));
    }
    stencil_from_windows(&centre, &minus.window.modes, &plus.window.modes, &centre_cfg, h)
}

fn stencil_from_windows(
    centre: &[ModeSolution],
    minus: &[ModeSolution],
    plus: &[ModeSolution],
    measure: &CavityConfig,
    h: f64,
) -> Result<CouplingMatrices> {
    let mut g = [[0.0; 2]; 2];
    let mut q2 = [[0.0; 2]; 2];
    for m in 0..2 {
        for n in 0..2 {
            let o_plus = weighted_overlap(measure, &centre[m], &plus[n]);
            let o_minus = weighted_overlap(measure, &centre[m], &minus[n]);
            let o_centre = weighted_overlap(measure, &centre[m], &centre[n]);
            g[m][n] = (o_plus - o_minus) / (2.0 * h);
            q2[m][n] = (o_plus - 2.0 * o_centre + o_minus) / (h * h);
        }
    }
    let scale = g
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let defect = (g[0][1] + g[1][0]).abs().max(g[0][0].abs()).max(g[1][1].abs());
    if scale > 0.0 && defect > 1e-3 * scale {
        return Err(Error::Stencil(format!(
            "antisymmetry defect {defect:.3e} vs coupling scale {scale:.3e}: \
             stencil step {h} is outside its trust region"
        )));
    }
    // Enforce the exact structure downstream integrators rely on.
    let anti = 0.5 * (g[0][1] - g[1][0]);
    g[0][1] = anti;
    g[1][0] = -anti;
    g[0][0] = 0.0;
    g[1][1] = 0.0;
    Ok(CouplingMatrices { g, q2 })
}

/// Membrane-face H-field amplitudes of one mode, for radiation pressure.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModeFaces {
    /// a_left cos(k l1), just left of the membrane.
    pub left: f64,
    /// a_right cos(k l2), just right of the membrane.
    pub right: f64,
}

/// Everything the integrators and observables need at one displacement.
#[derive(Debug, Clone, Copy)]
pub struct TablePoint {
    pub g12: f64,
    pub q2: [[f64; 2]; 2],
    pub faces: [ModeFaces; 2],
    /// Exact mode angular frequencies (lower, upper) [rad/s].
    pub omega: [f64; 2],
    /// d omega / dq (lower, upper) [rad/s/m].
    pub domega_dq: [f64; 2],
}

/// Coupling and face data cached on a uniform q grid, with cubic
/// (Catmull-Rom) interpolation in between. Mode identity (sign and order) is
/// tracked continuously across the grid.
#[derive(Debug, Clone)]
pub struct SweepTables {
    pub q_start: f64,
    pub q_step: f64,
    g12: Vec<f64>,
    q2: Vec<[[f64; 2]; 2]>,
    faces: Vec<[ModeFaces; 2]>,
    omega: Vec<[f64; 2]>,
    domega: Vec<[f64; 2]>,
}

impl SweepTables {
    /// Build tables over [q_min, q_max] on `nodes` uniform points, with
    /// finite-difference step `fd_step` at each node.
    pub fn build(
        total_length: f64,
        alpha: f64,
        pair_index: usize,
        q_min: f64,
        q_max: f64,
        nodes: usize,
        fd_step: f64,
    ) -> Result<Self> {
        if nodes < 8 {
            return Err(Error::InvalidInput("need at least 8 table nodes".into()));
        }
        if !(q_max > q_min) {
            return Err(Error::InvalidInput(format!(
                "bad table range [{q_min}, {q_max}]"
            )));
        }
        let step = (q_max - q_min) / (nodes - 1) as f64;

        // Solve each node tracked from its left neighbour so signs never flip
        // mid-table (the first node anchors the orientation).
        let first_cfg = CavityConfig::new(total_length, alpha, q_min)?;
        let first = solve_pair(&first_cfg, pair_index)?;
        let mut prev = SpectrumWindow {
            k_min: first[0].wavenumber - 1.0,
            k_max: first[1].wavenumber + 1.0,
            modes: first.to_vec(),
        };

        let mut g12 = Vec::with_capacity(nodes);
        let mut q2 = Vec::with_capacity(nodes);
        let mut faces = Vec::with_capacity(nodes);
        let mut omega = Vec::with_capacity(nodes);
        let mut domega = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let q = q_min + i as f64 * step;
            let cfg = CavityConfig::new(total_length, alpha, q)?;
            let tracked = if i == 0 {
                crate::modes::TrackedSpectrum {
                    window: prev.clone(),
                    min_overlap: 1.0,
                }
            } else {
                track_pair(&prev, &cfg, pair_index)?
            };
            if tracked.min_overlap < 0.99 {
                return Err(Error::Tracking(format!(
                    "node spacing too coarse near q = {q}: overlap {:.4}",
                    tracked.min_overlap
                )));
            }
            let centre: Vec<ModeSolution> = tracked.window.modes.clone();
            let minus = track_pair(
                &tracked.window,
                &CavityConfig::new(total_length, alpha, q - fd_step)?,
                pair_index,
            )?;
            let plus = track_pair(
                &tracked.window,
                &CavityConfig::new(total_length, alpha, q + fd_step)?,
                pair_index,
            )?;
            let mats = stencil_from_windows(&centre, &minus.window.modes, &plus.window.modes, &cfg, fd_step)?;
            g12.push(mats.g[0][1]);
            q2.push(mats.q2);
            faces.push([
                ModeFaces {
                    left: centre[0].face_left(),
                    right: centre[0].face_right(),
                },
                ModeFaces {
                    left: centre[1].face_left(),
                    right: centre[1].face_right(),
                },
            ]);
            omega.push([
                SPEED_OF_LIGHT * centre[0].wavenumber,
                SPEED_OF_LIGHT * centre[1].wavenumber,
            ]);
            let slope = |m: usize| {
                SPEED_OF_LIGHT
                    * (plus.window.modes[m].wavenumber - minus.window.modes[m].wavenumber)
                    / (2.0 * fd_step)
            };
            domega.push([slope(0), slope(1)]);
            prev = tracked.window;
        }
        Ok(Self {
            q_start: q_min,
            q_step: step,
            g12,
            q2,
            faces,
            omega,
            domega,
        })
    }

    pub fn q_end(&self) -> f64 {
        self.q_start + self.q_step * (self.g12.len() - 1) as f64
    }

    fn locate(&self, q: f64) -> Result<(usize, f64)> {
        let n = self.g12.len();
        let t = (q - self.q_start) / self.q_step;
        if !((-1e-9..=(n - 1) as f64 + 1e-9).contains(&t)) {
            return Err(Error::InvalidInput(format!(
                "q = {q} outside tabulated range [{}, {}]",
                self.q_start,
                self.q_end()
            )));
        }
        let i = (t.floor() as isize).clamp(0, n as isize - 2) as usize;
        Ok((i, t - i as f64))
    }

    /// Interpolated table data at displacement q.
    pub fn sample(&self, q: f64) -> Result<TablePoint> {
        let (i, u) = self.locate(q)?;
        let idx = |j: isize| -> usize {
            (i as isize + j).clamp(0, self.g12.len() as isize - 1) as usize
        };
        let (i0, i1, i2, i3) = (idx(-1), idx(0), idx(1), idx(2));
        let cat = |p0: f64, p1: f64, p2: f64, p3: f64| -> f64 {
            // Catmull-Rom, clamped at the ends by node duplication.
            let u2 = u * u;
            let u3 = u2 * u;
            0.5 * ((2.0 * p1)
                + (-p0 + p2) * u
                + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2
                + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3)
        };
        let g12 = cat(self.g12[i0], self.g12[i1], self.g12[i2], self.g12[i3]);
        let mut q2 = [[0.0; 2]; 2];
        for m in 0..2 {
            for n in 0..2 {
                q2[m][n] = cat(
                    self.q2[i0][m][n],
                    self.q2[i1][m][n],
                    self.q2[i2][m][n],
                    self.q2[i3][m][n],
                );
            }
        }
        let mut faces = [ModeFaces::default(); 2];
        for m in 0..2 {
            faces[m] = ModeFaces {
                left: cat(
                    self.faces[i0][m].left,
                    self.faces[i1][m].left,
                    self.faces[i2][m].left,
                    self.faces[i3][m].left,
                ),
                right: cat(
                    self.faces[i0][m].right,
                    self.faces[i1][m].right,
                    self.faces[i2][m].right,
                    self.faces[i3][m].right,
                ),
            };
        }
        let mut omega = [0.0; 2];
        let mut domega_dq = [0.0; 2];
        for m in 0..2 {
            omega[m] = cat(
                self.omega[i0][m],
                self.omega[i1][m],
                self.omega[i2][m],
                self.omega[i3][m],
            );
            domega_dq[m] = cat(
                self.domega[i0][m],
                self.domega[i1][m],
                self.domega[i2][m],
                self.domega[i3][m],
            );
        }
        Ok(TablePoint {
            g12,
            q2,
            faces,
            omega,
            domega_dq,
        })
    }
}

/// Analytic two-level coupling g12(q) implied by the crossing parameters:
///
///   g12 = -g21 = sin(theta) d cos(theta)/dq - cos(theta) d sin(theta)/dq
///       = -(dGamma/dq) Delta / (2 (Delta^2 + Gamma^2))
///
/// with dGamma/dq = 2 sqrt(gamma) and the sign fixed by the mixing-angle
/// branch above. |g12| peaks at the crossing itself (Gamma = 0), value
/// sqrt(gamma)/Delta, and falls off Lorentzian in Gamma. Numeric stencils
/// follow this to a few percent out to |Gamma| ~ 3 Delta; beyond that the
/// pair modes pick up structure the two-level picture does not carry.
pub fn analytic_g12(params: &CrossingParams, q: f64) -> f64 {
    let g = params.gamma_of_q(q);
    let d = params.delta;
    let dgdq = 2.0 * params.gamma.sqrt();
    -dgdq * d / (2.0 * (g * g + d * d))
}
