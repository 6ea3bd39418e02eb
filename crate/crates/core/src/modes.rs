//! Static eigenproblem of the double cavity.
//!
//! Geometry: perfect mirrors at x = -l1 and x = +l2, a delta-function
//! dielectric membrane of strength `alpha` (units of length) at x = 0. The
//! membrane displacement from the cavity centre is q, so l1 = (L + 2q)/2 and
//! l2 = (L - 2q)/2. Mode wavenumbers are roots of
//!
//!   f(k) = alpha k [cos(2 k q) - cos(k L)] - 2 sin(k L)
//!
//! and the mode shapes are sine arcs on each side of the membrane, joined
//! continuously at x = 0 and normalised against the dielectric-weighted
//! inner product (1/eps0) \int eps |U|^2 dx = 1.

use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

/// Cavity geometry plus membrane strength. Lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityConfig {
    /// Total mirror-to-mirror length L.
    pub total_length: f64,
    /// Membrane strength alpha [m]; larger alpha means more reflective.
    pub membrane_strength: f64,
    /// Membrane displacement q from the cavity centre.
    pub displacement: f64,
}

impl CavityConfig {
    pub fn new(total_length: f64, membrane_strength: f64, displacement: f64) -> Result<Self> {
        if !total_length.is_finite() || total_length <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "total cavity length must be positive, got {total_length}"
            )));
        }
        if !membrane_strength.is_finite() || membrane_strength <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "membrane strength must be positive, got {membrane_strength}"
            )));
        }
        if membrane_strength > 1.0 {
            // alpha has units of length; beyond ~1 m the delta-membrane model
            // is far outside its regime and k*alpha overflows usefulness.
            return Err(Error::InvalidInput(format!(
                "membrane strength {membrane_strength} m is outside the supported range (0, 1]"
            )));
        }
        if !displacement.is_finite() || 2.0 * displacement.abs() >= total_length {
            return Err(Error::InvalidInput(format!(
                "displacement {displacement} puts the membrane outside the cavity"
            )));
        }
        Ok(Self {
            total_length,
            membrane_strength,
            displacement,
        })
    }

    /// Left arm length l1 = (L + 2q)/2.
    pub fn left_arm(&self) -> f64 {
        0.5 * self.total_length + self.displacement
    }

    /// Right arm length l2 = (L - 2q)/2.
    pub fn right_arm(&self) -> f64 {
        0.5 * self.total_length - self.displacement
    }

    /// Residual of the eigenvalue condition; roots are mode wavenumbers.
    pub fn eigen_residual(&self, k: f64) -> f64 {
        let a = self.membrane_strength;
        let kl = k * self.total_length;
        a * k * ((2.0 * k * self.displacement).cos() - kl.cos()) - 2.0 * kl.sin()
    }
}

/// Intensity reflectivity of the bare membrane at wavenumber k.
pub fn membrane_reflectivity(k: f64, alpha: f64) -> Result<f64> {
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "wavenumber must be positive, got {k}"
        )));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidInput(format!(
            "membrane strength must be non-negative, got {alpha}"
        )));
    }
    let ka = k * alpha;
    Ok(ka * ka / (4.0 + ka * ka))
}

/// Membrane strength that gives intensity reflectivity `r` at wavenumber `k`.
pub fn strength_for_reflectivity(k: f64, r: f64) -> Result<f64> {
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "wavenumber must be positive, got {k}"
        )));
    }
    if !r.is_finite() || r <= 0.0 || r >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "reflectivity must lie strictly between 0 and 1, got {r}"
        )));
    }
    Ok(2.0 / k * (r / (1.0 - r)).sqrt())
}

/// One normalised cavity mode.
#[derive(Debug, Clone, Copy)]
pub struct ModeSolution {
    pub wavenumber: f64,
    /// Angular frequency c*k.
    pub omega: f64,
    /// Amplitude of the left arc, U = a_left sin(k (x + l1)) for x <= 0.
    pub a_left: f64,
    /// Amplitude of the right arc, U = a_right sin(k (x - l2)) for x >= 0.
    pub a_right: f64,
    /// Geometry the mode was solved in.
    pub config: CavityConfig,
}

impl ModeSolution {
    /// Mode profile at position x.
    pub fn value(&self, x: f64) -> Result<f64> {
        let l1 = self.config.left_arm();
        let l2 = self.config.right_arm();
        // Tolerate round-off at the mirrors.
        let slack = 1e-12 * self.config.total_length;
        if x < -l1 - slack || x > l2 + slack {
            return Err(Error::InvalidInput(format!(
                "position {x} lies outside the cavity [{}, {}]",
                -l1, l2
            )));
        }
        let k = self.wavenumber;
        Ok(if x <= 0.0 {
            self.a_left * (k * (x + l1)).sin()
        } else {
            self.a_right * (k * (x - l2)).sin()
        })
    }

    /// Mode value at the membrane (continuous across it).
    pub fn membrane_value(&self) -> f64 {
        self.a_left * (self.wavenumber * self.config.left_arm()).sin()
    }

    /// Scaled H-field amplitude just left of the membrane: a_left cos(k l1).
    pub fn face_left(&self) -> f64 {
        self.a_left * (self.wavenumber * self.config.left_arm()).cos()
    }

    /// Scaled H-field amplitude just right of the membrane: a_right cos(k l2).
    pub fn face_right(&self) -> f64 {
        self.a_right * (self.wavenumber * self.config.right_arm()).cos()
    }
}

/// A solved spectral window: every mode with wavenumber inside it.
#[derive(Debug, Clone)]
pub struct SpectrumWindow {
    pub k_min: f64,
    pub k_max: f64,
    pub modes: Vec<ModeSolution>,
}

/// Outcome of following mode identities to a nearby geometry.
#[derive(Debug, Clone)]
pub struct TrackedSpectrum {
    pub window: SpectrumWindow,
    /// Smallest |overlap| seen during assignment; near 1 means unambiguous.
    pub min_overlap: f64,
}

impl TrackedSpectrum {
    /// True when some assignment overlap dropped low enough that the mode
    /// labelling may be wrong; callers should warn or refuse.
    pub fn is_ambiguous(&self) -> bool {
        self.min_overlap < 0.5
    }
}

fn bisect_root(config: &CavityConfig, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = config.eigen_residual(lo);
    debug_assert!(f_lo * config.eigen_residual(hi) <= 0.0);
    // Bisect to the last representable float; k enters downstream finite
    // differences with steps ~1e-12 m so sloppy roots are not an option.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let f_mid = config.eigen_residual(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
}

/// Sign-change brackets of the eigenvalue residual on a uniform grid.
fn scan_brackets(config: &CavityConfig, k_min: f64, k_max: f64, points: usize) -> Vec<(f64, f64)> {
    let mut brackets = Vec::new();
    let dk = (k_max - k_min) / (points - 1) as f64;
    let mut prev_k = k_min;
    let mut prev_f = config.eigen_residual(prev_k);
    for i in 1..points {
        let k = k_min + i as f64 * dk;
        let f = config.eigen_residual(k);
        if prev_f == 0.0 {
            brackets.push((prev_k, prev_k));
        } else if prev_f * f < 0.0 {
            brackets.push((prev_k, k));
        }
        prev_k = k;
        prev_f = f;
    }
    if prev_f == 0.0 {
        brackets.push((prev_k, prev_k));
    }
    brackets
}

fn refine_bracket(config: &CavityConfig, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        bisect_root(config, lo, hi)
    }
}

/// Solve every mode whose wavenumber falls inside [k_min, k_max].
///
/// `scan_points` controls the coarse grid; it must resolve the narrowest root
/// spacing in the window or roots will be silently merged, so prefer
/// [`solve_pair`] near an avoided crossing. Roots landing within one scan
/// cell of a window edge are rejected: the window is then ill-posed because
/// a partner root may sit just outside.
pub fn solve_window(
    config: &CavityConfig,
    k_min: f64,
    k_max: f64,
    scan_points: usize,
) -> Result<SpectrumWindow> {
    if !(k_min.is_finite() && k_max.is_finite()) || k_min <= 0.0 || k_max <= k_min {
        return Err(Error::InvalidInput(format!(
            "bad spectral window [{k_min}, {k_max}]"
        )));
    }
    if scan_points < 8 {
        return Err(Error::InvalidInput(
            "spectral scan needs at least 8 points".into(),
        ));
    }
    let brackets = scan_brackets(config, k_min, k_max, scan_points);
    let dk = (k_max - k_min) / (scan_points - 1) as f64;
    let mut modes = Vec::with_capacity(brackets.len());
    for b in brackets {
        let k = refine_bracket(config, b);
        if k - k_min < dk || k_max - k < dk {
            return Err(Error::Solver(format!(
                "root at k = {k} sits within one scan cell of the window edge"
            )));
        }
        modes.push(build_mode(config, k, 1.0)?);
    }
    Ok(SpectrumWindow {
        k_min,
        k_max,
        modes,
    })
}

/// Solve the crossing pair built on the n-th antisymmetric resonance
/// k0 = 2 pi n / L. Returns the two modes bracketing k0, lower first.
///
/// The pair can be nearly degenerate (strong membrane, small q), so the scan
/// zooms adaptively around residual minima until both roots separate.
pub fn solve_pair(config: &CavityConfig, pair_index: usize) -> Result<[ModeSolution; 2]> {
    if pair_index == 0 {
        return Err(Error::InvalidInput("pair index must be at least 1".into()));
    }
    let l = config.total_length;
    let k0 = 2.0 * std::f64::consts::PI * pair_index as f64 / l;
    let half = std::f64::consts::PI / l;
    let (k_min, k_max) = (k0 - half, k0 + half);

    const SCAN: usize = 1024;
    let mut brackets = scan_brackets(config, k_min, k_max, SCAN);
    let mut lo = k_min;
    let mut hi = k_max;
    let mut zoom = 0;
    while brackets.len() < 2 {
        // Roots unresolved at this density: zoom on the most promising spot.
        // With one bracket found, the partner hides beside it; with none,
        // both hide near the grid minimum of |f|.
        zoom += 1;
        if zoom > 8 {
            return Err(Error::Solver(format!(
                "could not separate the near-degenerate pair around k = {k0}"
            )));
        }
        let centre = if let Some(&(a, b)) = brackets.first() {
            0.5 * (a + b)
        } else {
            let dk = (hi - lo) / (SCAN - 1) as f64;
            let mut best = lo;
            let mut best_f = f64::INFINITY;
            for i in 0..SCAN {
                let k = lo + i as f64 * dk;
                let f = config.eigen_residual(k).abs();
                if f < best_f {
                    best_f = f;
                    best = k;
                }
            }
            best
        };
        let width = (hi - lo) / (SCAN as f64 / 16.0);
        lo = (centre - width).max(k_min);
        hi = (centre + width).min(k_max);
        brackets = scan_brackets(config, lo, hi, SCAN);
    }
    if brackets.len() > 2 {
        return Err(Error::Solver(format!(
            "expected 2 roots around k = {k0}, found {}",
            brackets.len()
        )));
    }
    let k_lo = refine_bracket(config, brackets[0]);
    let k_hi = refine_bracket(config, brackets[1]);
    Ok([
        build_mode(config, k_lo, 1.0)?,
        build_mode(config, k_hi, 1.0)?,
    ])
}

/// Assemble a normalised mode at a solved wavenumber. `sign` fixes the
/// overall orientation via the sign of the left amplitude.
fn build_mode(config: &CavityConfig, k: f64, sign: f64) -> Result<ModeSolution> {
    let l1 = config.left_arm();
    let l2 = config.right_arm();
    let alpha = config.membrane_strength;
    let (s1, c1) = (k * l1).sin_cos();
    let (s2, c2) = (k * l2).sin_cos();

    // Amplitude ratio from continuity, or from the derivative jump when
    // sin(k l2) is near a node; pick the better conditioned of the two.
    let a = 1.0f64;
    let b = if s2.abs() >= c2.abs() {
        -a * s1 / s2
    } else {
        a * (c1 - alpha * k * s1) / c2
    };
    if !b.is_finite() {
        return Err(Error::Solver(format!(
            "degenerate amplitude ratio at k = {k}"
        )));
    }

    // (1/eps0) int eps U^2 = A^2 I1 + B^2 I2 + alpha U(0)^2 with
    // I = l/2 - sin(2 k l)/(4 k) on each arm.
    let i1 = 0.5 * l1 - (2.0 * k * l1).sin() / (4.0 * k);
    let i2 = 0.5 * l2 - (2.0 * k * l2).sin() / (4.0 * k);
    let u0 = a * s1;
    let norm_sq = a * a * i1 + b * b * i2 + alpha * u0 * u0;
    if !(norm_sq.is_finite() && norm_sq > 0.0) {
        return Err(Error::Solver(format!("non-positive mode norm at k = {k}")));
    }
    let scale = sign * a.signum() / norm_sq.sqrt();
    Ok(ModeSolution {
        wavenumber: k,
        omega: SPEED_OF_LIGHT * k,
        a_left: scale * a,
        a_right: scale * b,
        config: *config,
    })
}

/// Closed form of int sin(w x + r) dx pairs:
/// ic(w, r) = int_{x0}^{x1} cos(w x + r) dx, stable as w -> 0.
fn cos_integral(w: f64, r: f64, x0: f64, x1: f64) -> f64 {
    let span = x1 - x0;
    let mid = 0.5 * (x0 + x1);
    let half = 0.5 * w * span;
    // span * sinc(half) * cos(w*mid + r); series for small arguments.
    let sinc = if half.abs() < 1e-4 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    span * sinc * (w * mid + r).cos()
}

/// int_{x0}^{x1} sin(a x + p) sin(b x + s) dx via product-to-sum. Stable for
/// nearly equal wavenumbers, which is exactly the finite-difference case.
fn sine_product_integral(a: f64, p: f64, b: f64, s: f64, x0: f64, x1: f64) -> f64 {
    0.5 * (cos_integral(a - b, p - s, x0, x1) - cos_integral(a + b, p + s, x0, x1))
}

/// Dielectric-weighted overlap (1/eps0) int eps(x) U_m(x) V_n(x) dx, with the
/// measure (geometry and membrane position) taken from `measure`.
///
/// Both modes are evaluated over the arms of `measure`; they may have been
/// solved in slightly different geometries, which is what the coupling
/// stencils need.
pub fn weighted_overlap(measure: &CavityConfig, m: &ModeSolution, n: &ModeSolution) -> f64 {
    let l1 = measure.left_arm();
    let l2 = measure.right_arm();
    let (km, kn) = (m.wavenumber, n.wavenumber);
    // Left arm: arcs sin(k x + k * l1_own) keyed to each mode's own geometry.
    let left = m.a_left
        * n.a_left
        * sine_product_integral(
            km,
            km * m.config.left_arm(),
            kn,
            kn * n.config.left_arm(),
            -l1,
            0.0,
        );
    let right = m.a_right
        * n.a_right
        * sine_product_integral(
            km,
            -km * m.config.right_arm(),
            kn,
            -kn * n.config.right_arm(),
            0.0,
            l2,
        );
    let membrane = measure.membrane_strength * m.value(0.0).unwrap() * n.value(0.0).unwrap();
    left + right + membrane
}

/// Re-solve the window of `previous` in geometry `next`, carrying mode
/// identity (ordering and sign) across by maximal overlap.
pub fn track_modes(previous: &SpectrumWindow, next: &CavityConfig) -> Result<TrackedSpectrum> {
    let fresh = solve_window(next, previous.k_min, previous.k_max, 4096)?;
    track_onto(previous, fresh)
}

/// Same as [`track_modes`] but for a crossing pair, using the robust pair
/// solver instead of a fixed-density scan.
pub fn track_pair(
    previous: &SpectrumWindow,
    next: &CavityConfig,
    pair_index: usize,
) -> Result<TrackedSpectrum> {
    let pair = solve_pair(next, pair_index)?;
    let fresh = SpectrumWindow {
        k_min: previous.k_min,
        k_max: previous.k_max,
        modes: pair.to_vec(),
    };
    track_onto(previous, fresh)
}

fn track_onto(previous: &SpectrumWindow, fresh: SpectrumWindow) -> Result<TrackedSpectrum> {
    if fresh.modes.len() != previous.modes.len() {
        return Err(Error::Tracking(format!(
            "mode count changed from {} to {} across the step",
            previous.modes.len(),
            fresh.modes.len()
        )));
    }
    let n = fresh.modes.len();
    let mut taken = vec![false; n];
    let mut ordered: Vec<ModeSolution> = Vec::with_capacity(n);
    let mut min_overlap = f64::INFINITY;
    for prev in &previous.modes {
        let mut best = None;
        let mut best_ov = 0.0f64;
        for (j, cand) in fresh.modes.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let ov = weighted_overlap(&cand.config, prev, cand);
            if ov.abs() > best_ov.abs() {
                best_ov = ov;
                best = Some(j);
            }
        }
        let j = best.ok_or_else(|| Error::Tracking("no candidate mode left".into()))?;
        taken[j] = true;
        let mut m = fresh.modes[j];
        if best_ov < 0.0 {
            m.a_left = -m.a_left;
            m.a_right = -m.a_right;
        }
        min_overlap = min_overlap.min(best_ov.abs());
        ordered.push(m);
    }
    Ok(TrackedSpectrum {
        window: SpectrumWindow {
            k_min: fresh.k_min,
            k_max: fresh.k_max,
            modes: ordered,
        },
        min_overlap,
    })
}
