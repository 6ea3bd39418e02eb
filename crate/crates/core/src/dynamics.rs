//! Constant-velocity membrane sweeps through an avoided crossing.
//!
//! Three equation sets of decreasing fidelity, all stepped with fixed-step
//! RK4:
//!
//! * ASOE: second order in time, adiabatic (instantaneous-eigenmode) basis,
//!   with first- and second-derivative mode couplings from [`SweepTables`].
//! * DSOE: second order in time, diabatic (left/right arm) basis, two-level
//!   crossing parameters only.
//! * DFOE: first order in time, diabatic basis; exactly the Landau-Zener
//!   problem for the envelopes.
//!
//! The second-order sets carry optical-frequency content, so DSOE and DFOE
//! are integrated in a frame rotating at omega_av (an exact change of
//! variables, applied both ways at the boundaries) and the ASOE keeps the
//! fast phases in explicit exponentials. Everything downstream works on
//! envelopes plus analytically accumulated phases; the fast scale only
//! limits the step through the stability of the unexcited 2*omega branch.

use crate::couplings::{mixing_angle, rotate_pair, CrossingParams, Rotation, SweepTables};
use crate::error::{Error, Result};
use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Uniform membrane motion q(t) = v t over t in [-T0, T0].
#[derive(Debug, Clone, Copy)]
pub struct SweepTrajectory {
    /// Membrane speed v > 0 [m/s].
    pub speed: f64,
    /// Half the swept displacement range L0 [m]; q runs over [-L0, L0].
    pub half_range: f64,
    /// Half the sweep duration T0 = L0 / v [s].
    pub half_duration: f64,
}

impl SweepTrajectory {
    pub fn from_speed(speed: f64, half_range: f64) -> Result<Self> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sweep speed must be positive, got {speed}"
            )));
        }
        if !(half_range.is_finite() && half_range > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sweep half-range must be positive, got {half_range}"
            )));
        }
        Ok(Self {
            speed,
            half_range,
            half_duration: half_range / speed,
        })
    }

    pub fn from_duration(half_duration: f64, half_range: f64) -> Result<Self> {
        if !(half_duration.is_finite() && half_duration > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sweep half-duration must be positive, got {half_duration}"
            )));
        }
        Self::from_speed(half_range / half_duration, half_range)
    }

    /// Membrane position at time t.
    pub fn q(&self, t: f64) -> f64 {
        self.speed * t
    }

    /// Dimensionless sweep time tau = t / T0 in [-1, 1].
    pub fn tau(&self, t: f64) -> f64 {
        t / self.half_duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Asoe,
    Dsoe,
    Dfoe,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Asoe => "asoe",
            Scheme::Dsoe => "dsoe",
            Scheme::Dfoe => "dfoe",
        }
    }
}

/// Which pair basis a series' envelopes live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Instantaneous eigenmodes (lower, upper).
    Adiabatic,
    /// Arm-localised modes (left, right).
    Diabatic,
}

/// Where the light starts at tau = -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialSide {
    Left,
    Right,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    /// RK4 steps per fastest resolved period; 40 is a solid default.
    pub steps_per_fastest_period: u32,
    /// Record every n-th step; 0 picks a decimation targeting ~2000 samples.
    pub output_decimation: u32,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            steps_per_fastest_period: 40,
            output_decimation: 0,
        }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<()> {
        // RK4 stability for the unexcited 2*omega branch needs > ~5 steps
        // per period; anything below 10 is numerically reckless.
        if self.steps_per_fastest_period < 10 {
            return Err(Error::InvalidInput(format!(
                "steps_per_fastest_period = {} is below the stability floor of 10",
                self.steps_per_fastest_period
            )));
        }
        Ok(())
    }
}

/// One recorded point of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepSample {
    pub t: f64,
    pub q: f64,
    /// Electric envelopes in the series basis (slow amplitudes, fast phase
    /// removed).
    pub env: [Complex64; 2],
    /// Magnetic envelopes, same basis and normalization. Identical to `env`
    /// up to the envelope drift rate over the carrier frequency; carrying
    /// both keeps the cycle-averaged energy exact through the crossing.
    pub henv: [Complex64; 2],
    /// Accumulated adiabatic phases theta_m = int omega_m dt from t0.
    pub theta: [f64; 2],
    /// Accumulated common phase omega_av (t - t0).
    pub common_phase: f64,
}

/// A recorded sweep: envelopes on a decimated uniform time grid.
#[derive(Debug, Clone)]
pub struct SweepSeries {
    pub scheme: Scheme,
    pub basis: Basis,
    pub crossing: CrossingParams,
    pub trajectory: SweepTrajectory,
    pub samples: Vec<SweepSample>,
}

impl SweepSeries {
    /// Full (phase-carrying) amplitudes of sample i in the series basis.
    pub fn full_amplitudes(&self, i: usize) -> [Complex64; 2] {
        let s = &self.samples[i];
        match self.basis {
            Basis::Adiabatic => [
                s.env[0] * Complex64::from_polar(1.0, -s.theta[0]),
                s.env[1] * Complex64::from_polar(1.0, -s.theta[1]),
            ],
            Basis::Diabatic => {
                let ph = Complex64::from_polar(1.0, -s.common_phase);
                [s.env[0] * ph, s.env[1] * ph]
            }
        }
    }

    /// The same sweep re-expressed in the other basis (exact rotation of the
    /// full amplitudes at each sample; envelopes re-extracted).
    pub fn to_basis(&self, basis: Basis) -> SweepSeries {
        if basis == self.basis {
            return self.clone();
        }
        let mut out = self.clone();
        out.basis = basis;
        for (i, s) in self.samples.iter().enumerate() {
            let angle = mixing_angle(self.crossing.gamma_of_q(s.q), self.crossing.delta);
            // Strip the fast phase of the source basis, rotate, reapply the
            // fast phase of the target basis. The magnetic envelope is a
            // field vector on the same mode pair and transforms identically.
            let convert = |env: [Complex64; 2]| -> [Complex64; 2] {
                let full = match self.basis {
                    Basis::Adiabatic => [
                        env[0] * Complex64::from_polar(1.0, -s.theta[0]),
                        env[1] * Complex64::from_polar(1.0, -s.theta[1]),
                    ],
                    Basis::Diabatic => {
                        let ph = Complex64::from_polar(1.0, -s.common_phase);
                        [env[0] * ph, env[1] * ph]
                    }
                };
                match basis {
                    Basis::Diabatic => {
                        let r = rotate_pair(full, angle, Rotation::AdiabaticToDiabatic);
                        let ph = Complex64::from_polar(1.0, s.common_phase);
                        [r[0] * ph, r[1] * ph]
                    }
                    Basis::Adiabatic => {
                        let r = rotate_pair(full, angle, Rotation::DiabaticToAdiabatic);
                        [
                            r[0] * Complex64::from_polar(1.0, s.theta[0]),
                            r[1] * Complex64::from_polar(1.0, s.theta[1]),
                        ]
                    }
                }
            };
            out.samples[i].env = convert(s.env);
            out.samples[i].henv = convert(s.henv);
        }
        out
    }

    /// |env|^2 of each mode at sample i.
    pub fn populations(&self, i: usize) -> [f64; 2] {
        let s = &self.samples[i];
        [s.env[0].norm_sqr(), s.env[1].norm_sqr()]
    }
}

/// Envelope amplitudes at the sweep start for light on one side (or in one
/// adiabatic mode), expressed in `basis`. Exact rotation, no limits taken.
pub fn initial_amplitudes(
    crossing: &CrossingParams,
    q0: f64,
    basis: Basis,
    side: InitialSide,
) -> [Complex64; 2] {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let angle = mixing_angle(crossing.gamma_of_q(q0), crossing.delta);
    let (native, native_basis) = match side {
        InitialSide::Left => ([one, zero], Basis::Diabatic),
        InitialSide::Right => ([zero, one], Basis::Diabatic),
        InitialSide::Lower => ([one, zero], Basis::Adiabatic),
        InitialSide::Upper => ([zero, one], Basis::Adiabatic),
    };
    if native_basis == basis {
        native
    } else {
        let dir = match basis {
            Basis::Diabatic => Rotation::AdiabaticToDiabatic,
            Basis::Adiabatic => Rotation::DiabaticToAdiabatic,
        };
        rotate_pair(native, angle, dir)
    }
}

/// Antiderivative of the half-gap: S(t) = int sqrt(Delta^2 + (b t)^2) dt
/// with b = 2 sqrt(gamma) v, so that theta_m(t) - theta_m(t0) has a closed
/// form and never needs to be carried as ODE state.
fn half_gap_antiderivative(crossing: &CrossingParams, speed: f64, t: f64) -> f64 {
    let b = 2.0 * crossing.gamma.sqrt() * speed;
    let d = crossing.delta;
    let root = (d * d + b * t * b * t).sqrt();
    0.5 * t * root + 0.5 * d * d / b * (b * t / d).asinh()
}

/// Adiabatic phases (theta_1, theta_2) accumulated from t0 to t.
pub fn adiabatic_phases(
    crossing: &CrossingParams,
    trajectory: &SweepTrajectory,
    t0: f64,
    t: f64,
) -> (f64, f64) {
    let ds = half_gap_antiderivative(crossing, trajectory.speed, t)
        - half_gap_antiderivative(crossing, trajectory.speed, t0);
    let common = crossing.omega_av * (t - t0);
    (common - ds, common + ds)
}

fn auto_decimation(n_steps: u64, requested: u32) -> u64 {
    if requested > 0 {
        requested as u64
    } else {
        (n_steps / 2000).max(1)
    }
}

fn check_finite(env: &[Complex64]) -> Result<()> {
    if env.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(
            "state became non-finite during the sweep".into(),
        ));
    }
    Ok(())
}

/// Integrate the adiabatic second-order equations.
///
/// `init` are the adiabatic envelopes at t = -T0; the derivative initial
/// condition is the standard one for a field that was in its instantaneous
/// eigenmodes before the sweep started. `tables` must cover the swept q
/// range (plus nothing more than the trajectory uses).
pub fn integrate_asoe(
    crossing: &CrossingParams,
    tables: &SweepTables,
    trajectory: &SweepTrajectory,
    init: [Complex64; 2],
    cfg: &IntegratorConfig,
) -> Result<SweepSeries> {
    cfg.validate()?;
    let t0 = -trajectory.half_duration;
    let t1 = trajectory.half_duration;
    let v = trajectory.speed;
    // Range check up front so the hot loop can't wander off the table.
    tables.sample(trajectory.q(t0))?;
    tables.sample(trajectory.q(t1))?;

    let (_, omega_fast) = crossing.frequencies(trajectory.half_range);
    let step = 2.0 * std::f64::consts::PI / omega_fast / cfg.steps_per_fastest_period as f64;
    let n_steps = ((t1 - t0) / step).ceil() as u64;
    let h = (t1 - t0) / n_steps as f64;
    let decim = auto_decimation(n_steps, cfg.output_decimation);

    // State: [a1, a2, d1, d2, s] with d = da/dt. The second-order equations
    // propagate potential envelopes a_m; the field envelopes reported in the
    // samples are e_m = i omega_m a_m - d_m, so the WKB drift of |e_m|^2
    // tracks omega_m and the work done by the membrane lands in the energy
    // with the right sign. `init` are field envelopes at t0.
    //
    // The frequencies here are the exact tabulated mode frequencies, not the
    // two-level fit; the fit is a few percent off in the slopes once the
    // detuning is many gap widths, which is exactly the scale the
    // work-energy closure probes. The phase half-difference s = int (omega_2
    // - omega_1)/2 dt therefore has no closed form and rides along as the
    // (real) fifth state component.
    //
    // The derivative initial condition is d_m(t0) = -sum_n P_mn a_n,
    // P_mn = v g_mn (phases vanish at t0, g antisymmetric, zero diagonal).
    let tp0 = tables.sample(trajectory.q(t0))?;
    let a0 = [init[0] / (I * tp0.omega[0]), init[1] / (I * tp0.omega[1])];
    let g0 = tp0.g12;
    let mut y = [
        a0[0],
        a0[1],
        -v * g0 * a0[1],
        v * g0 * a0[0],
        Complex64::default(),
    ];

    let deriv = |t: f64, y: &[Complex64; 5], out: &mut [Complex64; 5]| -> Result<()> {
        let q = v * t;
        let tp = tables.sample(q)?;
        let [w1, w2] = tp.omega;
        let w1d = v * tp.domega_dq[0]; // d omega / dt
        let w2d = v * tp.domega_dq[1];
        let ds = y[4].re;
        // theta_12 = theta_1 - theta_2 = -2 * s.
        let e12 = Complex64::from_polar(1.0, -2.0 * ds);
        let e21 = e12.conj();
        let g12 = tp.g12;
        let (c1, c2, d1, d2) = (y[0], y[1], y[2], y[3]);

        out[0] = d1;
        out[1] = d2;
        // P_mn = v g_mn e^{i theta_mn}, Q_mn = v^2 q2_mn e^{i theta_mn}.
        let p12 = v * g12 * e12;
        let p21 = -v * g12 * e21;
        let vv = v * v;
        let q11 = vv * tp.q2[0][0];
        let q22 = vv * tp.q2[1][1];
        let q12 = vv * tp.q2[0][1] * e12;
        let q21 = vv * tp.q2[1][0] * e21;
        out[2] = I * w1d * c1 + 2.0 * I * w1 * d1
            - ((2.0 * d2 - 2.0 * I * w2 * c2) * p12 + c1 * q11 + c2 * q12);
        out[3] = I * w2d * c2 + 2.0 * I * w2 * d2
            - ((2.0 * d1 - 2.0 * I * w1 * c1) * p21 + c2 * q22 + c1 * q21);
        out[4] = Complex64::new(0.5 * (w2 - w1), 0.0);
        Ok(())
    };

    let w_av = crossing.omega_av;
    let mut samples = Vec::new();
    let mut record = |step_idx: u64, y: &[Complex64; 5]| -> Result<()> {
        let t = t0 + step_idx as f64 * h;
        check_finite(&y[..2])?;
        let tp = tables.sample(v * t)?;
        let ds = y[4].re;
        let common = w_av * (t - t0);
        samples.push(SweepSample {
            t,
            q: v * t,
            env: [
                I * tp.omega[0] * y[0] - y[2],
                I * tp.omega[1] * y[1] - y[3],
            ],
            henv: [I * tp.omega[0] * y[0], I * tp.omega[1] * y[1]],
            theta: [common - ds, common + ds],
            common_phase: common,
        });
        Ok(())
    };

    record(0, &y)?;
    let mut k1 = [Complex64::default(); 5];
    let mut k2 = [Complex64::default(); 5];
    let mut k3 = [Complex64::default(); 5];
    let mut k4 = [Complex64::default(); 5];
    let mut tmp = [Complex64::default(); 5];
    for s in 0..n_steps {
        let t = t0 + s as f64 * h;
        deriv(t, &y, &mut k1)?;
        for i in 0..5 {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        deriv(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..5 {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        deriv(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..5 {
            tmp[i] = y[i] + h * k3[i];
        }
        deriv(t + h, &tmp, &mut k4)?;
        for i in 0..5 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        let done = s + 1;
        if done % decim == 0 || done == n_steps {
            record(done, &y)?;
        }
    }

    Ok(SweepSeries {
        scheme: Scheme::Asoe,
        basis: Basis::Adiabatic,
        crossing: *crossing,
        trajectory: *trajectory,
        samples,
    })
}

/// Integrate the diabatic second-order equations in the omega_av frame.
///
/// `init` are the diabatic (left, right) envelopes at t = -T0. The field is
/// assumed to start in the instantaneous arm eigenmodes, which fixes the
/// first-derivative initial condition through the arm frequencies beta.
pub fn integrate_dsoe(
    crossing: &CrossingParams,
    trajectory: &SweepTrajectory,
    init: [Complex64; 2],
    cfg: &IntegratorConfig,
) -> Result<SweepSeries> {
    cfg.validate()?;
    let t0 = -trajectory.half_duration;
    let t1 = trajectory.half_duration;
    let v = trajectory.speed;
    let w_av = crossing.omega_av;
    let d2 = crossing.delta * crossing.delta;

    // The fast characteristic branch in the rotating frame sits at 2 omega_av.
    let step = std::f64::consts::PI / w_av / cfg.steps_per_fastest_period as f64;
    let n_steps = ((t1 - t0) / step).ceil() as u64;
    let h = (t1 - t0) / n_steps as f64;
    let decim = auto_decimation(n_steps, cfg.output_decimation);

    // State: [aL, aR, daL/dt, daR/dt] in the rotating frame. As in the
    // adiabatic scheme these are potential envelopes; the samples report
    // field envelopes e = i omega_av a - da/dt. `init` are field envelopes,
    // so the start state divides out the arm frequencies beta.
    let (bl0, br0) = crossing.diabatic_frequencies(trajectory.q(t0));
    let a0 = [init[0] / (I * bl0), init[1] / (I * br0)];
    let mut y = [
        a0[0],
        a0[1],
        -I * (bl0 - w_av) * a0[0],
        -I * (br0 - w_av) * a0[1],
    ];

    let deriv = |t: f64, y: &[Complex64; 4], out: &mut [Complex64; 4]| {
        let g = crossing.gamma_of_q(v * t);
        // omega_av^2 - M, with M the diabatic frequency-squared matrix.
        // Positive Gamma (left arm longer) lowers the left frequency.
        let mll = 2.0 * w_av * g - g * g - d2;
        let mrr = -(2.0 * w_av * g + g * g + d2);
        let moff = -2.0 * crossing.delta * w_av;
        out[0] = y[2];
        out[1] = y[3];
        out[2] = 2.0 * I * w_av * y[2] + mll * y[0] + moff * y[1];
        out[3] = 2.0 * I * w_av * y[3] + moff * y[0] + mrr * y[1];
    };

    let mut samples = Vec::new();
    let mut record = |step_idx: u64, y: &[Complex64; 4]| -> Result<()> {
        let t = t0 + step_idx as f64 * h;
        check_finite(&y[..2])?;
        let (th1, th2) = adiabatic_phases(crossing, trajectory, t0, t);
        // Magnetic envelope through the square root of the diabatic
        // frequency-squared matrix, [[w_av - Gamma, Delta], [Delta,
        // w_av + Gamma]] (exact for the two-level reduction).
        let g = crossing.gamma_of_q(v * t);
        let d = crossing.delta;
        samples.push(SweepSample {
            t,
            q: v * t,
            env: [I * w_av * y[0] - y[2], I * w_av * y[1] - y[3]],
            henv: [
                I * ((w_av - g) * y[0] + d * y[1]),
                I * (d * y[0] + (w_av + g) * y[1]),
            ],
            theta: [th1, th2],
            common_phase: w_av * (t - t0),
        });
        Ok(())
    };

    record(0, &y)?;
    let mut k1 = [Complex64::default(); 4];
    let mut k2 = [Complex64::default(); 4];
    let mut k3 = [Complex64::default(); 4];
    let mut k4 = [Complex64::default(); 4];
    let mut tmp = [Complex64::default(); 4];
    for s in 0..n_steps {
        let t = t0 + s as f64 * h;
        deriv(t, &y, &mut k1);
        for i in 0..4 {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        deriv(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..4 {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        deriv(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..4 {
            tmp[i] = y[i] + h * k3[i];
        }
        deriv(t + h, &tmp, &mut k4);
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        let done = s + 1;
        if done % decim == 0 || done == n_steps {
            record(done, &y)?;
        }
    }

    Ok(SweepSeries {
        scheme: Scheme::Dsoe,
        basis: Basis::Diabatic,
        crossing: *crossing,
        trajectory: *trajectory,
        samples,
    })
}

/// Integrate the diabatic first-order (Landau-Zener) equations in the
/// omega_av frame: i d(a)/dt = [[-Gamma, Delta], [Delta, Gamma]] a with
/// a = (left, right), so positive Gamma detunes the left arm downward.
///
/// Envelope norm is exactly conserved by the equations; a measured drift
/// above 1e-8 of the initial norm over the sweep is a step-size failure and
/// is reported as an error rather than silently returned.
pub fn integrate_dfoe(
    crossing: &CrossingParams,
    trajectory: &SweepTrajectory,
    init: [Complex64; 2],
    cfg: &IntegratorConfig,
) -> Result<SweepSeries> {
    cfg.validate()?;
    let t0 = -trajectory.half_duration;
    let t1 = trajectory.half_duration;
    let v = trajectory.speed;
    let d = crossing.delta;

    // Fastest envelope scale: the beat at the largest half-gap. The norm
    // contract needs markedly more than the generic 40 steps per period, so
    // the floor here is higher.
    let spp = cfg.steps_per_fastest_period.max(320) as f64;
    let beat = std::f64::consts::PI / crossing.half_gap(trajectory.half_range);
    let step = beat / spp;
    let n_steps = ((t1 - t0) / step).ceil() as u64;
    let h = (t1 - t0) / n_steps as f64;
    let decim = auto_decimation(n_steps, cfg.output_decimation);

    let mut y = [init[0], init[1]];
    let norm0 = y[0].norm_sqr() + y[1].norm_sqr();

    let deriv = |t: f64, y: &[Complex64; 2], out: &mut [Complex64; 2]| {
        let g = crossing.gamma_of_q(v * t);
        out[0] = -I * (d * y[1] - g * y[0]);
        out[1] = -I * (d * y[0] + g * y[1]);
    };

    let mut samples = Vec::new();
    let mut record = |step_idx: u64, y: &[Complex64; 2]| -> Result<()> {
        let t = t0 + step_idx as f64 * h;
        check_finite(y)?;
        let (th1, th2) = adiabatic_phases(crossing, trajectory, t0, t);
        samples.push(SweepSample {
            t,
            q: v * t,
            env: [y[0], y[1]],
            henv: [y[0], y[1]],
            theta: [th1, th2],
            common_phase: crossing.omega_av * (t - t0),
        });
        Ok(())
    };

    record(0, &y)?;
    let mut k1 = [Complex64::default(); 2];
    let mut k2 = [Complex64::default(); 2];
    let mut k3 = [Complex64::default(); 2];
    let mut k4 = [Complex64::default(); 2];
    let mut tmp = [Complex64::default(); 2];
    for s in 0..n_steps {
        let t = t0 + s as f64 * h;
        deriv(t, &y, &mut k1);
        for i in 0..2 {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        deriv(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..2 {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        deriv(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..2 {
            tmp[i] = y[i] + h * k3[i];
        }
        deriv(t + h, &tmp, &mut k4);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        let done = s + 1;
        if done % decim == 0 || done == n_steps {
            record(done, &y)?;
        }
    }

    let norm1 = y[0].norm_sqr() + y[1].norm_sqr();
    let drift = (norm1 - norm0).abs();
    if drift > 1e-8 * norm0 {
        return Err(Error::Numerical(format!(
            "envelope norm drifted by {drift:.3e} (relative {:.3e}) over the sweep; \
             increase steps_per_fastest_period",
            drift / norm0
        )));
    }

    Ok(SweepSeries {
        scheme: Scheme::Dfoe,
        basis: Basis::Diabatic,
        crossing: *crossing,
        trajectory: *trajectory,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::fit_crossing_params;
    use crate::observables::landau_zener_probability;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const L: f64 = 100e-6;
    const ALPHA: f64 = 1.7e-6;
    const PAIR: usize = 128;

    fn crossing() -> CrossingParams {
        fit_crossing_params(L, ALPHA, PAIR, 1e-6).unwrap()
    }

    #[test]
    fn trajectory_accounting() {
        let t = SweepTrajectory::from_speed(5000.0, 1e-7).unwrap();
        assert_relative_eq!(t.half_duration, 2e-11);
        assert_relative_eq!(t.q(t.half_duration), 1e-7);
        assert_relative_eq!(t.tau(-t.half_duration), -1.0);
        let t2 = SweepTrajectory::from_duration(2e-11, 1e-7).unwrap();
        assert_relative_eq!(t2.speed, 5000.0);
        assert!(SweepTrajectory::from_speed(-1.0, 1e-7).is_err());
        assert!(SweepTrajectory::from_speed(1.0, f64::NAN).is_err());
    }

    #[test]
    fn initial_amplitudes_respect_limits() {
        let c = crossing();
        // Deep on the left of the crossing the lower mode is right-localised.
        let q0 = -20.0 * c.delta / (2.0 * c.gamma.sqrt());
        let a = initial_amplitudes(&c, q0, Basis::Adiabatic, InitialSide::Right);
        assert!(a[0].norm() > 0.99);
        assert!(a[1].norm() < 0.1);
        // At the crossing, one side splits evenly between the pair.
        let a = initial_amplitudes(&c, 0.0, Basis::Diabatic, InitialSide::Upper);
        assert_abs_diff_eq!(a[0].norm_sqr(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1].norm_sqr(), 0.5, epsilon = 1e-12);
        // Native basis requests are identity.
        let a = initial_amplitudes(&c, 0.3e-9, Basis::Diabatic, InitialSide::Left);
        assert_eq!(a[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn phase_integral_matches_quadrature() {
        let c = crossing();
        let traj = SweepTrajectory::from_speed(5000.0, 1e-7).unwrap();
        let t0 = -traj.half_duration;
        let t = 0.7 * traj.half_duration;
        let (th1, th2) = adiabatic_phases(&c, &traj, t0, t);
        // Brute-force the integral of omega_1 and omega_2.
        let n = 200_001;
        let h = (t - t0) / (n - 1) as f64;
        let (mut i1, mut i2) = (0.0, 0.0);
        for j in 0..n {
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            let (w1, w2) = c.frequencies(traj.q(t0 + j as f64 * h));
            i1 += w * w1;
            i2 += w * w2;
        }
        assert_relative_eq!(th1, i1 * h, epsilon = 1e-9);
        assert_relative_eq!(th2, i2 * h, epsilon = 1e-9);
    }

    #[test]
    fn dfoe_reproduces_landau_zener_asymptotics() {
        let c = crossing();
        // Long sweep (Gamma_max = 160 Delta): finite-range corrections decay
        // only as 1/Gamma_max with an oscillating phase, so keep the range
        // generous, test at speeds where the jump probability is not tiny,
        // and average the survival over the tail of the sweep.
        let l0 = 160.0 * c.delta / (2.0 * c.gamma.sqrt());
        let cfg = IntegratorConfig {
            steps_per_fastest_period: 60,
            ..IntegratorConfig::default()
        };
        for v in [5000.0, 20000.0, 60000.0] {
            let traj = SweepTrajectory::from_speed(v, l0).unwrap();
            let init = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
            let series = integrate_dfoe(&c, &traj, init, &cfg).unwrap();
            let n = series.samples.len();
            let tail = n - n / 10..n;
            let m = tail.len() as f64;
            let survival: f64 = tail.clone().map(|i| series.populations(i)[1]).sum::<f64>() / m;
            let p_lz = landau_zener_probability(c.delta, c.gamma, v);
            assert_relative_eq!(survival, p_lz, max_relative = 0.02);
            // Norm conserved to the contract.
            let p = series.populations(n - 1);
            assert_abs_diff_eq!(p[0] + p[1], 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn dsoe_envelope_matches_dfoe() {
        let c = crossing();
        let traj = SweepTrajectory::from_speed(20000.0, 1e-7).unwrap();
        let init = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let fast = integrate_dfoe(&c, &traj, init, &IntegratorConfig::default()).unwrap();
        let slow = integrate_dsoe(&c, &traj, init, &IntegratorConfig::default()).unwrap();
        let pf = fast.populations(fast.samples.len() - 1);
        let ps = slow.populations(slow.samples.len() - 1);
        // DFOE drops the anti-rotating content, so a percent-level gap is
        // physical; the point is agreement of the transfer fraction.
        assert_abs_diff_eq!(pf[0], ps[0], epsilon = 0.02);
        assert_abs_diff_eq!(pf[1], ps[1], epsilon = 0.02);
    }

    #[test]
    fn asoe_transfer_matches_landau_zener_scale() {
        let c = crossing();
        let traj = SweepTrajectory::from_speed(5000.0, 1e-7).unwrap();
        let tables = crate::couplings::SweepTables::build(
            L,
            ALPHA,
            PAIR,
            -1.02e-7,
            1.02e-7,
            513,
            1e-12,
        )
        .unwrap();
        let init = initial_amplitudes(&c, traj.q(-traj.half_duration), Basis::Adiabatic, InitialSide::Right);
        let series = integrate_asoe(&c, &tables, &traj, init, &IntegratorConfig::default()).unwrap();
        let p = series.populations(series.samples.len() - 1);
        let p_lz = landau_zener_probability(c.delta, c.gamma, traj.speed);
        // Jumping to the upper branch is the non-adiabatic fraction.
        assert_abs_diff_eq!(p[1], p_lz, epsilon = 0.03);
        // Energy bookkeeping stays sane: populations positive, total O(1).
        assert!(p[0] > 0.0 && p[0] + p[1] < 1.5);
    }

    #[test]
    fn basis_round_trip_preserves_envelopes() {
        let c = crossing();
        let traj = SweepTrajectory::from_speed(20000.0, 1e-7).unwrap();
        let init = [Complex64::new(0.6, 0.1), Complex64::new(0.0, 0.793)];
        let series = integrate_dfoe(&c, &traj, init, &IntegratorConfig::default()).unwrap();
        let back = series.to_basis(Basis::Adiabatic).to_basis(Basis::Diabatic);
        for (a, b) in series.samples.iter().zip(&back.samples) {
            for i in 0..2 {
                assert_abs_diff_eq!(a.env[i].re, b.env[i].re, epsilon = 1e-12);
                assert_abs_diff_eq!(a.env[i].im, b.env[i].im, epsilon = 1e-12);
            }
        }
        // Total envelope power is basis independent.
        let ad = series.to_basis(Basis::Adiabatic);
        for i in [0, series.samples.len() / 2, series.samples.len() - 1] {
            let pd = series.populations(i);
            let pa = ad.populations(i);
            assert_abs_diff_eq!(pd[0] + pd[1], pa[0] + pa[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn step_floor_is_enforced() {
        let c = crossing();
        let traj = SweepTrajectory::from_speed(20000.0, 1e-7).unwrap();
        let cfg = IntegratorConfig {
            steps_per_fastest_period: 4,
            output_decimation: 0,
        };
        let init = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        assert!(integrate_dfoe(&c, &traj, init, &cfg).is_err());
    }
}
