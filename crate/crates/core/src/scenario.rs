//! Scenario configuration, batch execution, and CSV emission.
//!
//! A scenario is one cavity, one crossing, one sweep, and a set of schemes
//! to integrate. Config files are TOML. Output is one CSV per scheme plus a
//! JSON-lines summary, written with fixed formatting (17 significant digits)
//! so identical configs produce byte-identical files.

use crate::couplings::{fit_crossing_params, CrossingParams, SweepTables};
use crate::dynamics::{
    initial_amplitudes, integrate_asoe, integrate_dfoe, integrate_dsoe, Basis, InitialSide,
    IntegratorConfig, Scheme, SweepSeries, SweepTrajectory,
};
use crate::error::{Error, Result};
use crate::modes::{membrane_reflectivity, solve_pair, strength_for_reflectivity, CavityConfig};
use crate::observables::{
    build_records, landau_zener_probability, validity_ratio, SweepRecord,
};
use crate::quantum::hamiltonian_coefficients;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

const DEFAULT_WAVELENGTH: f64 = 785e-9;

/// Raw scenario file contents, straight from TOML.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: Option<String>,
    pub cavity: CavitySection,
    pub crossing: CrossingSection,
    pub sweep: SweepSection,
    pub run: RunSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub quantum: Option<QuantumSection>,
    #[serde(default)]
    pub spectrum: Option<SpectrumSection>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub total_length: f64,
    pub membrane_strength: Option<f64>,
    pub reflectivity: Option<f64>,
    pub wavelength: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CrossingSection {
    pub pair: usize,
    pub fit_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub speed: Option<f64>,
    pub half_duration: Option<f64>,
    pub half_range: f64,
    pub initial: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub schemes: Vec<String>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub steps_per_fastest_period: Option<u32>,
    pub output_decimation: Option<u32>,
    pub table_nodes: Option<usize>,
    pub stencil_step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub speeds: Vec<f64>,
    pub membrane_strengths: Option<Vec<f64>>,
    pub reflectivities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct QuantumSection {
    pub points: Option<usize>,
    pub q_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    pub points: Option<usize>,
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config parse error: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Validate and fill defaults.
    pub fn resolve(&self) -> Result<Scenario> {
        let name = self.name.clone().unwrap_or_else(|| "run".into());
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::InvalidInput(format!(
                "scenario name '{name}' must be non-empty [A-Za-z0-9_-]"
            )));
        }

        let alpha = resolve_strength(&self.cavity)?;
        // Probe geometry now so bad cavities fail before any heavy work.
        CavityConfig::new(self.cavity.total_length, alpha, 0.0)?;

        if self.crossing.pair == 0 {
            return Err(Error::InvalidInput("crossing pair index must be >= 1".into()));
        }

        let trajectory = match (self.sweep.speed, self.sweep.half_duration) {
            (Some(v), None) => SweepTrajectory::from_speed(v, self.sweep.half_range)?,
            (None, Some(t0)) => SweepTrajectory::from_duration(t0, self.sweep.half_range)?,
            _ => {
                return Err(Error::InvalidInput(
                    "give exactly one of sweep.speed and sweep.half_duration".into(),
                ))
            }
        };

        let initial = match self.sweep.initial.as_deref().unwrap_or("right") {
            "left" => InitialSide::Left,
            "right" => InitialSide::Right,
            "lower" => InitialSide::Lower,
            "upper" => InitialSide::Upper,
            other => {
                return Err(Error::InvalidInput(format!(
                    "sweep.initial must be left|right|lower|upper, got '{other}'"
                )))
            }
        };

        if self.run.schemes.is_empty() {
            return Err(Error::InvalidInput("run.schemes must not be empty".into()));
        }
        let mut schemes = Vec::new();
        for s in &self.run.schemes {
            let scheme = match s.to_ascii_lowercase().as_str() {
                "asoe" => Scheme::Asoe,
                "dsoe" => Scheme::Dsoe,
                "dfoe" => Scheme::Dfoe,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown scheme '{other}' (expected asoe|dsoe|dfoe)"
                    )))
                }
            };
            if !schemes.contains(&scheme) {
                schemes.push(scheme);
            }
        }

        let integrator = IntegratorConfig {
            steps_per_fastest_period: self.integrator.steps_per_fastest_period.unwrap_or(40),
            output_decimation: self.integrator.output_decimation.unwrap_or(0),
        };
        let table_nodes = self.integrator.table_nodes.unwrap_or(2001);
        let stencil_step = self.integrator.stencil_step.unwrap_or(1e-12);

        let scan = match &self.scan {
            None => None,
            Some(s) => {
                if s.speeds.is_empty() {
                    return Err(Error::InvalidInput("scan.speeds must not be empty".into()));
                }
                let wavelength = self.cavity.wavelength.unwrap_or(DEFAULT_WAVELENGTH);
                let k_ref = 2.0 * std::f64::consts::PI / wavelength;
                let strengths = match (&s.membrane_strengths, &s.reflectivities) {
                    (Some(a), None) => a.clone(),
                    (None, Some(rs)) => rs
                        .iter()
                        .map(|&r| strength_for_reflectivity(k_ref, r))
                        .collect::<Result<Vec<_>>>()?,
                    (None, None) => vec![alpha],
                    (Some(_), Some(_)) => {
                        return Err(Error::InvalidInput(
                            "give scan.membrane_strengths or scan.reflectivities, not both".into(),
                        ))
                    }
                };
                Some(ScanGrid {
                    speeds: s.speeds.clone(),
                    strengths,
                })
            }
        };

        Ok(Scenario {
            name,
            total_length: self.cavity.total_length,
            membrane_strength: alpha,
            wavelength: self.cavity.wavelength.unwrap_or(DEFAULT_WAVELENGTH),
            pair: self.crossing.pair,
            fit_tolerance: self.crossing.fit_tolerance.unwrap_or(1e-6),
            trajectory,
            initial,
            schemes,
            integrator,
            table_nodes,
            stencil_step,
            scan,
            quantum_points: self.quantum.as_ref().and_then(|q| q.points).unwrap_or(201),
            quantum_q_max: self.quantum.as_ref().and_then(|q| q.q_max),
            spectrum: self.spectrum.clone(),
        })
    }
}

fn resolve_strength(c: &CavitySection) -> Result<f64> {
    match (c.membrane_strength, c.reflectivity) {
        (Some(a), None) => Ok(a),
        (None, Some(r)) => {
            let wavelength = c.wavelength.unwrap_or(DEFAULT_WAVELENGTH);
            if !(wavelength.is_finite() && wavelength > 0.0) {
                return Err(Error::InvalidInput(format!("bad wavelength {wavelength}")));
            }
            strength_for_reflectivity(2.0 * std::f64::consts::PI / wavelength, r)
        }
        _ => Err(Error::InvalidInput(
            "give exactly one of cavity.membrane_strength and cavity.reflectivity".into(),
        )),
    }
}

#[derive(Debug, Clone)]
pub struct ScanGrid {
    pub speeds: Vec<f64>,
    pub strengths: Vec<f64>,
}

/// A validated, default-filled scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub total_length: f64,
    pub membrane_strength: f64,
    pub wavelength: f64,
    pub pair: usize,
    pub fit_tolerance: f64,
    pub trajectory: SweepTrajectory,
    pub initial: InitialSide,
    pub schemes: Vec<Scheme>,
    pub integrator: IntegratorConfig,
    pub table_nodes: usize,
    pub stencil_step: f64,
    pub scan: Option<ScanGrid>,
    pub quantum_points: usize,
    pub quantum_q_max: Option<f64>,
    pub spectrum: Option<SpectrumSection>,
}

impl Scenario {
    pub fn with_speed(&self, speed: f64) -> Result<Self> {
        let mut s = self.clone();
        s.trajectory = SweepTrajectory::from_speed(speed, self.trajectory.half_range)?;
        Ok(s)
    }

    pub fn with_strength(&self, alpha: f64) -> Result<Self> {
        CavityConfig::new(self.total_length, alpha, 0.0)?;
        let mut s = self.clone();
        s.membrane_strength = alpha;
        Ok(s)
    }
}

/// Crossing fit plus coupling tables, reusable across schemes and speeds.
pub struct Prepared {
    pub crossing: CrossingParams,
    pub tables: SweepTables,
}

/// Fit the crossing and build the coupling tables for a scenario.
pub fn prepare(sc: &Scenario) -> Result<Prepared> {
    let crossing = fit_crossing_params(
        sc.total_length,
        sc.membrane_strength,
        sc.pair,
        sc.fit_tolerance,
    )?;
    // 2% margin keeps RK4 stage points inside the table.
    let span = 1.02 * sc.trajectory.half_range;
    let tables = SweepTables::build(
        sc.total_length,
        sc.membrane_strength,
        sc.pair,
        -span,
        span,
        sc.table_nodes,
        sc.stencil_step,
    )?;
    Ok(Prepared { crossing, tables })
}

/// Run one scheme of a prepared scenario.
pub fn run_scheme(sc: &Scenario, prep: &Prepared, scheme: Scheme) -> Result<SchemeRun> {
    let q0 = sc.trajectory.q(-sc.trajectory.half_duration);
    let series = match scheme {
        Scheme::Asoe => {
            let init = initial_amplitudes(&prep.crossing, q0, Basis::Adiabatic, sc.initial);
            integrate_asoe(&prep.crossing, &prep.tables, &sc.trajectory, init, &sc.integrator)?
        }
        Scheme::Dsoe => {
            let init = initial_amplitudes(&prep.crossing, q0, Basis::Diabatic, sc.initial);
            integrate_dsoe(&prep.crossing, &sc.trajectory, init, &sc.integrator)?
        }
        Scheme::Dfoe => {
            let init = initial_amplitudes(&prep.crossing, q0, Basis::Diabatic, sc.initial);
            integrate_dfoe(&prep.crossing, &sc.trajectory, init, &sc.integrator)?
        }
    };
    let (records, defect) = build_records(&series, &prep.tables)?;
    let last = records.last().expect("non-empty records");
    let summary = SchemeSummary {
        scheme: scheme.label().into(),
        speed_m_per_s: sc.trajectory.speed,
        membrane_strength_m: sc.membrane_strength,
        final_populations: last.populations,
        p_lz_analytic: landau_zener_probability(
            prep.crossing.delta,
            prep.crossing.gamma,
            sc.trajectory.speed,
        ),
        validity_ratio_at_crossing: validity_ratio(&prep.crossing, 0.0, sc.trajectory.speed),
        validity_ratio_at_edge: validity_ratio(
            &prep.crossing,
            sc.trajectory.half_range,
            sc.trajectory.speed,
        ),
        work_energy_residual: defect,
        final_energy_change: last.energy_change,
    };
    Ok(SchemeRun {
        scheme,
        series,
        records,
        summary,
    })
}

pub struct SchemeRun {
    pub scheme: Scheme,
    pub series: SweepSeries,
    pub records: Vec<SweepRecord>,
    pub summary: SchemeSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: String,
    pub speed_m_per_s: f64,
    pub membrane_strength_m: f64,
    pub final_populations: [f64; 2],
    pub p_lz_analytic: f64,
    pub validity_ratio_at_crossing: f64,
    pub validity_ratio_at_edge: f64,
    pub work_energy_residual: f64,
    pub final_energy_change: f64,
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub const SWEEP_CSV_HEADER: &str = "tau,q_m,c_lower_re,c_lower_im,c_upper_re,c_upper_im,\
a_left_re,a_left_im,a_right_re,a_right_im,pop_mode1,pop_mode2,\
energy_per_area_J_m2,dE_over_E0,pressure_N_m2,work_per_area_J_m2";

/// Write sweep records as CSV with fixed column order and 17-digit floats.
pub fn write_sweep_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut buf = String::with_capacity(records.len() * 400);
    buf.push_str(SWEEP_CSV_HEADER);
    buf.push('\n');
    for r in records {
        let cols = [
            r.tau,
            r.q,
            r.adiabatic[0].re,
            r.adiabatic[0].im,
            r.adiabatic[1].re,
            r.adiabatic[1].im,
            r.diabatic[0].re,
            r.diabatic[0].im,
            r.diabatic[1].re,
            r.diabatic[1].im,
            r.populations[0],
            r.populations[1],
            r.energy_per_area,
            r.energy_change,
            r.pressure,
            r.work_per_area,
        ];
        let row: Vec<String> = cols.iter().map(|&c| fmt17(c)).collect();
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Run every scheme of a scenario, writing one CSV per scheme and a JSONL
/// summary. Partial outputs are removed if anything fails.
pub fn run_scenario(sc: &Scenario, out_dir: &Path) -> Result<Vec<SchemeSummary>> {
    fs::create_dir_all(out_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<Vec<SchemeSummary>> {
        let prep = prepare(sc)?;
        let mut summaries = Vec::new();
        for &scheme in &sc.schemes {
            let run = run_scheme(sc, &prep, scheme)?;
            let path = out_dir.join(format!("{}_{}.csv", sc.name, scheme.label()));
            write_sweep_csv(&path, &run.records)?;
            written.push(path);
            summaries.push(run.summary);
        }
        let summary_path = out_dir.join(format!("{}_summary.jsonl", sc.name));
        let mut f = fs::File::create(&summary_path)?;
        written.push(summary_path);
        for s in &summaries {
            let line = serde_json::to_string(s)
                .map_err(|e| Error::Numerical(format!("summary serialisation: {e}")))?;
            writeln!(f, "{line}")?;
        }
        Ok(summaries)
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

/// Run the scan grid (speeds x membrane strengths) in parallel. Every grid
/// point writes its own files; the aggregate summary is written in grid
/// order regardless of completion order.
pub fn run_scan(sc: &Scenario, out_dir: &Path) -> Result<Vec<SchemeSummary>> {
    let grid = sc
        .scan
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config has no [scan] section".into()))?
        .clone();
    fs::create_dir_all(out_dir)?;

    let mut points = Vec::new();
    for (ai, &alpha) in grid.strengths.iter().enumerate() {
        for (vi, &speed) in grid.speeds.iter().enumerate() {
            points.push((ai, vi, alpha, speed));
        }
    }
    let results: Vec<Result<Vec<SchemeSummary>>> = points
        .par_iter()
        .map(|&(ai, vi, alpha, speed)| {
            let mut point = sc.with_strength(alpha)?.with_speed(speed)?;
            point.name = format!("{}_a{ai}_v{vi}", sc.name);
            run_scenario(&point, out_dir)
        })
        .collect();

    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    let path = out_dir.join(format!("{}_scan_summary.jsonl", sc.name));
    let mut f = fs::File::create(path)?;
    for s in &all {
        let line = serde_json::to_string(s)
            .map_err(|e| Error::Numerical(format!("summary serialisation: {e}")))?;
        writeln!(f, "{line}")?;
    }
    Ok(all)
}

/// Pair-frequency map over a displacement range (the crossing diagram).
pub fn write_spectrum_csv(sc: &Scenario, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let spec = sc.spectrum.clone().unwrap_or_default();
    let q_max = spec.q_max.unwrap_or(sc.trajectory.half_range);
    let q_min = spec.q_min.unwrap_or(-q_max);
    let points = spec.points.unwrap_or(201);
    if points < 2 || !(q_max > q_min) {
        return Err(Error::InvalidInput(format!(
            "bad spectrum range [{q_min}, {q_max}] / {points} points"
        )));
    }
    let mut buf = String::new();
    buf.push_str("q_m,k_lower_per_m,k_upper_per_m,omega_lower_rad_s,omega_upper_rad_s,gap_rad_s\n");
    let step = (q_max - q_min) / (points - 1) as f64;
    for i in 0..points {
        let q = q_min + i as f64 * step;
        let cfg = CavityConfig::new(sc.total_length, sc.membrane_strength, q)?;
        let pair = solve_pair(&cfg, sc.pair)?;
        let row = [
            q,
            pair[0].wavenumber,
            pair[1].wavenumber,
            pair[0].omega,
            pair[1].omega,
            pair[1].omega - pair[0].omega,
        ];
        let cols: Vec<String> = row.iter().map(|&c| fmt17(c)).collect();
        buf.push_str(&cols.join(","));
        buf.push('\n');
    }
    let path = out_dir.join(format!("{}_spectrum.csv", sc.name));
    fs::write(&path, buf)?;
    Ok(path)
}

/// Quantum Hamiltonian coefficient table over the sweep range, with the
/// numeric stencil coupling alongside the two-level analytic one.
pub fn write_quantum_csv(sc: &Scenario, out_dir: &Path) -> Result<(PathBuf, bool)> {
    fs::create_dir_all(out_dir)?;
    let crossing = fit_crossing_params(
        sc.total_length,
        sc.membrane_strength,
        sc.pair,
        sc.fit_tolerance,
    )?;
    let q_max = sc.quantum_q_max.unwrap_or(sc.trajectory.half_range);
    let points = sc.quantum_points.max(2);
    let step = 2.0 * q_max / (points - 1) as f64;
    let mut buf = String::new();
    buf.push_str(
        "q_m,gamma_cap_rad_s,g12_analytic_per_m,g12_numeric_per_m,\
dln_omega1_dq_per_m,dln_omega2_dq_per_m,ratio_sqrt_w2_w1,\
ad_single_squeeze_per_m,ad_transfer_per_m,ad_two_mode_squeeze_per_m,\
di_transfer_per_m,di_two_mode_squeeze_per_m,di_single_squeeze_per_m\n",
    );
    let mut any_suspect = false;
    for i in 0..points {
        let q = -q_max + i as f64 * step;
        let k = hamiltonian_coefficients(&crossing, q)?;
        any_suspect |= k.expansion_suspect;
        let numeric = crate::couplings::coupling_matrices(
            sc.total_length,
            sc.membrane_strength,
            sc.pair,
            q,
            sc.stencil_step,
        )?
        .g[0][1];
        let row = [
            q,
            k.gamma_cap,
            k.g12,
            numeric,
            k.dln_omega1_dq,
            k.dln_omega2_dq,
            k.ratio_sqrt,
            k.adiabatic_single_squeeze,
            k.adiabatic_transfer,
            k.adiabatic_two_mode_squeeze,
            k.diabatic_transfer,
            k.diabatic_two_mode_squeeze,
            k.diabatic_single_squeeze,
        ];
        let cols: Vec<String> = row.iter().map(|&c| fmt17(c)).collect();
        buf.push_str(&cols.join(","));
        buf.push('\n');
    }
    let path = out_dir.join(format!("{}_quantum.csv", sc.name));
    fs::write(&path, buf)?;
    Ok((path, any_suspect))
}

/// Reflectivity of the scenario's membrane at its reference wavelength.
pub fn scenario_reflectivity(sc: &Scenario) -> Result<f64> {
    membrane_reflectivity(2.0 * std::f64::consts::PI / sc.wavelength, sc.membrane_strength)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareMetrics {
    pub rows: usize,
    pub max_energy_diff: f64,
    pub rms_energy_diff: f64,
    pub max_pop_diff: [f64; 2],
    pub rms_pop_diff: [f64; 2],
}

/// Point-by-point difference metrics between two sweep CSVs. The tau grids
/// must match exactly.
pub fn compare_runs(path_a: &Path, path_b: &Path) -> Result<CompareMetrics> {
    let a = read_sweep_csv(path_a)?;
    let b = read_sweep_csv(path_b)?;
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "{} rows vs {} rows",
            a.len(),
            b.len()
        )));
    }
    let mut m = CompareMetrics {
        rows: a.len(),
        max_energy_diff: 0.0,
        rms_energy_diff: 0.0,
        max_pop_diff: [0.0; 2],
        rms_pop_diff: [0.0; 2],
    };
    let mut acc_e = 0.0;
    let mut acc_p = [0.0; 2];
    for (ra, rb) in a.iter().zip(&b) {
        if ra.tau != rb.tau {
            return Err(Error::GridMismatch(format!(
                "tau grids differ: {} vs {}",
                ra.tau, rb.tau
            )));
        }
        let de = (ra.energy_change - rb.energy_change).abs();
        m.max_energy_diff = m.max_energy_diff.max(de);
        acc_e += de * de;
        for i in 0..2 {
            let dp = (ra.populations[i] - rb.populations[i]).abs();
            m.max_pop_diff[i] = m.max_pop_diff[i].max(dp);
            acc_p[i] += dp * dp;
        }
    }
    let n = a.len() as f64;
    m.rms_energy_diff = (acc_e / n).sqrt();
    m.rms_pop_diff = [(acc_p[0] / n).sqrt(), (acc_p[1] / n).sqrt()];
    Ok(m)
}

/// Subset of a sweep CSV row that comparisons need.
#[derive(Debug, Clone, Copy)]
pub struct CsvRow {
    pub tau: f64,
    pub populations: [f64; 2],
    pub energy_change: f64,
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty file", path.display())))?;
    if header != SWEEP_CSV_HEADER {
        return Err(Error::InvalidInput(format!(
            "{}: unexpected CSV header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 16 {
            return Err(Error::InvalidInput(format!(
                "{}: row {} has {} columns",
                path.display(),
                ln + 2,
                cols.len()
            )));
        }
        let parse = |i: usize| -> Result<f64> {
            cols[i].parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("{}: row {}: {e}", path.display(), ln + 2))
            })
        };
        rows.push(CsvRow {
            tau: parse(0)?,
            populations: [parse(10)?, parse(11)?],
            energy_change: parse(13)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct StepCheck {
    pub scheme: String,
    pub max_pop_shift: f64,
    pub max_energy_shift: f64,
}

/// Step-halving (Richardson) validation: reintegrate every scheme at double
/// resolution and report how much the final populations and the energy curve
/// endpoints move. Converged setups sit far below 1e-6.
pub fn step_halving_check(sc: &Scenario) -> Result<Vec<StepCheck>> {
    let prep = prepare(sc)?;
    let mut fine_sc = sc.clone();
    fine_sc.integrator.steps_per_fastest_period = sc.integrator.steps_per_fastest_period * 2;
    let mut out = Vec::new();
    for &scheme in &sc.schemes {
        let coarse = run_scheme(sc, &prep, scheme)?;
        let fine = run_scheme(&fine_sc, &prep, scheme)?;
        let rc = coarse.records.last().unwrap();
        let rf = fine.records.last().unwrap();
        let max_pop_shift = (rc.populations[0] - rf.populations[0])
            .abs()
            .max((rc.populations[1] - rf.populations[1]).abs());
        let max_energy_shift = (rc.energy_change - rf.energy_change).abs();
        out.push(StepCheck {
            scheme: scheme.label().into(),
            max_pop_shift,
            max_energy_shift,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_toml() -> String {
        r#"
name = "t"
[cavity]
total_length = 100e-6
membrane_strength = 1.7e-6
[crossing]
pair = 128
[sweep]
speed = 20000.0
half_range = 1e-7
[run]
schemes = ["dfoe"]
"#
        .to_string()
    }

    #[test]
    fn parse_and_resolve_defaults() {
        let spec = ScenarioSpec::from_toml_str(&base_toml()).unwrap();
        let sc = spec.resolve().unwrap();
        assert_eq!(sc.pair, 128);
        assert_eq!(sc.integrator.steps_per_fastest_period, 40);
        assert_eq!(sc.table_nodes, 2001);
        assert_eq!(sc.schemes, vec![Scheme::Dfoe]);
        assert!(matches!(sc.initial, InitialSide::Right));
    }

    #[test]
    fn reflectivity_inversion_round_trips() {
        let toml = base_toml().replace(
            "membrane_strength = 1.7e-6",
            "reflectivity = 0.98\nwavelength = 785e-9",
        );
        let sc = ScenarioSpec::from_toml_str(&toml).unwrap().resolve().unwrap();
        let r = scenario_reflectivity(&sc).unwrap();
        approx::assert_relative_eq!(r, 0.98, epsilon = 1e-12);
    }

    #[test]
    fn validation_failures() {
        // Both speed and duration.
        let toml = base_toml().replace("speed = 20000.0", "speed = 1.0\nhalf_duration = 1.0");
        assert!(ScenarioSpec::from_toml_str(&toml).unwrap().resolve().is_err());
        // Neither.
        let toml = base_toml().replace("speed = 20000.0", "");
        assert!(ScenarioSpec::from_toml_str(&toml).unwrap().resolve().is_err());
        // Empty schemes.
        let toml = base_toml().replace("schemes = [\"dfoe\"]", "schemes = []");
        assert!(ScenarioSpec::from_toml_str(&toml).unwrap().resolve().is_err());
        // Unknown scheme.
        let toml = base_toml().replace("dfoe", "rk45");
        assert!(ScenarioSpec::from_toml_str(&toml).unwrap().resolve().is_err());
        // Unknown key caught by the parser.
        let toml = base_toml() + "\n[typo]\nx = 1\n";
        assert!(ScenarioSpec::from_toml_str(&toml).is_err());
        // Both strength and reflectivity.
        let toml = base_toml().replace(
            "membrane_strength = 1.7e-6",
            "membrane_strength = 1.7e-6\nreflectivity = 0.9",
        );
        assert!(ScenarioSpec::from_toml_str(&toml).unwrap().resolve().is_err());
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ScenarioSpec::from_toml_str(&base_toml()).unwrap();
        let sc = spec.resolve().unwrap();
        let s1 = run_scenario(&sc, dir.path()).unwrap();
        let bytes1 = fs::read(dir.path().join("t_dfoe.csv")).unwrap();
        let rows = read_sweep_csv(&dir.path().join("t_dfoe.csv")).unwrap();
        assert!(rows.len() > 100);
        assert_eq!(rows[0].tau, -1.0);
        approx::assert_relative_eq!(rows.last().unwrap().tau, 1.0, epsilon = 1e-9);

        // Re-run into a second directory: byte-identical output.
        let dir2 = tempfile::tempdir().unwrap();
        let s2 = run_scenario(&sc, dir2.path()).unwrap();
        let bytes2 = fs::read(dir2.path().join("t_dfoe.csv")).unwrap();
        assert_eq!(bytes1, bytes2);
        assert_eq!(
            serde_json::to_string(&s1).unwrap(),
            serde_json::to_string(&s2).unwrap()
        );

        // Self-comparison is exactly zero.
        let m = compare_runs(&dir.path().join("t_dfoe.csv"), &dir2.path().join("t_dfoe.csv"))
            .unwrap();
        assert_eq!(m.max_energy_diff, 0.0);
        assert_eq!(m.max_pop_diff, [0.0, 0.0]);
    }

    #[test]
    fn failed_runs_leave_no_partial_output() {
        let dir = tempfile::tempdir().unwrap();
        let toml = base_toml().replace("pair = 128", "pair = 128\nfit_tolerance = 1e-12");
        let spec = ScenarioSpec::from_toml_str(&toml).unwrap();
        let sc = spec.resolve().unwrap();
        // Impossible fit tolerance: the run fails after directories exist.
        assert!(run_scenario(&sc, dir.path()).is_err());
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn step_halving_is_quiet_for_dfoe() {
        let spec = ScenarioSpec::from_toml_str(&base_toml()).unwrap();
        let sc = spec.resolve().unwrap();
        let checks = step_halving_check(&sc).unwrap();
        assert_eq!(checks.len(), 1);
        assert!(checks[0].max_pop_shift < 1e-6);
        assert!(checks[0].max_energy_shift < 1e-6);
    }
}
