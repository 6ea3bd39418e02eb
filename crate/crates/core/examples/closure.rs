//! Work-energy bookkeeping demo: sweep the reference crossing at 5000 m/s
//! and report how well the integrated radiation-pressure work tracks the
//! field energy change.

use double_cavity::couplings::{fit_crossing_params, SweepTables};
use double_cavity::dynamics::*;
use double_cavity::observables::build_records;

fn main() {
    let c = fit_crossing_params(100e-6, 1.7e-6, 128, 1e-6).unwrap();
    let tables = SweepTables::build(100e-6, 1.7e-6, 128, -1.02e-7, 1.02e-7, 513, 1e-12).unwrap();
    let traj = SweepTrajectory::from_speed(5000.0, 1e-7).unwrap();
    let init = initial_amplitudes(&c, traj.q(-traj.half_duration), Basis::Adiabatic, InitialSide::Right);
    let cfg = IntegratorConfig { steps_per_fastest_period: 96, output_decimation: 10 };
    let series = integrate_asoe(&c, &tables, &traj, init, &cfg).unwrap();
    let (records, defect) = build_records(&series, &tables).unwrap();

    println!("worst |dE - W| / E0 = {defect:.3e} over {} samples", records.len());
    for j in 0..11 {
        let r = &records[j * (records.len() - 1) / 10];
        println!(
            "tau = {:+.1}  dE/E0 = {:+.4e}  W/E0 = {:+.4e}  P = {:+.4e} N/m^2",
            r.tau,
            r.energy_change,
            r.work_per_area / records[0].energy_per_area,
            r.pressure
        );
    }
}
