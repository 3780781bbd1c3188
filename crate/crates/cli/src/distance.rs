use anyhow::anyhow;
use stabex_core::cct::{fault_label, sbs_cct, sbs_trajectory};
use stabex_core::direct::{critical_value, post_fault_energy, real_exit_point, BcuOptions};
use stabex_core::dynamics::Scheme;
use stabex_core::expansion::{exit_distances, ExpandedFunction, DEFAULT_BOUNDARY_ITERATIONS};
use stabex_core::grid::par_map;
use stabex_core::models::FaultScenario;

use crate::config::{scenarios, RunConfig};
use crate::output::{ensure_dir, num, write_csv};
use crate::{Failure, Outcome};

fn curve(sc: &FaultScenario, cfg: &RunConfig, scheme: Scheme, m: usize) -> stabex_core::Result<Vec<f64>> {
    let sbs = cfg.sbs_options();
    let fault_on = sbs_trajectory(sc, &sbs)?;
    let energy = post_fault_energy(sc);
    let truth = sbs_cct(sc, &fault_on, &energy, &sbs)?;
    let real = real_exit_point(&fault_on.trajectory, truth.cct)?;
    let cv = critical_value(sc, &fault_on.trajectory, &energy, cfg.method, &BcuOptions::default())?;
    let exp = ExpandedFunction::new(&energy, &sc.post_fault, scheme, cfg.h, m)?;
    exit_distances(&real, &fault_on.trajectory, &exp, cv.v_cr)
}

/// Wide CSV: one row per iteration, one column per fault, then the average
/// over the faults that succeeded.
pub fn run(cfg: &RunConfig) -> Outcome {
    let scenarios = scenarios(cfg).map_err(Failure::usage)?;
    let scheme = cfg.scheme.unwrap_or(Scheme::Rk2);
    let m = cfg.iterations.unwrap_or(DEFAULT_BOUNDARY_ITERATIONS);
    let results = par_map(scenarios.len(), |k| curve(&scenarios[k], cfg, scheme, m));

    let mut header = vec!["iteration".to_string()];
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (sc, r) in scenarios.iter().zip(&results) {
        match r {
            Ok(d) => {
                header.push(fault_label(sc));
                ok.push(d);
            }
            Err(e) => {
                eprintln!("fault {}: {e}", fault_label(sc));
                failed.push(fault_label(sc));
            }
        }
    }
    header.push("average".into());
    let rows: Vec<Vec<String>> = (0..=m)
        .map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(ok.iter().map(|d| num(d[i])));
            let avg = if ok.is_empty() { f64::NAN } else { ok.iter().map(|d| d[i]).sum::<f64>() / ok.len() as f64 };
            row.push(num(avg));
            row
        })
        .collect();
    ensure_dir(&cfg.output).map_err(Failure::usage)?;
    let path = write_csv(&cfg.output.join("distance_curve.csv"), &header, &rows).map_err(Failure::analysis)?;
    println!("wrote {}", path.display());
    if !failed.is_empty() {
        return Err(Failure::analysis(anyhow!("faults failed: {}", failed.join(", "))));
    }
    Ok(())
}
