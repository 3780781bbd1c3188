use stabex_core::cct::{build_report, ExpansionConfig};
use stabex_core::direct::BcuOptions;
use stabex_core::dynamics::Scheme;
use stabex_core::expansion::DEFAULT_CCT_ITERATIONS;

use crate::config::{scenarios, RunConfig};
use crate::output::{ensure_dir, write_csv, write_json};
use crate::{AssessArgs, Failure, Outcome};

pub fn run(args: &AssessArgs, cfg: &RunConfig) -> Outcome {
    let scenarios = scenarios(cfg).map_err(Failure::usage)?;
    let expansion = ExpansionConfig {
        scheme: cfg.scheme.unwrap_or(Scheme::Rk3),
        h: cfg.h,
        iterations: cfg.iterations.unwrap_or(DEFAULT_CCT_ITERATIONS),
    };
    let report = build_report(&scenarios, cfg.method, &expansion, &cfg.sbs_options(), &BcuOptions::default());

    ensure_dir(&cfg.output).map_err(Failure::usage)?;
    let (header, rows) = report.table(!args.no_timings);
    let csv = write_csv(&cfg.output.join("report.csv"), &header, &rows).map_err(Failure::analysis)?;
    let json = write_json(&cfg.output.join("report.json"), &report).map_err(Failure::analysis)?;

    for r in &report.rows {
        match (&r.sbs, &r.direct, &r.failure) {
            (_, _, Some(f)) => println!("fault {}: FAILED ({f})", r.fault),
            (Some(s), Some(d), None) => {
                let last = r.expansion.last().map(|e| format!(", N={} {:.4} s ({:+.2}%)", e.iteration, e.cct, e.error_pct));
                println!("fault {}: SBS {:.4} s, {} {:.4} s ({:+.2}%){}", r.fault, s.cct, d.method, d.cct, d.error_pct, last.unwrap_or_default());
            }
            _ => {}
        }
    }
    println!("wrote {} and {}", csv.display(), json.display());
    if report.aggregate.failed > 0 {
        return Err(Failure::analysis(anyhow::anyhow!("{} of {} fault pipelines failed", report.aggregate.failed, report.rows.len())));
    }
    Ok(())
}
