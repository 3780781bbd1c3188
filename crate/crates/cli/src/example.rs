use anyhow::{anyhow, bail};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stabex_core::cct::{stability_verdict, Verdict};
use stabex_core::dynamics::{Scheme, SystemModel};
use stabex_core::energy::{EnergyFunction, QuadraticLyapunov, ThreeMachineEnergy};
use stabex_core::equilibria::{
    closest_uep, enumerate_equilibria, find_equilibrium, mark_boundary, EquilibriumPoint, ShootingOptions,
};
use stabex_core::expansion::{marching_squares, ExpandedFunction};
use stabex_core::grid::{par_map, Bounds, Grid};
use stabex_core::models::{Benchmark3d, ThreeMachine};

use crate::config::RunConfig;
use crate::output::{ensure_dir, num, write_csv, write_json};
use crate::{ExampleArgs, Failure, Outcome};

#[derive(Serialize)]
struct CurveSummary {
    iteration: usize,
    polylines: usize,
    points: usize,
    admitted_nodes: usize,
}

#[derive(Serialize)]
struct Soundness {
    candidates: usize,
    checked: usize,
    stable: usize,
    unstable: usize,
    inconclusive: usize,
}

#[derive(Serialize)]
struct Summary {
    example: String,
    level: f64,
    level_source: String,
    h: f64,
    scheme: Scheme,
    expansions: Vec<usize>,
    asep: Vec<f64>,
    closest_uep: Option<EquilibriumPoint>,
    curves: Vec<CurveSummary>,
    soundness: Option<Soundness>,
    seed: u64,
}

pub fn run(args: &ExampleArgs, cfg: &RunConfig) -> Outcome {
    match args.name.as_str() {
        "three-machine" => three_machine(args, cfg),
        "benchmark-3d" => benchmark_3d(args, cfg),
        other => Err(Failure::usage(anyhow!("unknown example '{other}' (expected three-machine or benchmark-3d)"))),
    }
}

fn parse_level(arg: Option<&str>, default: f64, closest: Option<f64>) -> anyhow::Result<(f64, String)> {
    match arg {
        None => Ok((default, "default".into())),
        Some("closest-uep") => closest.map(|v| (v, "closest-uep".into())).ok_or_else(|| anyhow!("no closest UEP for this example")),
        Some(s) => {
            let v: f64 = s.parse().map_err(|_| anyhow!("--level expects a number or 'closest-uep', got '{s}'"))?;
            if !v.is_finite() {
                bail!("--level must be finite");
            }
            Ok((v, "given".into()))
        }
    }
}

/// Seed component of `{V_m < l}` on the grid for every `m`.
fn components(grid: &Grid, seqs: &[Vec<f64>], level: f64, seed: &[f64], m: usize) -> Vec<Vec<bool>> {
    let s = grid.nearest(seed);
    (0..=m)
        .map(|k| {
            let inside: Vec<bool> = seqs.iter().map(|v| v[k] < level).collect();
            grid.component(&inside, s)
        })
        .collect()
}

/// Simulates a seeded sample of the nodes admitted at `m` but not at 0.
fn soundness(model: &dyn SystemModel, grid: &Grid, comps: &[Vec<bool>], m: usize, x_s: &[f64], n: usize, seed: u64) -> Soundness {
    let fresh: Vec<usize> = (0..grid.len()).filter(|&k| comps[m][k] && !comps[0][k]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = n.min(fresh.len());
    let mut picked: Vec<usize> = sample(&mut rng, fresh.len(), take).into_iter().map(|i| fresh[i]).collect();
    picked.sort_unstable();
    let opts = stabex_core::cct::VerdictOptions::default();
    let verdicts = par_map(picked.len(), |i| stability_verdict(model, &grid.point(picked[i]), x_s, &opts));
    let mut s = Soundness { candidates: fresh.len(), checked: take, stable: 0, unstable: 0, inconclusive: 0 };
    for v in verdicts {
        match v {
            Ok(Verdict::Stable) => s.stable += 1,
            Ok(Verdict::Unstable) => s.unstable += 1,
            Err(_) => s.inconclusive += 1,
        }
    }
    s
}

fn three_machine(args: &ExampleArgs, cfg: &RunConfig) -> Outcome {
    let model = ThreeMachine;
    let energy = ThreeMachineEnergy;
    let (lo, hi) = ThreeMachine::area_of_interest();
    let bounds = Bounds::new(lo.to_vec(), hi.to_vec()).map_err(Failure::analysis)?;
    let mut found = enumerate_equilibria(&model, &bounds, 32).map_err(Failure::analysis)?;
    let asep = find_equilibrium(&model, &[0.0, 0.0], 1e-12).map_err(Failure::analysis)?;
    mark_boundary(&model, &mut found.points, &asep, &ShootingOptions::default());
    let closest = closest_uep(&energy, &asep, &found.points).map_err(Failure::analysis)?;
    let (level, source) = parse_level(args.level.as_deref(), 1.0, closest.energy).map_err(Failure::usage)?;

    let scheme = cfg.scheme.unwrap_or(Scheme::Rk2);
    let mut its = args.expansions.clone().unwrap_or_else(|| vec![5, 8]);
    its.retain(|&m| m > 0);
    its.sort_unstable();
    its.dedup();
    let m = its.last().copied().unwrap_or(0);
    let resolution = args.resolution.unwrap_or(200);
    let grid = Grid::uniform(bounds, resolution).map_err(Failure::usage)?;
    let exp = ExpandedFunction::new(&energy, &model, scheme, cfg.h, m).map_err(Failure::usage)?;
    let seqs = exp.grid_sequences(&grid, m).map_err(Failure::analysis)?;
    let comps = components(&grid, &seqs, level, &asep.state, m);

    ensure_dir(&cfg.output).map_err(Failure::usage)?;
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &k in std::iter::once(&0).chain(&its) {
        let values: Vec<f64> = seqs.iter().map(|v| v[k]).collect();
        let lines = marching_squares(&grid, &values, level);
        for (c, line) in lines.iter().enumerate() {
            for p in &line.points {
                rows.push(vec![k.to_string(), c.to_string(), num(p[0]), num(p[1])]);
            }
        }
        curves.push(CurveSummary {
            iteration: k,
            polylines: lines.len(),
            points: lines.iter().map(|l| l.len()).sum(),
            admitted_nodes: comps[k].iter().filter(|&&b| b).count(),
        });
    }
    write_csv(&cfg.output.join("contours.csv"), &["iteration", "curve", "x1", "x2"], &rows).map_err(Failure::analysis)?;

    let eq_rows: Vec<Vec<String>> = found
        .points
        .iter()
        .map(|p| {
            vec![num(p.state[0]), num(p.state[1]), p.kind.to_string(), format!("{:?}", p.on_boundary), num(energy.value(&p.state))]
        })
        .collect();
    write_csv(&cfg.output.join("equilibria.csv"), &["x1", "x2", "kind", "on_boundary", "energy"], &eq_rows).map_err(Failure::analysis)?;

    let sound = (m > 0 && args.samples > 0).then(|| soundness(&model, &grid, &comps, m, &asep.state, args.samples, cfg.seed));
    let summary = Summary {
        example: "three-machine".into(),
        level,
        level_source: source,
        h: cfg.h,
        scheme,
        expansions: its,
        asep: asep.state.clone(),
        closest_uep: Some(closest.with_energy(&energy)),
        curves,
        soundness: sound,
        seed: cfg.seed,
    };
    write_json(&cfg.output.join("summary.json"), &summary).map_err(Failure::analysis)?;
    print_summary(&summary);
    Ok(())
}

fn benchmark_3d(args: &ExampleArgs, cfg: &RunConfig) -> Outcome {
    let model = Benchmark3d;
    let asep = find_equilibrium(&model, &Benchmark3d::ROUNDED_ASEP, 1e-12).map_err(Failure::analysis)?;
    let base = QuadraticLyapunov::new(asep.state.clone());
    let (level, source) = parse_level(args.level.as_deref(), Benchmark3d::INITIAL_LEVEL, None).map_err(Failure::usage)?;
    // Level-surface snapshots of this benchmark are 0.05 s apart.
    let h = args.h.unwrap_or(0.05);
    let scheme = cfg.scheme.unwrap_or(Scheme::Rk2);
    let mut its = args.expansions.clone().unwrap_or_else(|| vec![1, 2]);
    its.retain(|&m| m > 0);
    its.sort_unstable();
    its.dedup();
    let m = its.last().copied().unwrap_or(0);
    let half = 1.5 * level.abs().sqrt().max(0.1);
    let bounds = Bounds::new(asep.state.iter().map(|c| c - half).collect(), asep.state.iter().map(|c| c + half).collect())
        .map_err(Failure::usage)?;
    let grid = Grid::uniform(bounds, args.resolution.unwrap_or(40)).map_err(Failure::usage)?;
    let exp = ExpandedFunction::new(&base, &model, scheme, h, m).map_err(Failure::usage)?;
    let seqs = exp.grid_sequences(&grid, m).map_err(Failure::analysis)?;
    let comps = components(&grid, &seqs, level, &asep.state, m);

    ensure_dir(&cfg.output).map_err(Failure::usage)?;
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &k in std::iter::once(&0).chain(&its) {
        let pts = surface_points(&grid, &seqs, k, level);
        for p in &pts {
            rows.push(vec![k.to_string(), num(p[0]), num(p[1]), num(p[2])]);
        }
        curves.push(CurveSummary { iteration: k, polylines: 0, points: pts.len(), admitted_nodes: comps[k].iter().filter(|&&b| b).count() });
    }
    write_csv(&cfg.output.join("surface.csv"), &["iteration", "x", "y", "z"], &rows).map_err(Failure::analysis)?;
    let sound = (m > 0 && args.samples > 0).then(|| soundness(&model, &grid, &comps, m, &asep.state, args.samples, cfg.seed));
    let summary = Summary {
        example: "benchmark-3d".into(),
        level,
        level_source: source,
        h,
        scheme,
        expansions: its,
        asep: asep.state.clone(),
        closest_uep: None,
        curves,
        soundness: sound,
        seed: cfg.seed,
    };
    write_json(&cfg.output.join("summary.json"), &summary).map_err(Failure::analysis)?;
    print_summary(&summary);
    Ok(())
}

/// Linear interpolation of `V_k = l` along every grid edge with a sign change.
fn surface_points(grid: &Grid, seqs: &[Vec<f64>], k: usize, level: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    let mut stride = 1;
    for axis in 0..3 {
        for a in 0..grid.len() {
            if grid.multi_index(a)[axis] + 1 >= grid.counts[axis] {
                continue;
            }
            let b = a + stride;
            let (va, vb) = (seqs[a][k] - level, seqs[b][k] - level);
            if va.is_finite() && vb.is_finite() && (va < 0.0) != (vb < 0.0) {
                let s = va / (va - vb);
                let (pa, pb) = (grid.point(a), grid.point(b));
                out.push([0, 1, 2].map(|d| pa[d] + s * (pb[d] - pa[d])));
            }
        }
        stride *= grid.counts[axis];
    }
    out
}

fn print_summary(s: &Summary) {
    println!("{}: level {:.5} ({}), scheme {}, h {}", s.example, s.level, s.level_source, s.scheme, s.h);
    if let Some(c) = &s.closest_uep {
        println!("closest UEP ({:.5}, {:.5}), V = {:.5}", c.state[0], c.state[1], c.energy.unwrap_or(f64::NAN));
    }
    for c in &s.curves {
        println!("M = {}: {} admitted grid nodes, {} contour points", c.iteration, c.admitted_nodes, c.points);
    }
    if let Some(x) = &s.soundness {
        println!("soundness: {} of {} new nodes simulated, {} stable, {} unstable, {} inconclusive", x.checked, x.candidates, x.stable, x.unstable, x.inconclusive);
    }
}
