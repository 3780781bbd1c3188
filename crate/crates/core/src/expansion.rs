//! Expansion of energy-function estimates by composition with the one-step
//! Runge-Kutta map of the post-fault system: `V_k(x) = V_{k-1}(N_h^f(x))`.
//!
//! `V_M` is never built symbolically. Each evaluation pushes the query point
//! `M` steps forward and evaluates the base function there.

use std::collections::HashMap;
use web_time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dynamics::{RkScheme, RkWorkspace, Scheme, SystemModel, Trajectory};
use crate::energy::EnergyFunction;
use crate::error::{Error, Result};
use crate::grid::{Bounds, Grid};

/// Dense-output resolution of crossing times.
pub const CROSSING_TOL: f64 = 1e-6;

/// Scan step along a trajectory before bisection.
pub const SCAN_STEP: f64 = 2e-3;

/// Image separation that marks a scan interval as possibly straddling the
/// stable manifold of a boundary UEP.
pub const IMAGE_GAP: f64 = 0.25;

/// Share of a parent interval's image gap that a half must keep to be
/// searched further. Smooth stretches split the gap evenly; a tear keeps
/// almost all of it on one side.
const TEAR_SHARE: f64 = 0.6;

pub const DEFAULT_H: f64 = 0.2;
pub const DEFAULT_BOUNDARY_ITERATIONS: usize = 9;
pub const DEFAULT_CCT_ITERATIONS: usize = 6;

/// `V_M` as a lazy composition.
pub struct ExpandedFunction<'a> {
    pub base: &'a dyn EnergyFunction,
    pub model: &'a dyn SystemModel,
    pub scheme: Scheme,
    pub h: f64,
    pub max_iterations: usize,
    tableau: RkScheme,
}

impl<'a> ExpandedFunction<'a> {
    pub fn new(base: &'a dyn EnergyFunction, model: &'a dyn SystemModel, scheme: Scheme, h: f64, max_iterations: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain("expansion step h must be positive".into()));
        }
        if base.dim() != model.dim() {
            return Err(Error::Domain("energy and model dimensions differ".into()));
        }
        Ok(Self { base, model, scheme, h, max_iterations, tableau: scheme.tableau() })
    }

    fn check(&self, m: usize) -> Result<()> {
        if m > self.max_iterations {
            return Err(Error::Domain(format!("iteration {m} beyond M = {}", self.max_iterations)));
        }
        Ok(())
    }

    fn advance(&self, ws: &mut RkWorkspace, y: &mut [f64], iteration: usize) -> Result<()> {
        ws.step_in_place(self.model, &self.tableau, y, self.h).map_err(|e| match e {
            Error::NumericalBlowUp { stage } => Error::ExpansionBlowUp { iteration, stage },
            other => other,
        })
    }

    /// `V_m(x)`.
    pub fn evaluate(&self, x: &[f64], m: usize) -> Result<f64> {
        if m == 0 {
            self.check(m)?;
            return Ok(self.base.value(x));
        }
        Ok(self.base.value(&self.image(x, m)?))
    }

    /// `N_h^f` applied `m` times to `x`.
    pub fn image(&self, x: &[f64], m: usize) -> Result<Vec<f64>> {
        self.check(m)?;
        let mut ws = RkWorkspace::new(x.len(), self.tableau.stages());
        let mut y = x.to_vec();
        for i in 1..=m {
            self.advance(&mut ws, &mut y, i)?;
        }
        Ok(y)
    }

    /// `[V_0(x), ..., V_m(x)]` in a single pass.
    pub fn sequence(&self, x: &[f64], m: usize) -> Result<Vec<f64>> {
        self.check(m)?;
        let mut ws = RkWorkspace::new(x.len(), self.tableau.stages());
        let mut y = x.to_vec();
        let mut out = Vec::with_capacity(m + 1);
        out.push(self.base.value(&y));
        for i in 1..=m {
            self.advance(&mut ws, &mut y, i)?;
            out.push(self.base.value(&y));
        }
        Ok(out)
    }

    /// [`Self::sequence`] at every grid node; blown-up compositions count as
    /// `+inf` from the failing iteration on.
    pub fn grid_sequences(&self, grid: &Grid, m: usize) -> Result<Vec<Vec<f64>>> {
        self.check(m)?;
        Ok(grid.evaluate(|x| {
            self.sequence(x, m).unwrap_or_else(|e| {
                let failed = match e {
                    Error::ExpansionBlowUp { iteration, .. } => iteration,
                    _ => 0,
                };
                let mut v = self.sequence(x, failed.saturating_sub(1)).unwrap_or_default();
                v.resize(m + 1, f64::INFINITY);
                v
            })
        }))
    }
}

/// `∂S_M = {x | V_M(x) = V_cr}`.
pub struct ExpandedBoundary<'a> {
    pub expanded: ExpandedFunction<'a>,
    pub v_cr: f64,
}

impl ExpandedBoundary<'_> {
    pub fn iterations(&self) -> usize {
        self.expanded.max_iterations
    }

    /// `V_M(x) - V_cr`; negative inside.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        Ok(self.expanded.evaluate(x, self.iterations())? - self.v_cr)
    }

    /// `V_M(x) < V_cr`. States whose composition blows up are outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.margin(x).map(|m| m < 0.0).unwrap_or(false)
    }
}

/// Builds the improved boundary estimate from a critical value.
pub fn improve_boundary<'a>(
    base: &'a dyn EnergyFunction,
    model: &'a dyn SystemModel,
    v_cr: f64,
    m: usize,
    h: f64,
    scheme: Scheme,
) -> Result<ExpandedBoundary<'a>> {
    if m == 0 {
        return Err(Error::Domain("boundary expansion needs M >= 1".into()));
    }
    Ok(ExpandedBoundary { expanded: ExpandedFunction::new(base, model, scheme, h, m)?, v_cr })
}

struct Probe {
    t: f64,
    image: Vec<f64>,
    above: bool,
}

/// First `t >= t_start` with `V_m(x_F(t)) >= V_cr`, bisected on the dense
/// output to [`CROSSING_TOL`].
///
/// Near the stable manifold of a boundary UEP the band where `V_m >= V_cr`
/// narrows like `e^{-λ m h}` and can slip between scan samples. Intervals
/// whose endpoint images are torn apart are therefore searched further.
pub fn boundary_crossing(traj: &Trajectory, exp: &ExpandedFunction, v_cr: f64, m: usize, t_start: f64) -> Result<(f64, Vec<f64>)> {
    let t_end = traj.t_end();
    if t_start > t_end {
        return Err(Error::NoCrossing);
    }
    let probe = |t: f64| -> Result<Probe> {
        let image = exp.image(&traj.interpolate(t), m)?;
        let above = exp.base.value(&image) >= v_cr;
        Ok(Probe { t, image, above })
    };
    let mut prev = probe(t_start)?;
    if prev.above {
        return Ok((t_start, traj.interpolate(t_start)));
    }
    // scan over the trajectory's own nodes, subdivided to at most SCAN_STEP
    let times = traj.times();
    let mut k = times.partition_point(|&t| t <= t_start);
    loop {
        let node = if k < times.len() { times[k] } else { t_end };
        let pieces = ((node - prev.t) / SCAN_STEP).ceil().max(1.0) as usize;
        let width = (node - prev.t) / pieces as f64;
        let base = prev.t;
        for j in 1..=pieces {
            let next = probe(if j == pieces { node } else { base + j as f64 * width })?;
            let hit = if next.above {
                Some((prev.t, next.t))
            } else {
                let gap = euclid(&prev.image, &next.image);
                if gap > IMAGE_GAP {
                    search_tear(&probe, &prev, &next, gap)?
                } else {
                    None
                }
            };
            if let Some((mut lo, mut hi)) = hit {
                while hi - lo > CROSSING_TOL {
                    let mid = 0.5 * (lo + hi);
                    if probe(mid)?.above {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Ok((hi, traj.interpolate(hi)));
            }
            prev = next;
        }
        if k >= times.len() || node >= t_end {
            return Err(Error::NoCrossing);
        }
        k += 1;
    }
}

/// Earliest `(below, above)` bracket inside `(a, b)`, both ends below,
/// following the halves that keep the image tear.
fn search_tear<P>(probe: &P, a: &Probe, b: &Probe, gap: f64) -> Result<Option<(f64, f64)>>
where
    P: Fn(f64) -> Result<Probe>,
{
    if b.t - a.t <= CROSSING_TOL {
        return Ok(None);
    }
    let mid = probe(0.5 * (a.t + b.t))?;
    if mid.above {
        return Ok(Some((a.t, mid.t)));
    }
    for (l, r) in [(a, &mid), (&mid, b)] {
        let g = euclid(&l.image, &r.image);
        if g > IMAGE_GAP && g > TEAR_SHARE * gap {
            if let Some(hit) = search_tear(probe, l, r, g)? {
                return Ok(Some(hit));
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CctStep {
    pub iteration: usize,
    pub cct: f64,
    /// Wall time since the start of the expansion loop, seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CctSequence {
    /// `t_0, ..., t_M` (fewer if a stage failed).
    pub steps: Vec<CctStep>,
    /// Message of the error that cut the sequence short.
    pub failure: Option<String>,
}

impl CctSequence {
    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cct).collect()
    }

    pub fn is_complete(&self, m: usize) -> bool {
        self.failure.is_none() && self.steps.len() == m + 1
    }
}

/// Event-triggered CCT improvement: `t_0` is the direct-method crossing,
/// and each `t_i` resumes the scan from `t_{i-1}` with `V_i`.
pub fn improve_cct(traj: &Trajectory, exp: &ExpandedFunction, v_cr: f64) -> CctSequence {
    let start = Instant::now();
    let mut steps = Vec::with_capacity(exp.max_iterations + 1);
    let mut t_prev = traj.t_start();
    for i in 0..=exp.max_iterations {
        match boundary_crossing(traj, exp, v_cr, i, t_prev) {
            Ok((t, _)) => {
                steps.push(CctStep { iteration: i, cct: t, wall_time: start.elapsed().as_secs_f64() });
                t_prev = t;
            }
            Err(e) => return CctSequence { steps, failure: Some(format!("iteration {i}: {e}")) },
        }
    }
    CctSequence { steps, failure: None }
}

/// `‖real_exit - x_F(t*)‖` with `t*` the first crossing of `V_m = V_cr`.
pub fn exit_distance(real_exit: &[f64], traj: &Trajectory, exp: &ExpandedFunction, v_cr: f64, m: usize) -> Result<f64> {
    let (_, x) = boundary_crossing(traj, exp, v_cr, m, traj.t_start())?;
    Ok(euclid(real_exit, &x))
}

/// Exit distances for `m = 0..=M`.
pub fn exit_distances(real_exit: &[f64], traj: &Trajectory, exp: &ExpandedFunction, v_cr: f64) -> Result<Vec<f64>> {
    (0..=exp.max_iterations).map(|m| exit_distance(real_exit, traj, exp, v_cr, m)).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// An ordered contour piece. Closed curves repeat their first vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Level curves of `V_m = V_cr` on a `resolution²` node grid.
pub fn trace_level_curve_2d(exp: &ExpandedFunction, v_cr: f64, m: usize, bounds: &Bounds, resolution: usize) -> Result<Vec<Polyline>> {
    if exp.model.dim() != 2 || bounds.dim() != 2 {
        return Err(Error::Domain("level curves need a 2-D model".into()));
    }
    exp.check(m)?;
    let grid = Grid::uniform(bounds.clone(), resolution)?;
    let values = grid.evaluate(|x| exp.evaluate(x, m).unwrap_or(f64::INFINITY));
    Ok(marching_squares(&grid, &values, v_cr))
}

/// Contour extraction from node values with linear edge interpolation.
/// Saddle cells are split by the cell-centre average.
pub fn marching_squares(grid: &Grid, values: &[f64], level: f64) -> Vec<Polyline> {
    let (nx, ny) = (grid.counts[0], grid.counts[1]);
    let lo = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < level && level < hi) {
        warn!("level {level} outside grid value range [{lo}, {hi}]");
        return Vec::new();
    }
    let idx = |i: usize, j: usize| i + nx * j;
    let val = |i: usize, j: usize| values[idx(i, j)];
    let pos = |i: usize, j: usize| {
        let p = grid.point(idx(i, j));
        [p[0], p[1]]
    };
    // edge key: (node a, node b) with a < b
    let crossing = |a: (usize, usize), b: (usize, usize)| -> [f64; 2] {
        let (va, vb) = (val(a.0, a.1), val(b.0, b.1));
        let (pa, pb) = (pos(a.0, a.1), pos(b.0, b.1));
        let s = if vb.is_finite() && va.is_finite() { (level - va) / (vb - va) } else if va.is_finite() { 0.0 } else { 1.0 };
        let s = s.clamp(0.0, 1.0);
        [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]
    };
    let mut segments: Vec<[(usize, usize); 2]> = Vec::new();
    let mut points: HashMap<(usize, usize), [f64; 2]> = HashMap::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            // corners counter-clockwise from bottom-left
            let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let inside: Vec<bool> = c.iter().map(|&(a, b)| val(a, b) < level).collect();
            let mut code = 0;
            for (k, &b) in inside.iter().enumerate() {
                if b {
                    code |= 1 << k;
                }
            }
            if code == 0 || code == 15 {
                continue;
            }
            let edge = |k: usize| {
                let (a, b) = (c[k], c[(k + 1) % 4]);
                (idx(a.0, a.1).min(idx(b.0, b.1)), idx(a.0, a.1).max(idx(b.0, b.1)))
            };
            let mut add = |e1: usize, e2: usize, points: &mut HashMap<(usize, usize), [f64; 2]>| {
                for &e in &[e1, e2] {
                    points.entry(edge(e)).or_insert_with(|| crossing(c[e], c[(e + 1) % 4]));
                }
                segments.push([edge(e1), edge(e2)]);
            };
            // edge k joins corner k and k+1; a crossed edge has differing ends
            let crossed: Vec<usize> = (0..4).filter(|&k| inside[k] != inside[(k + 1) % 4]).collect();
            if crossed.len() == 2 {
                add(crossed[0], crossed[1], &mut points);
            } else {
                let centre = c.iter().map(|&(a, b)| val(a, b)).sum::<f64>() / 4.0;
                // crossed = all four edges; pair edges around the corners that
                // are cut off from the centre
                let centre_inside = centre < level;
                if inside[0] != centre_inside {
                    add(3, 0, &mut points);
                    add(1, 2, &mut points);
                } else {
                    add(0, 1, &mut points);
                    add(2, 3, &mut points);
                }
            }
        }
    }
    assemble(&segments, &points)
}

fn assemble(segments: &[[(usize, usize); 2]], points: &HashMap<(usize, usize), [f64; 2]>) -> Vec<Polyline> {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        for e in seg {
            by_edge.entry(*e).or_default().push(s);
        }
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    let next = |edge: (usize, usize), from: usize, used: &[bool]| -> Option<usize> {
        by_edge[&edge].iter().copied().find(|&s| s != from && !used[s])
    };
    // open chains start at edges touched once, then closed loops
    let mut starts: Vec<usize> = (0..segments.len()).filter(|&s| segments[s].iter().any(|e| by_edge[e].len() == 1)).collect();
    starts.extend(0..segments.len());
    for s0 in starts {
        if used[s0] {
            continue;
        }
        used[s0] = true;
        let [a, b] = segments[s0];
        let (first, mut tail) = if by_edge[&a].len() == 1 { (a, b) } else if by_edge[&b].len() == 1 { (b, a) } else { (a, b) };
        let mut chain = vec![first, tail];
        let mut cur = s0;
        while let Some(s) = next(tail, cur, &used) {
            used[s] = true;
            let [p, q] = segments[s];
            tail = if p == tail { q } else { p };
            chain.push(tail);
            cur = s;
        }
        let closed = chain.len() > 2 && chain.first() == chain.last();
        out.push(Polyline { points: chain.iter().map(|e| points[e]).collect(), closed });
    }
    out
}

/// Even-odd point-in-polygon test against the closed curves in `curves`.
pub fn inside_curves(curves: &[Polyline], p: [f64; 2]) -> bool {
    let mut inside = false;
    for c in curves.iter().filter(|c| c.closed) {
        let pts = &c.points;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Distance from `p` to the nearest segment of `curves`.
pub fn distance_to_curves(curves: &[Polyline], p: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for c in curves {
        for w in c.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let s = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let q = [a[0] + s * d[0], a[1] + s * d[1]];
            best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
        }
    }
    best
}

/// One-sided sampled Hausdorff distance `max_{p in from} dist(p, to)`.
pub fn one_sided_hausdorff(from: &[[f64; 2]], to: &[Polyline]) -> f64 {
    from.iter().map(|&p| distance_to_curves(to, p)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{QuadraticLyapunov, ThreeMachineEnergy};
    use crate::models::three_machine::ThreeMachine;

    #[test]
    fn circle_contour() {
        let base = QuadraticLyapunov::new(vec![0.0, 0.0]);
        let model = ThreeMachine;
        let exp = ExpandedFunction::new(&base, &model, Scheme::Rk2, 0.2, 0).unwrap();
        let curves = trace_level_curve_2d(&exp, 1.0, 0, &Bounds::square(2.0, 2), 101).unwrap();
        assert_eq!(curves.len(), 1);
        assert!(curves[0].closed);
        for p in &curves[0].points {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 1.0).abs() < 0.04, "{r}");
        }
        assert!(inside_curves(&curves, [0.1, 0.2]));
        assert!(!inside_curves(&curves, [1.1, 0.2]));
    }

    #[test]
    fn out_of_range_level_is_empty() {
        let base = QuadraticLyapunov::new(vec![0.0, 0.0]);
        let model = ThreeMachine;
        let exp = ExpandedFunction::new(&base, &model, Scheme::Rk2, 0.2, 0).unwrap();
        assert!(trace_level_curve_2d(&exp, 100.0, 0, &Bounds::square(2.0, 2), 21).unwrap().is_empty());
    }

    #[test]
    fn sequence_matches_evaluate() {
        let model = ThreeMachine;
        let exp = ExpandedFunction::new(&ThreeMachineEnergy, &model, Scheme::Rk3, 0.2, 5).unwrap();
        let x = [0.7, -1.3];
        let seq = exp.sequence(&x, 5).unwrap();
        for (m, v) in seq.iter().enumerate() {
            assert_eq!(*v, exp.evaluate(&x, m).unwrap());
        }
        assert!(exp.evaluate(&x, 6).is_err());
    }
}
