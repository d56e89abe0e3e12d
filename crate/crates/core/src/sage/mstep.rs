//! The M-step: coarse estimation, fine delay/angle/distance search over
//! partial data, and closed-form gain and phases.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::ops::Range;
use std::time::Instant;

use num_complex::Complex64;

use super::search::{argmax_grid, coarse_points, neighbourhood, refine, step_ratio, stride_schedule, Lattice};
use super::{EstimatorConfig, EvalCounters, PhaseModel, SearchScope, SignalModel, Wavefront};
use crate::error::{invalid, Error, Result};
use crate::evalkit::far_field_threshold;
use crate::geometry::{rayleigh_distance, unit_vector, unit_vector_angles, wrap_angle, Direction, SPEED_OF_LIGHT};
use crate::synth::{path_responses, ArraySide, PathParams, SoundingConfig};
use crate::waveform::DelayKernel;

/// Bound on hill-climb moves per coarse distance.
const MAX_CLIMB_STEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Tx,
    Rx,
}

/// Everything an M-step needs besides the data.
#[derive(Clone, Copy, Debug)]
pub struct MStepContext<'a> {
    pub cfg: &'a SoundingConfig,
    pub est: &'a EstimatorConfig,
    pub model: SignalModel,
}

impl<'a> MStepContext<'a> {
    fn side(&self, s: Side) -> &'a ArraySide {
        match s {
            Side::Tx => &self.cfg.tx,
            Side::Rx => &self.cfg.rx,
        }
    }
}

/// Strongest sample of x̂ and the scan directions it sits in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarseEstimate {
    pub n_t: usize,
    pub n_r: usize,
    /// 0-based sample index.
    pub i: usize,
    pub delay: f64,
    pub dod: Direction,
    pub doa: Direction,
}

fn check_len(x: &[Complex64], cfg: &SoundingConfig) -> Result<()> {
    if x.len() != cfg.tensor_len() {
        return invalid(format!("signal has {} samples, configuration expects {}", x.len(), cfg.tensor_len()));
    }
    Ok(())
}

fn coarse_at(cfg: &SoundingConfig, n_t: usize, n_r: usize, i: usize) -> CoarseEstimate {
    CoarseEstimate {
        n_t,
        n_r,
        i,
        delay: i as f64 * cfg.kernel.sample_spacing(),
        dod: cfg.tx.grid().direction(n_t),
        doa: cfg.rx.grid().direction(n_r),
    }
}

/// Argmax of |x̂| over the whole tensor; ties go to the lowest linear index.
pub fn coarse_estimate(x: &[Complex64], cfg: &SoundingConfig) -> Result<CoarseEstimate> {
    check_len(x, cfg)?;
    let mut best = 0;
    let mut best_val = -1.0;
    for (k, v) in x.iter().enumerate() {
        let p = v.norm_sqr();
        if p > best_val {
            best_val = p;
            best = k;
        }
    }
    let samples = cfg.samples();
    let dir = best / samples;
    Ok(coarse_at(cfg, dir / cfg.n_rx(), dir % cfg.n_rx(), best % samples))
}

/// Direction with the largest CIR energy and its strongest sample; anchor for full-data searches.
fn strongest_direction(x: &[Complex64], cfg: &SoundingConfig) -> CoarseEstimate {
    let samples = cfg.samples();
    let mut best = (0, -1.0);
    for (n, chunk) in x.chunks(samples).enumerate() {
        let e: f64 = chunk.iter().map(|v| v.norm_sqr()).sum();
        if e > best.1 {
            best = (n, e);
        }
    }
    let chunk = &x[best.0 * samples..(best.0 + 1) * samples];
    let mut i_m = (0, -1.0);
    for (i, v) in chunk.iter().enumerate() {
        if v.norm_sqr() > i_m.1 {
            i_m = (i, v.norm_sqr());
        }
    }
    coarse_at(cfg, best.0 / cfg.n_rx(), best.0 % cfg.n_rx(), i_m.0)
}

/// Index sets of the data used by one M-step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialWindows {
    pub samples: Range<usize>,
    pub tx: Vec<usize>,
    pub rx: Vec<usize>,
}

impl PartialWindows {
    pub fn full(cfg: &SoundingConfig) -> Self {
        Self { samples: 0..cfg.samples(), tx: (0..cfg.n_tx()).collect(), rx: (0..cfg.n_rx()).collect() }
    }

    pub fn elements(&self) -> usize {
        self.samples.len() * self.tx.len() * self.rx.len()
    }
}

fn angle_half_widths(side: &ArraySide, est: &EstimatorConfig) -> Option<(f64, f64)> {
    if let Some(w) = est.angle_window {
        return Some(w);
    }
    side.pattern().hpbw().map(|(a, e)| (est.angle_window_factor * a, est.angle_window_factor * e))
}

fn side_window(side: &ArraySide, n_m: usize, est: &EstimatorConfig) -> Vec<usize> {
    let Some((haz, hel)) = angle_half_widths(side, est) else {
        return (0..side.len()).collect();
    };
    let m = side.grid().direction(n_m);
    (0..side.len())
        .filter(|&n| {
            let d = side.grid().direction(n);
            wrap_angle(d.azimuth() - m.azimuth()).abs() < haz && (d.elevation() - m.elevation()).abs() < hel
        })
        .collect()
}

/// Samples with |i − i_m| < ΔI and directions within the angular windows around the coarse estimate.
pub fn partial_windows(coarse: &CoarseEstimate, ctx: &MStepContext) -> PartialWindows {
    if ctx.est.scope == SearchScope::Global {
        return PartialWindows::full(ctx.cfg);
    }
    let h = ctx.est.sample_half_width;
    let lo = coarse.i.saturating_sub(h - 1);
    let hi = (coarse.i + h).min(ctx.cfg.samples());
    PartialWindows {
        samples: lo..hi,
        tx: side_window(&ctx.cfg.tx, coarse.n_t, ctx.est),
        rx: side_window(&ctx.cfg.rx, coarse.n_r, ctx.est),
    }
}

#[inline]
fn slice<'x>(x: &'x [Complex64], cfg: &SoundingConfig, n_t: usize, n_r: usize, samples: &Range<usize>) -> &'x [Complex64] {
    let base = (n_t * cfg.n_rx() + n_r) * cfg.samples();
    &x[base + samples.start..base + samples.end]
}

/// Delay grid `start + k·step`, `k < count`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayPlan {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl DelayPlan {
    /// Grid points strictly inside (τ' − Δτ, τ' + Δτ).
    pub fn local(centre: f64, spacing: f64, step: f64) -> Self {
        let kmax = ((spacing / step) * (1.0 - 1e-12)).ceil() as usize - 1;
        Self { start: centre - kmax as f64 * step, step, count: 2 * kmax + 1 }
    }

    pub fn full(window: f64, step: f64) -> Self {
        Self { start: 0.0, step, count: (window / step + 1e-9).floor() as usize + 1 }
    }

    pub fn value(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    /// First maximiser; NaN never wins.
    pub fn run(&self, f: &mut dyn FnMut(f64) -> f64) -> (f64, f64) {
        let (p, v, _) = argmax_grid(&[(0..self.count as i64).collect()], &mut |k| f(self.value(k[0] as usize)));
        (self.value(p[0] as usize), v)
    }
}

fn delay_plan(coarse: &CoarseEstimate, ctx: &MStepContext) -> DelayPlan {
    let k = &ctx.cfg.kernel;
    match ctx.est.scope {
        SearchScope::Local => DelayPlan::local(coarse.delay, k.sample_spacing(), ctx.est.delay_step),
        SearchScope::Global => DelayPlan::full(k.window(), ctx.est.delay_step),
    }
}

fn delay_data<'x>(x: &'x [Complex64], coarse: &CoarseEstimate, ctx: &MStepContext) -> (usize, &'x [Complex64]) {
    let w = partial_windows(coarse, ctx);
    (w.samples.start, slice(x, ctx.cfg, coarse.n_t, coarse.n_r, &w.samples))
}

// |⟨R_τ, x⟩|² / ‖R_τ‖²; the energy varies with τ on a truncated window
fn delay_objective(kernel: &DelayKernel, tau: f64, start: usize, data: &[Complex64]) -> f64 {
    let (a, e) = kernel.correlate(tau, start, data);
    if e > 0.0 {
        a.norm_sqr() / e
    } else {
        0.0
    }
}

/// Observed delay in the coarse direction pair: argmax of |Σ_i R*_τ[i]·x̂[i]|² / Σ_i |R_τ[i]|² over the delay grid.
pub fn fine_delay(x: &[Complex64], coarse: &CoarseEstimate, ctx: &MStepContext, counters: &mut EvalCounters) -> Result<f64> {
    check_len(x, ctx.cfg)?;
    let plan = delay_plan(coarse, ctx);
    let (start, data) = delay_data(x, coarse, ctx);
    let kernel = &ctx.cfg.kernel;
    let (tau, _) = plan.run(&mut |t| delay_objective(kernel, t, start, data));
    counters.record(plan.count as u64, data.len() as u64);
    Ok(tau)
}

/// Angle (and distance) search grids for one side.
#[derive(Clone, Debug, PartialEq)]
pub struct AnglePlan {
    pub az: Lattice,
    pub el: Lattice,
    pub dist: Option<Lattice>,
    pub angle_schedule: Vec<i64>,
    pub dist_schedule: Vec<i64>,
    /// Joint coarse grid over angles and distance (full-space searches).
    pub joint_coarse: bool,
    /// The elevation region was cut at the scanned span.
    pub clipped: bool,
}

/// Result of one side's search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SideEstimate {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: Option<f64>,
    pub objective: f64,
    pub evals: u64,
}

impl SideEstimate {
    pub fn direction(&self) -> Direction {
        make_direction(self.azimuth, self.elevation)
    }
}

fn make_direction(az: f64, el: f64) -> Direction {
    Direction::new(az, el.clamp(-FRAC_PI_2, FRAC_PI_2)).expect("finite angles")
}

/// Default distance bounds: [0.5 m, max(4·d_th, 50 m, Rayleigh distance of the VSA)].
pub fn default_distance_bounds(side: &ArraySide, cfg: &SoundingConfig) -> (f64, f64) {
    let r = side.rotator().radius();
    let (dth, rayleigh) = match cfg.center_frequency() {
        Some(f) if r > 0.0 => {
            let lambda = SPEED_OF_LIGHT / f;
            let dth = side.pattern().hpbw().and_then(|(a, e)| far_field_threshold(0.5 * (a + e), r, lambda).ok());
            (dth.unwrap_or(0.0), rayleigh_distance(2.0 * r, lambda).unwrap_or(0.0))
        }
        _ => (0.0, 0.0),
    };
    (0.5, (4.0 * dth).max(50.0).max(rayleigh))
}

fn half_steps(width: f64, unit: f64) -> i64 {
    ((width / unit) * (1.0 + 1e-9)).floor() as i64
}

impl AnglePlan {
    pub fn for_side(side: &ArraySide, n_m: usize, ctx: &MStepContext) -> Result<Self> {
        let est = ctx.est;
        let unit = est.angle_fine_step;
        let grid = side.grid();
        let (haz, hel) = (0.5 * grid.az_step(), 0.5 * grid.el_step());
        let (el_lo, el_hi) = grid.elevation_span();
        let (az, el, clipped) = match est.scope {
            SearchScope::Local => {
                let m = grid.direction(n_m);
                let ka = half_steps(haz, unit);
                let az = Lattice { start: m.azimuth() - ka as f64 * unit, unit, max_index: 2 * ka };
                let ke = half_steps(hel, unit);
                let below = half_steps(m.elevation() - el_lo.max(-FRAC_PI_2), unit).min(ke);
                let above = half_steps(el_hi.min(FRAC_PI_2) - m.elevation(), unit).min(ke);
                let el = Lattice { start: m.elevation() - below as f64 * unit, unit, max_index: below + above };
                (az, el, below < ke || above < ke)
            }
            SearchScope::Global => {
                let az = if grid.full_circle() {
                    Lattice { start: grid.azimuths()[0], unit, max_index: half_steps(TAU, unit) - 1 }
                } else {
                    let a0 = grid.azimuths()[0];
                    let a1 = *grid.azimuths().last().unwrap();
                    Lattice::spanning(a0 - haz, a1 + haz, unit)
                };
                let el = Lattice::spanning((el_lo - hel).max(-FRAC_PI_2), (el_hi + hel).min(FRAC_PI_2), unit);
                (az, el, false)
            }
        };
        let ratio = step_ratio(est.angle_coarse_step, unit)
            .ok_or_else(|| Error::Config("angle coarse step must be a multiple of the fine step".into()))?;
        let dist = match ctx.model.wavefront {
            Wavefront::Ffa => None,
            Wavefront::Swf => {
                let (lo, hi) = est.distance_bounds.unwrap_or_else(|| default_distance_bounds(side, ctx.cfg));
                Some(Lattice::spanning(lo, hi, est.distance_fine_step))
            }
        };
        let dratio = step_ratio(est.distance_coarse_step, est.distance_fine_step)
            .ok_or_else(|| Error::Config("distance coarse step must be a multiple of the fine step".into()))?;
        Ok(Self {
            az,
            el,
            dist,
            angle_schedule: stride_schedule(ratio, est.refine_levels),
            dist_schedule: stride_schedule(dratio, est.refine_levels),
            joint_coarse: est.scope == SearchScope::Global,
            clipped,
        })
    }

    /// Coarse grid then nested refinement.
    ///
    /// With a distance axis, angle and distance trade off along a flat ridge,
    /// so the local coarse phase profiles it: angles on the coarse grid at ∞,
    /// then for ∞ and each coarse distance from far to near a hill climb down
    /// to the fine angle step, starting from the previous optimum. The best
    /// (angles, distance) seeds a joint refinement and a fine distance walk.
    /// Full-space searches use the joint coarse product grid instead.
    pub fn run(&self, f: &mut dyn FnMut(f64, f64, Option<f64>) -> f64) -> SideEstimate {
        let (az, el) = (self.az, self.el);
        let s0 = self.angle_schedule[0];
        let angle_axes = [coarse_points(&az, s0), coarse_points(&el, s0)];
        let angle_sched = [self.angle_schedule.clone(), self.angle_schedule.clone()];
        let Some(dl) = self.dist else {
            let (p, v, n) = argmax_grid(&angle_axes, &mut |k| f(az.value(k[0]), el.value(k[1]), None));
            let (p, v, m) = refine(&[az, el], &angle_sched, &p, v, &mut |k| f(az.value(k[0]), el.value(k[1]), None));
            return SideEstimate { azimuth: az.value(p[0]), elevation: el.value(p[1]), distance: None, objective: v, evals: n + m };
        };
        let sd0 = self.dist_schedule[0];
        let dist_of = |k: i64| if k < 0 { None } else { Some(dl.value(k)) };
        let mut evals = 0;
        let (start, val) = if self.joint_coarse {
            // −1 encodes ∞, last so ties keep the finite distance
            let mut dist_axis = coarse_points(&dl, sd0);
            dist_axis.push(-1);
            let axes = [angle_axes[0].clone(), angle_axes[1].clone(), dist_axis];
            let (p, v, n) = argmax_grid(&axes, &mut |k| f(az.value(k[0]), el.value(k[1]), dist_of(k[2])));
            evals += n;
            (p, v)
        } else {
            let (p, v, n) = argmax_grid(&angle_axes, &mut |k| f(az.value(k[0]), el.value(k[1]), None));
            evals += n;
            let (mut cur, v) = self.climb(p, v, None, 0, &mut evals, f);
            // the optimum drifts slowly with distance, so later climbs skip the coarse stride
            let from = (self.angle_schedule.len() - 1).min(1);
            let mut best = (vec![cur[0], cur[1], -1], v);
            for dk in coarse_points(&dl, sd0).into_iter().rev() {
                let d = dist_of(dk);
                let v0 = f(az.value(cur[0]), el.value(cur[1]), d);
                evals += 1;
                let (p, v) = self.climb(cur, v0, d, from, &mut evals, f);
                cur = p;
                if v > best.1 {
                    best = (vec![cur[0], cur[1], dk], v);
                }
            }
            best
        };
        if start[2] < 0 {
            let (p, v, n) = refine(&[az, el], &angle_sched, &start[..2], val, &mut |k| f(az.value(k[0]), el.value(k[1]), None));
            return SideEstimate { azimuth: az.value(p[0]), elevation: el.value(p[1]), distance: None, objective: v, evals: evals + n };
        }
        let sched = [self.angle_schedule.clone(), self.angle_schedule.clone(), self.dist_schedule.clone()];
        let (p, v, n) =
            refine(&[az, el, dl], &sched, &start, val, &mut |k| f(az.value(k[0]), el.value(k[1]), Some(dl.value(k[2]))));
        let (p, v) = self.walk_distance(p, v, &mut evals, f);
        SideEstimate {
            azimuth: az.value(p[0]),
            elevation: el.value(p[1]),
            distance: Some(dl.value(p[2])),
            objective: v,
            evals: evals + n,
        }
    }

    /// Hill climb on the angle lattice at a fixed distance, at each stride of
    /// the schedule from level `from` on; moves only on strict improvement.
    fn climb(
        &self,
        mut cur: Vec<i64>,
        mut val: f64,
        d: Option<f64>,
        from: usize,
        evals: &mut u64,
        f: &mut dyn FnMut(f64, f64, Option<f64>) -> f64,
    ) -> (Vec<i64>, f64) {
        let (az, el) = (self.az, self.el);
        for &stride in &self.angle_schedule[from..] {
            for _ in 0..MAX_CLIMB_STEPS {
                let axes = [neighbourhood(&az, cur[0], stride, stride), neighbourhood(&el, cur[1], stride, stride)];
                let (p, v, n) = argmax_grid(&axes, &mut |k| f(az.value(k[0]), el.value(k[1]), d));
                *evals += n;
                if v > val {
                    cur = p;
                    val = v;
                } else {
                    break;
                }
            }
        }
        (cur, val)
    }

    /// Fine-step walk along the distance axis in both directions, re-climbing
    /// the angles at the fine stride at each step; on the lattice the ridge is
    /// bumpy, so a walk stops only after two coarse distance steps without
    /// improvement.
    fn walk_distance(
        &self,
        start: Vec<i64>,
        val: f64,
        evals: &mut u64,
        f: &mut dyn FnMut(f64, f64, Option<f64>) -> f64,
    ) -> (Vec<i64>, f64) {
        let Some(dl) = self.dist else { return (start, val) };
        let patience = 2 * self.dist_schedule[0];
        let last = self.angle_schedule.len() - 1;
        let mut best = (start.clone(), val);
        for dir in [1, -1] {
            let mut cur = start[..2].to_vec();
            let mut k = start[2];
            let mut misses = 0;
            while misses < patience {
                k += dir;
                if k < 0 || k > dl.max_index {
                    break;
                }
                let d = Some(dl.value(k));
                let v0 = f(self.az.value(cur[0]), self.el.value(cur[1]), d);
                *evals += 1;
                let (p, v) = self.climb(cur, v0, d, last, evals, f);
                cur = p;
                if v > best.1 {
                    best = (vec![cur[0], cur[1], k], v);
                    misses = 0;
                } else {
                    misses += 1;
                }
            }
        }
        best
    }

    /// Every fine-grid angle pair at a fixed distance.
    pub fn exhaustive(&self, distance: Option<f64>, f: &mut dyn FnMut(f64, f64, Option<f64>) -> f64) -> SideEstimate {
        let axes = [(0..=self.az.max_index).collect(), (0..=self.el.max_index).collect()];
        let (p, v, n) = argmax_grid(&axes, &mut |k| f(self.az.value(k[0]), self.el.value(k[1]), distance));
        SideEstimate { azimuth: self.az.value(p[0]), elevation: self.el.value(p[1]), distance, objective: v, evals: n }
    }
}

/// Λ' (or its coherent counterpart) on one side's slice as a function of that side's angles and distance.
struct SliceObjective<'a> {
    side: &'a ArraySide,
    kernel: &'a DelayKernel,
    anchor: usize,
    tau_obs: f64,
    start: usize,
    entries: Vec<(usize, &'a [Complex64])>,
    phase: PhaseModel,
}

impl<'a> SliceObjective<'a> {
    fn new(x: &'a [Complex64], coarse: &CoarseEstimate, tau_obs: f64, side: Side, w: &PartialWindows, ctx: &MStepContext<'a>) -> Self {
        let cfg = ctx.cfg;
        let (anchor, entries) = match side {
            Side::Rx => (coarse.n_r, w.rx.iter().map(|&n| (n, slice(x, cfg, coarse.n_t, n, &w.samples))).collect()),
            Side::Tx => (coarse.n_t, w.tx.iter().map(|&n| (n, slice(x, cfg, n, coarse.n_r, &w.samples))).collect()),
        };
        Self { side: ctx.side(side), kernel: &cfg.kernel, anchor, tau_obs, start: w.samples.start, entries, phase: ctx.model.phase }
    }

    fn elements(&self) -> u64 {
        self.entries.iter().map(|(_, d)| d.len() as u64).sum()
    }

    fn eval(&self, az: f64, el: f64, dist: Option<f64>) -> f64 {
        let toward = unit_vector_angles(az, el);
        let (off0, _) = self.side.offset(self.anchor, toward, dist);
        let mut num = 0.0;
        let mut num_c = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for &(n, data) in &self.entries {
            let (off, v) = self.side.offset(n, toward, dist);
            let c = self.side.amplitude(n, v);
            if c == 0.0 {
                continue;
            }
            let tau = self.tau_obs + (off - off0) / SPEED_OF_LIGHT;
            let (a, e) = self.kernel.correlate(tau, self.start, data);
            match self.phase {
                PhaseModel::PerDirection => num += c * a.norm(),
                PhaseModel::Coherent => num_c += c * a,
            }
            den += c * c * e;
        }
        if !(den > 0.0) || !den.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self.phase {
            PhaseModel::PerDirection => num * num / den,
            PhaseModel::Coherent => num_c.norm_sqr() / den,
        }
    }
}

/// Fine search of one side's angles and distance, anchored at the observed delay.
pub fn fine_angles_distance(
    x: &[Complex64],
    coarse: &CoarseEstimate,
    tau_obs: f64,
    side: Side,
    ctx: &MStepContext,
    counters: &mut EvalCounters,
) -> Result<(SideEstimate, AnglePlan)> {
    check_len(x, ctx.cfg)?;
    let w = partial_windows(coarse, ctx);
    let n_m = if side == Side::Rx { coarse.n_r } else { coarse.n_t };
    let plan = AnglePlan::for_side(ctx.side(side), n_m, ctx)?;
    let obj = SliceObjective::new(x, coarse, tau_obs, side, &w, ctx);
    let out = plan.run(&mut |a, e, d| obj.eval(a, e, d));
    counters.record(out.evals, obj.elements());
    Ok((out, plan))
}

/// Exhaustive fine-grid angle search at a fixed distance; reference for the coarse-to-fine search.
pub fn fine_angles_exhaustive(
    x: &[Complex64],
    coarse: &CoarseEstimate,
    tau_obs: f64,
    side: Side,
    ctx: &MStepContext,
    distance: Option<f64>,
) -> Result<SideEstimate> {
    check_len(x, ctx.cfg)?;
    let w = partial_windows(coarse, ctx);
    let n_m = if side == Side::Rx { coarse.n_r } else { coarse.n_t };
    let plan = AnglePlan::for_side(ctx.side(side), n_m, ctx)?;
    let obj = SliceObjective::new(x, coarse, tau_obs, side, &w, ctx);
    Ok(plan.exhaustive(distance, &mut |a, e, d| obj.eval(a, e, d)))
}

/// Per-direction correlations Σ_{i∈I} x̂·R*_τ and kernel energies over the windows, with the combined pattern amplitude.
fn window_correlations(x: &[Complex64], theta: &PathParams, w: &PartialWindows, cfg: &SoundingConfig) -> Result<Vec<(usize, f64, Complex64, f64)>> {
    let resp = path_responses(cfg, theta)?;
    let mut out = Vec::with_capacity(w.tx.len() * w.rx.len());
    for &nt in &w.tx {
        for &nr in &w.rx {
            let n = nt * cfg.n_rx() + nr;
            let (a, e) = cfg.kernel.correlate(resp[n].delay, w.samples.start, slice(x, cfg, nt, nr, &w.samples));
            out.push((n, resp[n].amplitude, a, e));
        }
    }
    Ok(out)
}

/// Λ' = (Σ c·|A|)² / Σ c²·E over the windows, with A the per-direction correlation and E the kernel energy.
pub fn lambda_prime(theta: &PathParams, x: &[Complex64], w: &PartialWindows, cfg: &SoundingConfig) -> Result<f64> {
    check_len(x, cfg)?;
    let rows = window_correlations(x, theta, w, cfg)?;
    let num: f64 = rows.iter().map(|(_, c, a, _)| c * a.norm()).sum();
    let den: f64 = rows.iter().map(|(_, c, _, e)| c * c * e).sum();
    if !(den > 0.0) {
        return Err(Error::Numerical("model signal has zero energy over the windows".into()));
    }
    Ok(num * num / den)
}

/// |Σ c·A|² / Σ c²·E: the single-phase counterpart of [`lambda_prime`].
pub fn coherent_objective(theta: &PathParams, x: &[Complex64], w: &PartialWindows, cfg: &SoundingConfig) -> Result<f64> {
    check_len(x, cfg)?;
    let rows = window_correlations(x, theta, w, cfg)?;
    let num: Complex64 = rows.iter().map(|(_, c, a, _)| a * *c).sum();
    let den: f64 = rows.iter().map(|(_, c, _, e)| c * c * e).sum();
    if !(den > 0.0) {
        return Err(Error::Numerical("model signal has zero energy over the windows".into()));
    }
    Ok(num.norm_sqr() / den)
}

/// Closed-form gain and phases given the other parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GainPhase {
    pub gain: f64,
    /// One phase per direction pair, n_t·N_r + n_r.
    pub phases: Vec<f64>,
    /// Per-direction correlations Σ_{i∈I} x̂·R*_τ (all directions, over the sample window).
    pub amplitudes: Vec<Complex64>,
}

/// Gain and phases maximising the likelihood for fixed delay, angles and distances.
pub fn closed_form_gain_phase(
    x: &[Complex64],
    theta: &PathParams,
    w: &PartialWindows,
    cfg: &SoundingConfig,
    phase: PhaseModel,
) -> Result<GainPhase> {
    check_len(x, cfg)?;
    let all = PartialWindows { samples: w.samples.clone(), tx: (0..cfg.n_tx()).collect(), rx: (0..cfg.n_rx()).collect() };
    let rows = window_correlations(x, theta, &all, cfg)?;
    let amplitudes: Vec<Complex64> = rows.iter().map(|r| r.2).collect();
    let in_window = |n: usize| w.tx.contains(&(n / cfg.n_rx())) && w.rx.contains(&(n % cfg.n_rx()));
    let sel = || rows.iter().filter(|r| in_window(r.0));
    let den: f64 = sel().map(|(_, c, _, e)| c * c * e).sum();
    match phase {
        PhaseModel::PerDirection => {
            let num: f64 = sel().map(|(_, c, a, _)| c * a.norm()).sum();
            let gain = if den > 0.0 { num / den } else { 0.0 };
            Ok(GainPhase { gain, phases: amplitudes.iter().map(|a| a.arg()).collect(), amplitudes })
        }
        PhaseModel::Coherent => {
            let num: Complex64 = sel().map(|(_, c, a, _)| a * *c).sum();
            let g = if den > 0.0 { num / den } else { Complex64::new(0.0, 0.0) };
            Ok(GainPhase { gain: g.norm(), phases: vec![g.arg(); amplitudes.len()], amplitudes })
        }
    }
}

/// Delay at the reference positions: the observed delay less the geometric offsets of the anchor directions.
pub fn reference_delay(
    tau_obs: f64,
    coarse: &CoarseEstimate,
    dod: Direction,
    doa: Direction,
    d_tx: Option<f64>,
    d_rx: Option<f64>,
    cfg: &SoundingConfig,
) -> f64 {
    let (ot, _) = cfg.tx.offset(coarse.n_t, unit_vector(dod), d_tx);
    let (or, _) = cfg.rx.offset(coarse.n_r, unit_vector(doa), d_rx);
    tau_obs - (ot + or) / SPEED_OF_LIGHT
}

#[derive(Clone, Debug, PartialEq)]
pub struct MStepOutcome {
    pub path: PathParams,
    pub coarse: CoarseEstimate,
    pub windows: PartialWindows,
    pub objective: f64,
    pub warnings: Vec<String>,
}

/// Surrogate objectives peaked at a known path, used to count evaluations without touching data.
struct Surrogate {
    tau_obs: f64,
    tx: (f64, f64, Option<f64>),
    rx: (f64, f64, Option<f64>),
}

impl Surrogate {
    fn angles(t: (f64, f64, Option<f64>), az: f64, el: f64, d: Option<f64>) -> f64 {
        let inv = |d: Option<f64>| d.map_or(0.0, |d| 1.0 / d);
        -(wrap_angle(az - t.0).powi(2) + (el - t.1).powi(2)) - 1e-6 * (inv(d) - inv(t.2)).powi(2)
    }
}

/// One M-step: coarse estimate, observed delay, angles and distances per side, gain and phases.
pub fn m_step(x: &[Complex64], ctx: &MStepContext, counters: &mut EvalCounters) -> Result<MStepOutcome> {
    m_step_impl(x, ctx, counters, None)
}

/// Runs the M-step search with cheap surrogate objectives peaked at `truth` and returns the work it would do.
pub fn count_m_step(x: &[Complex64], ctx: &MStepContext, truth: &PathParams) -> Result<EvalCounters> {
    let mut c = EvalCounters::default();
    m_step_impl(x, ctx, &mut c, Some(truth))?;
    Ok(c)
}

fn m_step_impl(
    x: &[Complex64],
    ctx: &MStepContext,
    counters: &mut EvalCounters,
    truth: Option<&PathParams>,
) -> Result<MStepOutcome> {
    let t0 = Instant::now();
    let cfg = ctx.cfg;
    check_len(x, cfg)?;
    let coarse = match ctx.est.scope {
        SearchScope::Local => coarse_estimate(x, cfg)?,
        SearchScope::Global => strongest_direction(x, cfg),
    };
    let w = partial_windows(&coarse, ctx);
    let surrogate = match truth {
        Some(t) => {
            let resp = path_responses(cfg, t)?;
            Some(Surrogate {
                tau_obs: resp[coarse.n_t * cfg.n_rx() + coarse.n_r].delay,
                tx: (t.dod.azimuth(), t.dod.elevation(), t.d_tx),
                rx: (t.doa.azimuth(), t.doa.elevation(), t.d_rx),
            })
        }
        None => None,
    };

    // observed delay in the anchor direction pair
    let dplan = delay_plan(&coarse, ctx);
    let (dstart, ddata) = delay_data(x, &coarse, ctx);
    let kernel = &cfg.kernel;
    let mut tau_obs = match &surrogate {
        Some(s) => dplan.run(&mut |t| -(t - s.tau_obs).abs()).0,
        None => dplan.run(&mut |t| delay_objective(kernel, t, dstart, ddata)).0,
    };
    counters.record(dplan.count as u64, ddata.len() as u64);

    let mut warnings = Vec::new();
    let mut dirs = [(coarse.doa, None::<f64>), (coarse.dod, None::<f64>)];
    let mut objective = f64::NAN;
    for (slot, side) in [Side::Rx, Side::Tx].into_iter().enumerate() {
        let arr = ctx.side(side);
        if arr.is_degenerate() {
            continue;
        }
        let n_m = if side == Side::Rx { coarse.n_r } else { coarse.n_t };
        let plan = AnglePlan::for_side(arr, n_m, ctx)?;
        if plan.clipped {
            warnings.push(format!("{side:?} elevation search clipped at the scanned span"));
        }
        let obj = SliceObjective::new(x, &coarse, tau_obs, side, &w, ctx);
        let out = match &surrogate {
            Some(s) => {
                let t = if side == Side::Rx { s.rx } else { s.tx };
                plan.run(&mut |a, e, d| Surrogate::angles(t, a, e, d))
            }
            None => plan.run(&mut |a, e, d| obj.eval(a, e, d)),
        };
        counters.record(out.evals, obj.elements());
        dirs[slot] = (out.direction(), out.distance);
        objective = out.objective;
    }

    if ctx.est.scope == SearchScope::Local {
        // the anchor delay alone is noisy; re-fit it on the whole window at the found angles
        let [(doa, d_rx), (dod, d_tx)] = dirs;
        let base = reference_delay(tau_obs, &coarse, dod, doa, d_tx, d_rx, cfg);
        let theta = PathParams { gain: 1.0, ref_delay: base, dod, doa, d_tx, d_rx, phases: Vec::new() };
        let rplan = DelayPlan::local(tau_obs, kernel.sample_spacing(), ctx.est.delay_step);
        let (t, v) = match &surrogate {
            Some(s) => rplan.run(&mut |t| -(t - s.tau_obs).abs()),
            None => rplan.run(&mut |t| {
                let th = PathParams { ref_delay: base + (t - tau_obs), ..theta.clone() };
                match ctx.model.phase {
                    PhaseModel::PerDirection => lambda_prime(&th, x, &w, cfg),
                    PhaseModel::Coherent => coherent_objective(&th, x, &w, cfg),
                }
                .unwrap_or(f64::NEG_INFINITY)
            }),
        };
        counters.record(rplan.count as u64, w.elements() as u64);
        tau_obs = t;
        objective = v;
    }
    let [(doa, d_rx), (dod, d_tx)] = dirs;
    let mut theta = PathParams { gain: 1.0, ref_delay: 0.0, dod, doa, d_tx, d_rx, phases: Vec::new() };
    theta.ref_delay = reference_delay(tau_obs, &coarse, dod, doa, d_tx, d_rx, cfg);
    let gp = closed_form_gain_phase(x, &theta, &w, cfg, ctx.model.phase)?;
    theta.gain = gp.gain;
    theta.phases = gp.phases;
    if objective.is_nan() {
        objective = match ctx.model.phase {
            PhaseModel::PerDirection => lambda_prime(&theta, x, &w, cfg).unwrap_or(0.0),
            PhaseModel::Coherent => coherent_objective(&theta, x, &w, cfg).unwrap_or(0.0),
        };
    }
    counters.m_steps += 1;
    counters.m_step_seconds += t0.elapsed().as_secs_f64();
    Ok(MStepOutcome { path: theta, coarse, windows: w, objective, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sage::EstimatorKind;
    use crate::synth::tests::{reference_config, small_config};
    use crate::synth::{synthesize, single_path_scenario, NoiseModel, PhaseInstabilityModel};
    use proptest::prelude::*;

    fn ctx<'a>(cfg: &'a SoundingConfig, est: &'a EstimatorConfig, kind: EstimatorKind, wf: Wavefront) -> MStepContext<'a> {
        MStepContext { cfg, est, model: kind.signal_model(wf).unwrap() }
    }

    fn path_at(cfg: &SoundingConfig, az: f64, el: f64, d: Option<f64>) -> PathParams {
        let mut p = single_path_scenario(d.unwrap_or(10.0), 300e9, cfg).unwrap();
        p.doa = Direction::from_degrees(az, el).unwrap();
        p.d_rx = d;
        p
    }

    fn observe(cfg: &SoundingConfig, p: &PathParams, sigma: f64, seed: u64) -> Vec<Complex64> {
        let ph = PhaseInstabilityModel { mean: 0.0, sigma, seed };
        synthesize(std::slice::from_ref(p), cfg, &ph, &NoiseModel::noiseless()).unwrap().into_data()
    }

    fn anchor_delay(cfg: &SoundingConfig, p: &PathParams, c: &CoarseEstimate) -> f64 {
        path_responses(cfg, p).unwrap()[c.n_t * cfg.n_rx() + c.n_r].delay
    }

    #[test]
    fn coarse_estimate_picks_strongest_sample() {
        let cfg = small_config();
        let mut x = vec![Complex64::new(0.0, 0.0); cfg.tensor_len()];
        x[7 * 201 + 40] = Complex64::new(0.0, -2.0);
        x[3 * 201 + 12] = Complex64::new(1.5, 0.0);
        let c = coarse_estimate(&x, &cfg).unwrap();
        assert_eq!((c.n_t, c.n_r, c.i), (0, 7, 40));
        assert!((c.delay - 40.0 * cfg.kernel.sample_spacing()).abs() < 1e-20);
        assert_eq!(c.doa, cfg.rx.grid().direction(7));
        // ties go to the lowest linear index
        x[2 * 201 + 150] = Complex64::new(2.0, 0.0);
        assert_eq!(coarse_estimate(&x, &cfg).unwrap().n_r, 2);
        assert!(coarse_estimate(&x[1..], &cfg).is_err());
    }

    #[test]
    fn partial_window_sizes() {
        let cfg = reference_config();
        let est = EstimatorConfig::default();
        let c = ctx(&cfg, &est, EstimatorKind::DssOSage, Wavefront::Swf);
        let grid = cfg.rx.grid();
        // azimuth 0°, elevation 0°: 3 × 3 directions, wrapping through 350°
        let mid = coarse_at(&cfg, 0, 2, 500);
        let w = partial_windows(&mid, &c);
        assert_eq!(w.rx.len(), 9);
        assert!(w.rx.iter().any(|&n| (grid.direction(n).azimuth_deg() - 350.0).abs() < 1e-9));
        assert_eq!(w.samples, 491..510);
        assert!(w.elements() <= 360);
        let edge = coarse_at(&cfg, 0, 0, 3);
        let w = partial_windows(&edge, &c);
        assert_eq!(w.rx.len(), 6);
        assert_eq!(w.samples, 0..13);
        let global = EstimatorConfig { scope: SearchScope::Global, ..Default::default() };
        let g = ctx(&cfg, &global, EstimatorKind::PwfSage, Wavefront::Ffa);
        assert_eq!(partial_windows(&mid, &g), PartialWindows::full(&cfg));
    }

    #[test]
    fn delay_plan_grids() {
        let p = DelayPlan::local(10.0, 1.0, 0.25);
        assert_eq!(p.count, 7);
        assert!((p.start - 9.25).abs() < 1e-12);
        let p = DelayPlan::local(10.0, 1.0, 0.3);
        assert_eq!(p.count, 7);
        assert_eq!(DelayPlan::full(1.0, 0.25).count, 5);
        let (t, v) = DelayPlan::local(0.0, 1.0, 0.25).run(&mut |t| -(t - 0.5).abs());
        assert_eq!((t, v), (0.5, 0.0));
    }

    #[test]
    fn fine_delay_recovers_anchor_delay() {
        let cfg = small_config();
        let est = EstimatorConfig::default();
        let c = ctx(&cfg, &est, EstimatorKind::DssOSage, Wavefront::Swf);
        let p = path_at(&cfg, 25.0, 5.0, Some(8.0));
        let x = observe(&cfg, &p, 1.8, 3);
        let coarse = coarse_estimate(&x, &cfg).unwrap();
        let mut counters = EvalCounters::default();
        let tau = fine_delay(&x, &coarse, &c, &mut counters).unwrap();
        assert!((tau - anchor_delay(&cfg, &p, &coarse)).abs() <= 0.5 * est.delay_step + 1e-18);
        let expected = DelayPlan::local(coarse.delay, cfg.kernel.sample_spacing(), est.delay_step).count as u64;
        assert_eq!(counters.likelihood_evals, expected);
    }

    #[test]
    fn closed_form_gain_and_phases_at_truth() {
        let cfg = small_config();
        let est = EstimatorConfig::default();
        let c = ctx(&cfg, &est, EstimatorKind::DssOSage, Wavefront::Swf);
        let p = path_at(&cfg, 25.0, 5.0, Some(8.0));
        let perturbed = crate::synth::apply_phase_model(
            std::slice::from_ref(&p),
            &cfg,
            &PhaseInstabilityModel { mean: 0.0, sigma: 1.8, seed: 5 },
        )
        .pop()
        .unwrap();
        let x = observe(&cfg, &p, 1.8, 5);
        let w = partial_windows(&coarse_estimate(&x, &cfg).unwrap(), &c);
        let gp = closed_form_gain_phase(&x, &p, &w, &cfg, PhaseModel::PerDirection).unwrap();
        assert!((gp.gain / p.gain - 1.0).abs() < 1e-9);
        let resp = path_responses(&cfg, &p).unwrap();
        for &n in &w.rx {
            if resp[n].amplitude > 1e-3 {
                assert!(wrap_angle(gp.phases[n] - perturbed.phase(n)).abs() < 1e-9, "direction {n}");
            }
        }
        // Λ' at the truth equals α²·Σ c²E, the Cauchy–Schwarz bound
        let rows = window_correlations(&x, &p, &w, &cfg).unwrap();
        let bound: f64 = rows.iter().map(|(_, c, _, e)| c * c * e).sum::<f64>() * p.gain * p.gain;
        let l = lambda_prime(&p, &x, &w, &cfg).unwrap();
        assert!((l / bound - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coherent_gain_without_phase_noise() {
        let cfg = small_config();
        let est = EstimatorConfig::default();
        let c = ctx(&cfg, &est, EstimatorKind::SwfSage, Wavefront::Swf);
        let mut p = path_at(&cfg, 25.0, 5.0, Some(8.0));
        p.phases = vec![0.7; cfg.n_directions()];
        let x = observe(&cfg, &p, 0.0, 0);
        let w = partial_windows(&coarse_estimate(&x, &cfg).unwrap(), &c);
        let gp = closed_form_gain_phase(&x, &p, &w, &cfg, PhaseModel::Coherent).unwrap();
        assert!((gp.gain / p.gain - 1.0).abs() < 1e-9);
        assert!(gp.phases.iter().all(|ph| (ph - 0.7).abs() < 1e-9));
        let coh = coherent_objective(&p, &x, &w, &cfg).unwrap();
        let dss = lambda_prime(&p, &x, &w, &cfg).unwrap();
        assert!((coh / dss - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_energy_model_is_an_error() {
        let cfg = small_config();
        let x = vec![Complex64::new(0.0, 0.0); cfg.tensor_len()];
        let w = PartialWindows { samples: 0..0, tx: vec![0], rx: vec![0] };
        let p = path_at(&cfg, 25.0, 5.0, None);
        assert!(matches!(lambda_prime(&p, &x, &w, &cfg), Err(Error::Numerical(_))));
    }

    #[test]
    fn reference_delay_inverts_anchor_offset() {
        let cfg = small_config();
        for d in [None, Some(12.0), Some(40.0)] {
            let p = path_at(&cfg, 31.0, -4.0, d);
            let x = observe(&cfg, &p, 0.0, 0);
            let coarse = coarse_estimate(&x, &cfg).unwrap();
            let tau = anchor_delay(&cfg, &p, &coarse);
            let r = reference_delay(tau, &coarse, p.dod, p.doa, p.d_tx, p.d_rx, &cfg);
            assert!((r - p.ref_delay).abs() < 1e-20);
        }
    }

    #[test]
    fn default_bounds_cover_rayleigh_distance() {
        let cfg = reference_config();
        let (lo, hi) = default_distance_bounds(&cfg.rx, &cfg);
        let lambda = SPEED_OF_LIGHT / cfg.center_frequency().unwrap();
        assert_eq!(lo, 0.5);
        assert!((hi - 2.0 * 0.4f64.powi(2) / lambda).abs() < 1e-9);
        let (_, hi) = default_distance_bounds(&ArraySide::fixed_isotropic(), &cfg);
        assert_eq!(hi, 50.0);
    }

    #[test]
    fn fine_search_recovers_noiseless_path_with_distance() {
        // (5°, 5°, 10 m) with per-direction random phases, anchored at the true observed delay
        let cfg = reference_config();
        let est = EstimatorConfig::default();
        let c = ctx(&cfg, &est, EstimatorKind::DssOSage, Wavefront::Swf);
        let p = single_path_scenario(10.0, cfg.center_frequency().unwrap(), &cfg).unwrap();
        let x = observe(&cfg, &p, 1.8, 1);
        let coarse = coarse_estimate(&x, &cfg).unwrap();
        let mut counters = EvalCounters::default();
        let tau = anchor_delay(&cfg, &p, &coarse);
        let (o, plan) = fine_angles_distance(&x, &coarse, tau, Side::Rx, &c, &mut counters).unwrap();
        assert!((o.azimuth - p.doa.azimuth()).abs().to_degrees() <= 0.002 + 1e-9);
        assert!((o.elevation - p.doa.elevation()).abs().to_degrees() <= 0.002 + 1e-9);
        assert!((o.distance.unwrap() - 10.0).abs() <= 0.01 + 1e-9);
        assert!(!plan.clipped);
        assert_eq!(counters.likelihood_evals, o.evals);
    }

    fn oracle_config() -> EstimatorConfig {
        EstimatorConfig {
            angle_fine_step: 0.02f64.to_radians(),
            refine_levels: 2,
            wavefront: Wavefront::Ffa,
            ..Default::default()
        }
    }

    #[test]
    fn coarse_to_fine_matches_exhaustive_on_the_lattice() {
        let cfg = small_config();
        let est = oracle_config();
        let c = ctx(&cfg, &est, EstimatorKind::DssOSage, Wavefront::Ffa);
        for (k, (az, el)) in [(21.3, 3.7), (28.9, -6.1), (14.2, 1.1)].into_iter().enumerate() {
            let p = path_at(&cfg, az, el, None);
            let x = observe(&cfg, &p, 1.8, k as u64);
            let coarse = coarse_estimate(&x, &cfg).unwrap();
            let tau = anchor_delay(&cfg, &p, &coarse);
            let mut counters = EvalCounters::default();
            let (fast, _) = fine_angles_distance(&x, &coarse, tau, Side::Rx, &c, &mut counters).unwrap();
            let slow = fine_angles_exhaustive(&x, &coarse, tau, Side::Rx, &c, None).unwrap();
            assert_eq!((fast.azimuth, fast.elevation), (slow.azimuth, slow.elevation));
            assert!(fast.evals < slow.evals / 10);
        }
    }

    #[test]
    fn m_step_recovers_single_path() {
        let cfg = reference_config();
        let est = EstimatorConfig::default();
        let p = single_path_scenario(10.0, cfg.center_frequency().unwrap(), &cfg).unwrap();
        let x = observe(&cfg, &p, 1.8, 2);
        let c = ctx(&cfg, &est, EstimatorKind::DssOSage, Wavefront::Swf);
        let mut counters = EvalCounters::default();
        let out = m_step(&x, &c, &mut counters).unwrap();
        let q = &out.path;
        assert!((q.doa.azimuth_deg() - 5.0).abs() < 0.01);
        assert!((q.doa.elevation_deg() - 5.0).abs() < 0.05);
        assert!((q.d_rx.unwrap() - 10.0).abs() < 0.5);
        assert!((q.gain / p.gain - 1.0).abs() < 1e-3);
        assert!((q.ref_delay - p.ref_delay).abs() < 2e-12);
        assert_eq!(counters.m_steps, 1);
        assert!(counters.max_elements_per_eval <= 360);
    }

    #[test]
    fn surrogate_counts_follow_the_search_plan() {
        // the global plane-wave search does not depend on the data, so the dry run counts what the real one does
        let cfg = small_config();
        let est = EstimatorConfig { scope: SearchScope::Global, angle_fine_step: 0.02f64.to_radians(), ..Default::default() };
        let c = ctx(&cfg, &est, EstimatorKind::PwfSage, Wavefront::Ffa);
        let p = path_at(&cfg, 21.3, 3.7, None);
        let x = observe(&cfg, &p, 0.0, 0);
        let mut real = EvalCounters::default();
        let out = m_step(&x, &c, &mut real).unwrap();
        let dry = count_m_step(&x, &c, &p).unwrap();
        assert_eq!(dry.likelihood_evals, real.likelihood_evals);
        assert_eq!(dry.elements_touched, real.elements_touched);
        assert!((out.path.doa.azimuth_deg() - 21.3).abs() < 0.011);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn lambda_prime_ignores_per_direction_phases(seed in 0u64..1000, rot in proptest::collection::vec(-3.2f64..3.2, 18)) {
            let cfg = small_config();
            let est = EstimatorConfig::default();
            let c = ctx(&cfg, &est, EstimatorKind::DssOSage, Wavefront::Swf);
            let p = path_at(&cfg, 25.0, 5.0, Some(8.0));
            let x = observe(&cfg, &p, 1.8, seed);
            let w = partial_windows(&coarse_estimate(&x, &cfg).unwrap(), &c);
            let mut y = x.clone();
            for (n, chunk) in y.chunks_mut(cfg.samples()).enumerate() {
                let r = Complex64::from_polar(1.0, rot[n]);
                chunk.iter_mut().for_each(|v| *v *= r);
            }
            let mut q = p.clone();
            q.doa = Direction::from_degrees(24.0, 6.5).unwrap();
            for theta in [&p, &q] {
                let a = lambda_prime(theta, &x, &w, &cfg).unwrap();
                let b = lambda_prime(theta, &y, &w, &cfg).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs());
            }
        }

        #[test]
        fn coherent_objective_never_exceeds_lambda_prime(seed in 0u64..1000, az in 15.0f64..35.0, el in -8.0f64..8.0) {
            let cfg = small_config();
            let est = EstimatorConfig::default();
            let c = ctx(&cfg, &est, EstimatorKind::SwfSage, Wavefront::Swf);
            let p = path_at(&cfg, 25.0, 5.0, Some(8.0));
            let x = observe(&cfg, &p, 1.0, seed);
            let w = partial_windows(&coarse_estimate(&x, &cfg).unwrap(), &c);
            let q = path_at(&cfg, az, el, Some(8.0));
            let coh = coherent_objective(&q, &x, &w, &cfg).unwrap();
            let dss = lambda_prime(&q, &x, &w, &cfg).unwrap();
            prop_assert!(coh <= dss * (1.0 + 1e-12));
        }
    }
}
