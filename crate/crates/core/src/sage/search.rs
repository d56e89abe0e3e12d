//! Grid searches on nested integer lattices.
//!
//! Every search axis is a lattice `start + k·unit`, `k ∈ [0, max_index]`, with
//! `unit` the finest step. Coarser levels visit multiples of a stride, so the
//! points of each level are a subset of the exhaustive fine grid.

/// One search axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub start: f64,
    pub unit: f64,
    pub max_index: i64,
}

impl Lattice {
    /// Points `lo + k·unit` up to `hi` (inclusive, with rounding slack).
    pub fn spanning(lo: f64, hi: f64, unit: f64) -> Self {
        let max_index = (((hi - lo) / unit) + 1e-6).floor().max(0.0) as i64;
        Self { start: lo, unit, max_index }
    }

    pub fn value(&self, k: i64) -> f64 {
        self.start + k as f64 * self.unit
    }

    pub fn len(&self) -> usize {
        (self.max_index + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nearest index to `x`, clamped into the lattice.
    pub fn nearest(&self, x: f64) -> i64 {
        (((x - self.start) / self.unit).round() as i64).clamp(0, self.max_index)
    }

    /// Nearest multiple of `stride` to `x`, clamped into the lattice.
    pub fn nearest_multiple(&self, x: f64, stride: i64) -> i64 {
        let k = ((x - self.start) / (self.unit * stride as f64)).round() as i64 * stride;
        k.clamp(0, self.max_index / stride * stride)
    }
}

/// Integer step ratio between a coarse and a fine step.
pub fn step_ratio(coarse: f64, fine: f64) -> Option<i64> {
    let r = coarse / fine;
    let k = r.round();
    if k >= 1.0 && (r - k).abs() < 1e-6 * k {
        Some(k as i64)
    } else {
        None
    }
}

/// Strides for `levels` search levels, from `ratio` down to 1; each stride
/// divides the previous one and intermediate strides sit near the geometric
/// interpolation between the two ends.
pub fn stride_schedule(ratio: i64, levels: usize) -> Vec<i64> {
    assert!(ratio >= 1 && levels >= 1);
    if levels == 1 {
        return vec![1];
    }
    let mut out = vec![ratio];
    let mut cur = ratio;
    for l in 1..levels - 1 {
        let remaining = (levels - 1 - l + 1) as f64;
        let target = (cur as f64).powf(1.0 - 1.0 / remaining);
        let best = (1..=cur)
            .filter(|d| cur % d == 0)
            .min_by(|a, b| ((*a as f64).ln() - target.ln()).abs().total_cmp(&((*b as f64).ln() - target.ln()).abs()))
            .unwrap_or(1);
        out.push(best);
        cur = best;
    }
    out.push(1);
    out.dedup();
    out
}

/// All multiples of `stride` within the lattice.
pub fn coarse_points(lat: &Lattice, stride: i64) -> Vec<i64> {
    (0..=lat.max_index / stride).map(|k| k * stride).collect()
}

/// `centre + j·stride` for |j·stride| ≤ half, clipped to the lattice.
pub fn neighbourhood(lat: &Lattice, centre: i64, half: i64, stride: i64) -> Vec<i64> {
    let j = half / stride;
    (-j..=j).map(|k| centre + k * stride).filter(|k| *k >= 0 && *k <= lat.max_index).collect()
}

/// Argmax over the Cartesian product of per-axis index lists, axis 0
/// outermost. Ties keep the first point visited; NaN never wins.
/// Returns the best point, its value and the number of evaluations.
pub fn argmax_grid(axes: &[Vec<i64>], f: &mut dyn FnMut(&[i64]) -> f64) -> (Vec<i64>, f64, u64) {
    assert!(!axes.is_empty() && axes.iter().all(|a| !a.is_empty()));
    let dims = axes.len();
    let mut pos = vec![0usize; dims];
    let mut point: Vec<i64> = axes.iter().map(|a| a[0]).collect();
    let mut best = point.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut evals = 0u64;
    let mut first = true;
    loop {
        let v = f(&point);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        evals += 1;
        if first || v > best_val {
            best.copy_from_slice(&point);
            best_val = v;
            first = false;
        }
        // odometer, last axis fastest
        let mut d = dims;
        loop {
            if d == 0 {
                return (best, best_val, evals);
            }
            d -= 1;
            pos[d] += 1;
            if pos[d] < axes[d].len() {
                point[d] = axes[d][pos[d]];
                break;
            }
            pos[d] = 0;
            point[d] = axes[d][0];
        }
    }
}

/// Box re-centrings allowed per refinement level.
pub const MAX_RECENTRE: usize = 64;

/// Refinement levels after a coarse optimum: level `l ≥ 1` searches within
/// ±stride[l−1] of the current optimum at stride[l], per axis. While the
/// level optimum lies on a face of its box (not at the lattice edge) and
/// improves on the centre, the box is moved there and searched again.
pub fn refine(
    lattices: &[Lattice],
    schedules: &[Vec<i64>],
    start: &[i64],
    start_val: f64,
    f: &mut dyn FnMut(&[i64]) -> f64,
) -> (Vec<i64>, f64, u64) {
    let levels = schedules.iter().map(|s| s.len()).max().unwrap_or(1);
    let mut cur = start.to_vec();
    let mut val = start_val;
    let mut evals = 0;
    for l in 1..levels {
        let spans: Vec<(i64, i64)> =
            schedules.iter().map(|s| if l < s.len() { (s[l - 1], s[l]) } else { (0, 1) }).collect();
        for _ in 0..=MAX_RECENTRE {
            let axes: Vec<Vec<i64>> = lattices
                .iter()
                .zip(&spans)
                .zip(&cur)
                .map(|((lat, &(half, stride)), &c)| neighbourhood(lat, c, half, stride))
                .collect();
            let (p, v, n) = argmax_grid(&axes, f);
            evals += n;
            let on_face = p.iter().zip(&cur).zip(&spans).zip(lattices).any(|(((&k, &c), &(half, stride)), lat)| {
                let reach = half / stride * stride;
                reach > 0 && (k - c).abs() == reach && k > 0 && k < lat.max_index
            });
            let moved = v > val;
            if moved {
                cur = p;
                val = v;
            }
            if !(moved && on_face) {
                break;
            }
        }
    }
    (cur, val, evals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(stride_schedule(100, 3), vec![100, 10, 1]);
        assert_eq!(stride_schedule(20, 3), vec![20, 5, 1]);
        assert_eq!(stride_schedule(100, 2), vec![100, 1]);
        assert_eq!(stride_schedule(1, 3), vec![1]);
        assert_eq!(step_ratio(0.2, 0.002), Some(100));
        assert_eq!(step_ratio(0.2, 0.003), None);
    }

    #[test]
    fn lattice_points() {
        let lat = Lattice::spanning(-5.0, 5.0, 0.002);
        assert_eq!(lat.max_index, 5000);
        assert_eq!(coarse_points(&lat, 100).len(), 51);
        assert_eq!(neighbourhood(&lat, 100, 100, 10).len(), 21);
        assert_eq!(neighbourhood(&lat, 0, 100, 10).len(), 11);
        assert_eq!(lat.nearest_multiple(0.31 - 5.0, 100), 200);
    }

    #[test]
    fn argmax_ties_and_order() {
        let axes = vec![vec![0, 1, 2], vec![5, 6]];
        let mut seen = Vec::new();
        let (p, v, n) = argmax_grid(&axes, &mut |x| {
            seen.push(x.to_vec());
            if x[0] >= 1 { 1.0 } else { 0.0 }
        });
        assert_eq!(n, 6);
        assert_eq!(seen[1], vec![0, 6]);
        assert_eq!(p, vec![1, 5]);
        assert_eq!(v, 1.0);
        let (p, _, _) = argmax_grid(&axes, &mut |_| f64::NAN);
        assert_eq!(p, vec![0, 5]);
    }

    #[test]
    fn coarse_to_fine_matches_exhaustive_on_smooth_peak() {
        let lat = Lattice::spanning(0.0, 10.0, 0.002);
        let sched = stride_schedule(100, 3);
        for &(a, b) in &[(3.3333, 7.1717), (0.0011, 9.999), (5.0, 5.0)] {
            let mut f = |k: &[i64]| -((lat.value(k[0]) - a).powi(2) + 2.0 * (lat.value(k[1]) - b).powi(2));
            let c = coarse_points(&lat, 100);
            let (p0, v0, _) = argmax_grid(&[c.clone(), c], &mut f);
            let (p, _, _) = refine(&[lat, lat], &[sched.clone(), sched.clone()], &p0, v0, &mut f);
            let all: Vec<i64> = (0..=lat.max_index).collect();
            let ex0 = argmax_grid(std::slice::from_ref(&all), &mut |k| -(lat.value(k[0]) - a).powi(2)).0[0];
            let ex1 = argmax_grid(&[all], &mut |k| -(lat.value(k[0]) - b).powi(2)).0[0];
            assert_eq!(p, vec![ex0, ex1]);
        }
    }
}
