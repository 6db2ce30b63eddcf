//! Midpoint quadrature of truncated multilinear operators, square functions
//! and multilinear maximal functions, plus empirical operator-norm ratios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{
    sample_recipe, weighted_lp, weighted_lp_power_points, Grid, Recipe, SampledFunction,
};
use crate::kernels::{Kernel, ScaleFamily};
use crate::numerics::{distance, median, smooth_step, CompensatedSum};
use crate::weights::{nu_weight, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    /// χ_{[1,∞)}(Σ/δ)
    Sharp,
    /// u(Σ/δ) with χ_{[1,∞)} ≤ u ≤ χ_{[1/2,∞)}
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub delta: f64,
    pub cutoff: Cutoff,
}

impl TruncationPolicy {
    pub fn new(delta: f64, cutoff: Cutoff) -> Self {
        Self { delta, cutoff }
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        let min = 2.0 * grid.spacing();
        // tolerate round-off when delta is computed as a multiple of h
        if !(self.delta >= min * (1.0 - 1e-12)) {
            return Err(Error::DiagonalUnderResolved {
                delta: self.delta,
                min,
            });
        }
        Ok(())
    }

    /// Cutoff weight at Σ|x - y_j| = s.
    #[inline]
    pub fn weight(&self, s: f64) -> f64 {
        match self.cutoff {
            Cutoff::Sharp => {
                if s >= self.delta {
                    1.0
                } else {
                    0.0
                }
            }
            Cutoff::Smooth => smooth_step(s / self.delta),
        }
    }
}

/// Evaluation points as lattice indices of a grid (they may lie outside the
/// box) together with the quadrature volume each point represents.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoints {
    pub lattice: Vec<Vec<i64>>,
    pub volume: f64,
}

impl EvalPoints {
    pub fn full(grid: &Grid) -> Self {
        Self::decimated(grid, 1)
    }

    /// Every `stride`-th center per axis, starting at stride/2.
    pub fn decimated(grid: &Grid, stride: usize) -> Self {
        let stride = stride.max(1);
        let axis: Vec<i64> = (stride / 2..grid.points_per_axis)
            .step_by(stride)
            .map(|k| k as i64)
            .collect();
        let mut lattice = vec![Vec::new()];
        for _ in 0..grid.n {
            lattice = lattice
                .into_iter()
                .flat_map(|prefix: Vec<i64>| {
                    axis.iter().map(move |&k| {
                        let mut p = prefix.clone();
                        p.push(k);
                        p
                    })
                })
                .collect();
        }
        Self {
            lattice,
            volume: (stride as f64 * grid.spacing()).powi(grid.n as i32),
        }
    }

    /// Default: every 4th center.
    pub fn default_for(grid: &Grid) -> Self {
        Self::decimated(grid, 4)
    }

    pub fn explicit(lattice: Vec<Vec<i64>>, volume: f64) -> Self {
        Self { lattice, volume }
    }

    pub fn coordinates(&self, grid: &Grid) -> Vec<Vec<f64>> {
        self.lattice.iter().map(|i| grid.lattice_point(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }
}

/// One value per evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorOutput {
    pub points: Vec<Vec<f64>>,
    pub lattice: Vec<Vec<i64>>,
    pub values: Vec<f64>,
    pub volume: f64,
}

impl OperatorOutput {
    /// Σ |value|^p w(point) volume.
    pub fn lp_power<W: crate::weights::Weight + ?Sized>(&self, p: f64, w: &W) -> Result<f64> {
        weighted_lp_power_points(&self.values, &self.points, self.volume, p, w)
    }

    pub fn lp<W: crate::weights::Weight + ?Sized>(&self, p: f64, w: &W) -> Result<f64> {
        Ok(self.lp_power(p, w)?.powf(1.0 / p))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Nonzero cells of one input: packed coordinates and values.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotData {
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl SlotData {
    pub fn from_function(f: &SampledFunction) -> Self {
        let grid = f.grid();
        let support = f.support();
        let mut coords = vec![0.0; support.len() * grid.n];
        for (chunk, &k) in coords.chunks_mut(grid.n).zip(&support) {
            grid.center_into(k, chunk);
        }
        let values = support.iter().map(|&k| f.values()[k]).collect();
        Self { coords, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Visits every tuple (y_1..y_m) of support cells with Σ_j |x - y_j| and
/// Π_j f_j(y_j). The last slot varies fastest.
pub fn for_each_tuple(
    x: &[f64],
    slots: &[SlotData],
    n: usize,
    mut visit: impl FnMut(&[f64], f64, f64),
) {
    let m = slots.len();
    if m == 0 || slots.iter().any(|s| s.is_empty()) {
        return;
    }
    let dists: Vec<Vec<f64>> = slots
        .iter()
        .map(|s| s.coords.chunks_exact(n).map(|y| distance(x, y)).collect())
        .collect();
    let mut idx = vec![0usize; m];
    let mut ys = vec![0.0; m * n];
    for j in 0..m {
        ys[j * n..(j + 1) * n].copy_from_slice(&slots[j].coords[..n]);
    }
    loop {
        let mut sum = 0.0;
        let mut prod = 1.0;
        for j in 0..m {
            sum += dists[j][idx[j]];
            prod *= slots[j].values[idx[j]];
        }
        visit(&ys, sum, prod);
        let mut j = m;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < slots[j].len() {
                ys[j * n..(j + 1) * n]
                    .copy_from_slice(&slots[j].coords[idx[j] * n..(idx[j] + 1) * n]);
                break;
            }
            idx[j] = 0;
            ys[j * n..(j + 1) * n].copy_from_slice(&slots[j].coords[..n]);
        }
    }
}

/// Σ over tuples of u(Σ/δ) K(x, y) Π f_j(y_j), times h^{nm}.
pub fn truncated_integral(
    k: &dyn Kernel,
    x: &[f64],
    slots: &[SlotData],
    trunc: &TruncationPolicy,
    cell_volume: f64,
) -> f64 {
    let mut acc = CompensatedSum::new();
    for_each_tuple(x, slots, k.n(), |ys, sum, prod| {
        if prod == 0.0 {
            return;
        }
        let u = trunc.weight(sum);
        if u == 0.0 {
            return;
        }
        acc.add(u * k.eval(x, ys) * prod);
    });
    acc.value() * cell_volume.powi(slots.len() as i32)
}

/// Validates inputs against the kernel's (m, n) and returns their grid.
pub fn check_inputs(fs: &[SampledFunction], m: usize, n: usize) -> Result<Grid> {
    if fs.len() != m {
        return Err(Error::InvalidArgument(format!(
            "operator takes {m} inputs, got {}",
            fs.len()
        )));
    }
    let grid = *fs[0].grid();
    if fs.iter().any(|f| *f.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    if grid.n != n {
        return Err(Error::InvalidArgument(format!(
            "kernel dimension {n} differs from grid dimension {}",
            grid.n
        )));
    }
    Ok(grid)
}

fn output(grid: &Grid, points: &EvalPoints, values: Vec<f64>) -> OperatorOutput {
    OperatorOutput {
        points: points.coordinates(grid),
        lattice: points.lattice.clone(),
        values,
        volume: points.volume,
    }
}

/// T_δ(f)(x) at every evaluation point.
pub fn apply_t(
    k: &dyn Kernel,
    fs: &[SampledFunction],
    trunc: &TruncationPolicy,
    points: &EvalPoints,
) -> Result<OperatorOutput> {
    let grid = check_inputs(fs, k.m(), k.n())?;
    trunc.check(&grid)?;
    let slots: Vec<SlotData> = fs.iter().map(SlotData::from_function).collect();
    let coords = points.coordinates(&grid);
    let values = coords
        .par_iter()
        .map(|x| truncated_integral(k, x, &slots, trunc, grid.cell_volume()))
        .collect();
    Ok(output(&grid, points, values))
}

/// Scale-family evaluation with reusable scratch space.
pub(crate) struct ScaledEval<'a> {
    fam: &'a ScaleFamily,
    ts: Vec<f64>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    mn: i32,
}

impl<'a> ScaledEval<'a> {
    pub(crate) fn new(fam: &'a ScaleFamily) -> Self {
        let base = fam.base();
        Self {
            fam,
            ts: fam.t_grid(),
            xs: vec![0.0; base.n()],
            ys: vec![0.0; base.m() * base.n()],
            mn: (base.m() * base.n()) as i32,
        }
    }

    pub(crate) fn t_count(&self) -> usize {
        self.ts.len()
    }

    pub(crate) fn eval(&mut self, k: usize, x: &[f64], ys: &[f64]) -> f64 {
        let t = self.ts[k];
        for (a, b) in self.xs.iter_mut().zip(x) {
            *a = b / t;
        }
        for (a, b) in self.ys.iter_mut().zip(ys) {
            *a = b / t;
        }
        self.fam.base().eval(&self.xs, &self.ys) / t.powi(self.mn)
    }
}

/// Θ_t(x) = Σ tuples u K_t(x, y) Π f_j for every t of the family's grid.
pub(crate) fn theta_profile(
    fam: &ScaleFamily,
    x: &[f64],
    slots: &[SlotData],
    trunc: Option<&TruncationPolicy>,
    cell_volume: f64,
) -> Vec<f64> {
    let mut ev = ScaledEval::new(fam);
    let count = ev.t_count();
    let mut acc = vec![CompensatedSum::new(); count];
    for_each_tuple(x, slots, fam.base().n(), |ys, sum, prod| {
        if prod == 0.0 {
            return;
        }
        let u = trunc.map_or(1.0, |t| t.weight(sum));
        if u == 0.0 {
            return;
        }
        for (k, a) in acc.iter_mut().enumerate() {
            let v = ev.eval(k, x, ys);
            if v != 0.0 {
                a.add(u * v * prod);
            }
        }
    });
    let vol = cell_volume.powi(slots.len() as i32);
    acc.iter().map(|a| a.value() * vol).collect()
}

pub(crate) fn h1_of_profile(profile: &[f64], log_step: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in profile {
        acc.add(v * v);
    }
    (acc.value() * log_step).sqrt()
}

fn check_trunc(trunc: Option<&TruncationPolicy>, grid: &Grid) -> Result<()> {
    match trunc {
        Some(t) => t.check(grid),
        None => Ok(()),
    }
}

/// G(f)(x) = (Σ_k |Θ_{t_k}(x)|² ln r)^{1/2}.
pub fn apply_g(
    fam: &ScaleFamily,
    fs: &[SampledFunction],
    points: &EvalPoints,
    trunc: Option<&TruncationPolicy>,
) -> Result<OperatorOutput> {
    let grid = check_inputs(fs, fam.base().m(), fam.base().n())?;
    check_trunc(trunc, &grid)?;
    let slots: Vec<SlotData> = fs.iter().map(SlotData::from_function).collect();
    let coords = points.coordinates(&grid);
    let values = coords
        .par_iter()
        .map(|x| {
            h1_of_profile(
                &theta_profile(fam, x, &slots, trunc, grid.cell_volume()),
                fam.log_step(),
            )
        })
        .collect();
    Ok(output(&grid, points, values))
}

/// Σ_t Σ_z (t/(|x-z|+t))^{nλ} |Θ_t(z)|² h_z^n ln r / t^n, square-rooted;
/// `theta[z][k]` holds Θ_{t_k}(z) for the cells of `z_grid`.
pub(crate) fn h2_of_field(
    fam: &ScaleFamily,
    lambda: f64,
    x: &[f64],
    z_grid: &Grid,
    theta: &[Vec<f64>],
) -> f64 {
    let ts = fam.t_grid();
    let n = z_grid.n;
    let mut z = vec![0.0; n];
    let mut acc = CompensatedSum::new();
    for (k, &t) in ts.iter().enumerate() {
        let mut inner = CompensatedSum::new();
        for (zi, row) in theta.iter().enumerate() {
            let v = row[k];
            if v == 0.0 {
                continue;
            }
            z_grid.center_into(zi, &mut z);
            inner.add((t / (distance(x, &z) + t)).powf(n as f64 * lambda) * v * v);
        }
        acc.add(inner.value() / t.powi(n as i32));
    }
    (acc.value() * z_grid.cell_volume() * fam.log_step()).sqrt()
}

pub(crate) fn check_star(lambda: f64, z_grid: &Grid, n: usize) -> Result<()> {
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::LambdaTooSmall(lambda));
    }
    if z_grid.n != n {
        return Err(Error::InvalidArgument("z grid dimension mismatch".into()));
    }
    Ok(())
}

/// G*_λ(f)(x); Θ_t(z) does not depend on x and is computed once.
pub fn apply_g_star(
    fam: &ScaleFamily,
    lambda: f64,
    fs: &[SampledFunction],
    points: &EvalPoints,
    z_grid: &Grid,
    trunc: Option<&TruncationPolicy>,
) -> Result<OperatorOutput> {
    let grid = check_inputs(fs, fam.base().m(), fam.base().n())?;
    check_star(lambda, z_grid, grid.n)?;
    check_trunc(trunc, &grid)?;
    let slots: Vec<SlotData> = fs.iter().map(SlotData::from_function).collect();
    let theta: Vec<Vec<f64>> = (0..z_grid.len())
        .into_par_iter()
        .map(|zi| theta_profile(fam, &z_grid.center(zi), &slots, trunc, grid.cell_volume()))
        .collect();
    let coords = points.coordinates(&grid);
    let values = coords
        .par_iter()
        .map(|x| h2_of_field(fam, lambda, x, z_grid, &theta))
        .collect();
    Ok(output(&grid, points, values))
}

/// Dyadic side lengths 1, 2, 4, ... cells up to the full box.
pub fn dyadic_scales(grid: &Grid) -> Vec<usize> {
    let mut out = Vec::new();
    let mut s = 1;
    while s <= grid.points_per_axis {
        out.push(s);
        s *= 2;
    }
    out
}

/// Summed-area table of |f| over the grid, (N+1)^n entries.
struct PrefixSums {
    n: usize,
    size: usize,
    table: Vec<f64>,
}

impl PrefixSums {
    fn new(f: &SampledFunction) -> Self {
        let grid = f.grid();
        let n = grid.n;
        let size = grid.points_per_axis + 1;
        let mut table = vec![0.0; size.pow(n as u32)];
        for (k, v) in f.values().iter().enumerate() {
            let idx = grid.multi_index(k);
            let mut flat = 0;
            for &i in &idx {
                flat = flat * size + i + 1;
            }
            table[flat] = v.abs();
        }
        let mut stride = 1;
        for _ in 0..n {
            for flat in 0..table.len() {
                if (flat / stride) % size != 0 {
                    table[flat] += table[flat - stride];
                }
            }
            stride *= size;
        }
        Self { n, size, table }
    }

    /// Σ |f| over cells with lo ≤ idx < hi per axis (clipped to the box).
    fn box_sum(&self, lo: &[i64], hi: &[i64]) -> f64 {
        let cells = (self.size - 1) as i64;
        let lo: Vec<usize> = lo.iter().map(|&v| v.clamp(0, cells) as usize).collect();
        let hi: Vec<usize> = hi.iter().map(|&v| v.clamp(0, cells) as usize).collect();
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return 0.0;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << self.n) {
            let mut flat = 0;
            let mut sign = 1.0;
            for d in 0..self.n {
                let pick_lo = corner >> d & 1 == 1;
                if pick_lo {
                    sign = -sign;
                }
                flat = flat * self.size + if pick_lo { lo[d] } else { hi[d] };
            }
            total += sign * self.table[flat];
        }
        total.max(0.0)
    }
}

/// M_A(f)(x): max over tested cubes Q ∋ x of Π_{j∈A} avg_Q |f_j|, with cubes
/// of the given side lengths (in cells) on three shifted lattices per side.
/// Slots in `subset` are 0-based; the empty subset gives 1.
pub fn maximal_ma(
    fs: &[SampledFunction],
    subset: &[usize],
    points: &EvalPoints,
    scales: &[usize],
) -> Result<OperatorOutput> {
    if fs.is_empty() {
        return Err(Error::InvalidArgument("no inputs".into()));
    }
    let grid = *fs[0].grid();
    if fs.iter().any(|f| *f.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    if scales.is_empty() || scales.contains(&0) {
        return Err(Error::InvalidArgument(
            "scales must be positive and nonempty".into(),
        ));
    }
    if let Some(&j) = subset.iter().find(|&&j| j >= fs.len()) {
        return Err(Error::InvalidArgument(format!(
            "slot {} out of range",
            j + 1
        )));
    }
    if subset.is_empty() {
        return Ok(output(&grid, points, vec![1.0; points.len()]));
    }
    let mut slots = subset.to_vec();
    slots.sort_unstable();
    slots.dedup();
    let tables: Vec<PrefixSums> = slots.iter().map(|&j| PrefixSums::new(&fs[j])).collect();
    let n = grid.n;
    let values = points
        .lattice
        .par_iter()
        .map(|x| {
            let mut best: f64 = 0.0;
            for &s in scales {
                let si = s as i64;
                let mut offsets = vec![0, si / 3, 2 * si / 3];
                offsets.dedup();
                for &o in &offsets {
                    let lo: Vec<i64> = x.iter().map(|&i| (i - o).div_euclid(si) * si + o).collect();
                    let hi: Vec<i64> = lo.iter().map(|&l| l + si).collect();
                    let volume = (s as f64).powi(n as i32);
                    let value: f64 = tables
                        .iter()
                        .map(|t| t.box_sum(&lo, &hi) / volume)
                        .product();
                    best = best.max(value);
                }
            }
            best
        })
        .collect();
    Ok(output(&grid, points, values))
}

/// Ratios of one grid's test set.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRatios {
    pub grid: Grid,
    pub ratios: Vec<f64>,
    pub max: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub per_grid: Vec<GridRatios>,
    /// Largest relative change of the max ratio between consecutive grids.
    pub stability: f64,
}

/// ‖op(f)‖_{L^p(ν)} / Π_j ‖f_j‖_{L^{p_j}(ω_j)}.
pub fn ratio_of(out: &OperatorOutput, fs: &[SampledFunction], wv: &WeightVector) -> Result<f64> {
    if fs.len() != wv.m() {
        return Err(Error::InvalidArgument(
            "input count differs from weight count".into(),
        ));
    }
    let mut denom = 1.0;
    for (j, f) in fs.iter().enumerate() {
        let norm = weighted_lp(f, wv.exponents()[j], &wv.weights()[j])?;
        if norm == 0.0 {
            return Err(Error::ZeroDenominator { slot: j + 1 });
        }
        denom *= norm;
    }
    let nu = nu_weight(wv, &wv.all_slots())?;
    Ok(out.lp(wv.p(), &nu)? / denom)
}

/// Samples every test tuple on every grid and reports the ratios.
pub fn empirical_ratio<F>(
    op: F,
    wv: &WeightVector,
    testset: &[Vec<Recipe>],
    grids: &[Grid],
) -> Result<RatioReport>
where
    F: Fn(&[SampledFunction]) -> Result<OperatorOutput> + Sync,
{
    if testset.is_empty() || grids.is_empty() {
        return Err(Error::InvalidArgument("empty test set or grid list".into()));
    }
    let mut per_grid = Vec::new();
    for &grid in grids {
        let ratios = testset
            .iter()
            .map(|tuple| {
                let fs = tuple
                    .iter()
                    .map(|r| sample_recipe(r, grid))
                    .collect::<Result<Vec<_>>>()?;
                ratio_of(&op(&fs)?, &fs, wv)
            })
            .collect::<Result<Vec<f64>>>()?;
        let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        per_grid.push(GridRatios {
            grid,
            median: median(&ratios),
            max,
            ratios,
        });
    }
    let stability = per_grid
        .windows(2)
        .map(|w| (w[1].max / w[0].max - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(RatioReport {
        per_grid,
        stability,
    })
}
