//! Uniform-grid functions on a box in R^n and the weighted L^p machinery
//! built on them.
//!
//! A [`Grid`] is the cube (-L, L)^n cut into `points_per_axis^n` equal cells;
//! a [`SampledFunction`] holds one value per cell center. Integrals are
//! midpoint sums, and functions are extended by zero outside the box.
//! Cells are flattened in row-major order (last axis varies fastest).

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{compensated_sum, euclid, fmt17, unit_bump, CompensatedSum};
use crate::rng::Stream;
use crate::weights::Weight;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl Grid {
    pub fn new(n: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "half width must be positive and finite, got {half_width}"
            )));
        }
        if points_per_axis == 0 || points_per_axis % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "points per axis must be a positive even integer, got {points_per_axis}"
            )));
        }
        let total = (points_per_axis as u128).checked_pow(n as u32);
        if total.is_none_or(|t| t > (1u128 << 32)) {
            return Err(Error::InvalidArgument("grid too large".into()));
        }
        Ok(Self {
            n,
            half_width,
            points_per_axis,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of lattice index `k` along one axis; `k` may lie outside
    /// `0..points_per_axis`, giving centers of the infinite extension.
    #[inline]
    pub fn coord(&self, k: i64) -> f64 {
        -self.half_width + (k as f64 + 0.5) * self.spacing()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.n];
        let mut rest = flat;
        for d in (0..self.n).rev() {
            idx[d] = rest % self.points_per_axis;
            rest /= self.points_per_axis;
        }
        idx
    }

    /// Flat index of a lattice multi-index, `None` outside the box.
    pub fn flat_index(&self, idx: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for &k in idx {
            if k < 0 || k >= self.points_per_axis as i64 {
                return None;
            }
            flat = flat * self.points_per_axis + k as usize;
        }
        Some(flat)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.center_into(flat, &mut out);
        out
    }

    #[inline]
    pub fn center_into(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for d in (0..self.n).rev() {
            out[d] = self.coord((rest % self.points_per_axis) as i64);
            rest /= self.points_per_axis;
        }
    }

    pub fn lattice_point(&self, idx: &[i64]) -> Vec<f64> {
        idx.iter().map(|&k| self.coord(k)).collect()
    }

    /// Nearest lattice index (per axis) to a coordinate.
    pub fn nearest_lattice(&self, x: &[f64]) -> Vec<i64> {
        let h = self.spacing();
        x.iter()
            .map(|&c| ((c + self.half_width) / h - 0.5).round() as i64)
            .collect()
    }

    /// Flat-packed coordinates of every cell center.
    pub fn centers(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len() * self.n];
        for (flat, chunk) in out.chunks_mut(self.n).enumerate() {
            self.center_into(flat, chunk);
        }
        out
    }

    /// Converts a shift vector into whole cells, rejecting off-lattice shifts.
    pub fn shift_in_cells(&self, u: &[f64]) -> Result<Vec<i64>> {
        if u.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "shift has {} components, grid dimension is {}",
                u.len(),
                self.n
            )));
        }
        let h = self.spacing();
        let mut cells = Vec::with_capacity(self.n);
        for &c in u {
            let q = c / h;
            let r = q.round();
            if (q - r).abs() > 1e-9 * q.abs().max(1.0) {
                return Err(Error::MisalignedShift {
                    shift: u.to_vec(),
                    spacing: h,
                });
            }
            cells.push(r as i64);
        }
        Ok(cells)
    }
}

/// Closed-form recipes for inputs, symbols and test families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Recipe {
    Zero,
    Constant {
        value: f64,
    },
    /// x_axis^power (power 1 gives the coordinate function).
    Monomial {
        axis: usize,
        power: i32,
    },
    /// amplitude · exp(1/((|x-c|/radius)² - 1)) inside the ball, zero outside.
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Gaussian {
        center: Vec<f64>,
        sigma: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// sin(2^k π x_0) times a unit bump of the given radius at the origin.
    Oscillation {
        k: u32,
        radius: f64,
    },
    /// Indicator of the axis-aligned box [lower, upper].
    Indicator {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// A bump plus `noise` times a smooth seeded perturbation with the same support.
    PerturbedBump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
        noise: f64,
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

impl Recipe {
    pub fn bump(center: Vec<f64>, radius: f64, amplitude: f64) -> Self {
        Recipe::Bump {
            center,
            radius,
            amplitude,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check_len = |v: &Vec<f64>, what: &str| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} has {} components, expected {n}",
                    v.len()
                )))
            }
        };
        let positive = |r: f64, what: &str| {
            if r > 0.0 && r.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} must be positive, got {r}"
                )))
            }
        };
        match self {
            Recipe::Zero | Recipe::Constant { .. } => Ok(()),
            Recipe::Monomial { axis, .. } => {
                if *axis < n {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("axis {axis} out of range")))
                }
            }
            Recipe::Bump { center, radius, .. } | Recipe::PerturbedBump { center, radius, .. } => {
                check_len(center, "bump center")?;
                positive(*radius, "bump radius")
            }
            Recipe::Gaussian { center, sigma, .. } => {
                check_len(center, "gaussian center")?;
                positive(*sigma, "gaussian sigma")
            }
            Recipe::Oscillation { radius, .. } => positive(*radius, "oscillation radius"),
            Recipe::Indicator { lower, upper } => {
                check_len(lower, "indicator lower corner")?;
                check_len(upper, "indicator upper corner")
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Recipe::Zero => 0.0,
            Recipe::Constant { value } => *value,
            Recipe::Monomial { axis, power } => x[*axis].powi(*power),
            Recipe::Bump {
                center,
                radius,
                amplitude,
            } => amplitude * unit_bump(scaled_dist2(x, center, *radius)),
            Recipe::Gaussian {
                center,
                sigma,
                amplitude,
            } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                amplitude * (-0.5 * d2 / (sigma * sigma)).exp()
            }
            Recipe::Oscillation { k, radius } => {
                let r2 = x.iter().map(|c| c * c).sum::<f64>() / (radius * radius);
                let freq = (1u64 << k) as f64 * std::f64::consts::PI;
                (freq * x[0]).sin() * unit_bump(r2)
            }
            Recipe::Indicator { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(c, (lo, hi))| *lo <= *c && *c <= *hi);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            Recipe::PerturbedBump {
                center,
                radius,
                amplitude,
                noise,
                seed,
            } => {
                let r2 = scaled_dist2(x, center, *radius);
                let base = unit_bump(r2);
                if base == 0.0 {
                    return 0.0;
                }
                base * (amplitude + noise * smooth_noise(x, center, *radius, *seed))
            }
        }
    }
}

fn scaled_dist2(x: &[f64], center: &[f64], radius: f64) -> f64 {
    x.iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / (radius * radius)
}

/// Four seeded plane-wave modes along a seeded direction, amplitude ≤ 1.
fn smooth_noise(x: &[f64], center: &[f64], radius: f64, seed: u64) -> f64 {
    let mut rng = Stream::new(seed);
    let dir = rng.direction(x.len());
    let proj: f64 = x
        .iter()
        .zip(center)
        .zip(&dir)
        .map(|((a, c), d)| (a - c) * d)
        .sum::<f64>()
        / radius;
    let mut total = 0.0;
    for q in 1..=4 {
        let amp = rng.range(-1.0, 1.0) / 4.0;
        let phase = rng.range(0.0, std::f64::consts::TAU);
        total += amp * (q as f64 * std::f64::consts::PI * proj + phase).sin();
    }
    total
}

/// One real value per cell center of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample {
                index,
                point: grid.center(index),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at a lattice multi-index; zero outside the box.
    pub fn at_lattice(&self, idx: &[i64]) -> f64 {
        self.grid.flat_index(idx).map_or(0.0, |k| self.values[k])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        self.map(|v| c * v)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Self::from_values(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Flat indices of the nonzero cells.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&k| self.values[k] != 0.0)
            .collect()
    }

    /// Writes the documented CSV layout:
    ///
    /// ```text
    /// # czlab-sampled-function v1 n=<n> half_width=<L> points_per_axis=<N>
    /// index,value
    /// 0,<value>
    /// ...
    /// ```
    ///
    /// Floats carry 17 significant digits, so reading back is lossless.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# czlab-sampled-function v1 n={} half_width={} points_per_axis={}",
            self.grid.n,
            fmt17(self.grid.half_width),
            self.grid.points_per_axis
        )?;
        writeln!(out, "index,value")?;
        let mut line = String::new();
        for (k, v) in self.values.iter().enumerate() {
            line.clear();
            let _ = writeln!(line, "{k},{}", fmt17(*v));
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("unexpected end of file".into()))?
                .map_err(|e| Error::Format(e.to_string()))
        };
        let header = next()?;
        let rest = header
            .strip_prefix("# czlab-sampled-function v1")
            .ok_or_else(|| Error::Format(format!("bad header line: {header}")))?;
        let (mut n, mut half_width, mut ppa) = (None, None, None);
        for field in rest.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header field: {field}")))?;
            let bad = |_| Error::Format(format!("bad value for {key}: {value}"));
            match key {
                "n" => n = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "half_width" => {
                    half_width = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?)
                }
                "points_per_axis" => {
                    ppa = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?)
                }
                _ => return Err(Error::Format(format!("unknown header field {key}"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("header lacks {k}"));
        let grid = Grid::new(
            n.ok_or_else(|| missing("n"))?,
            half_width.ok_or_else(|| missing("half_width"))?,
            ppa.ok_or_else(|| missing("points_per_axis"))?,
        )?;
        if next()?.trim() != "index,value" {
            return Err(Error::Format("missing column header".into()));
        }
        let mut values = vec![f64::NAN; grid.len()];
        let mut seen = 0usize;
        for line in lines {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (i, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad row: {line}")))?;
            let i: usize = i
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad index: {i}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad value: {v}")))?;
            if i >= values.len() {
                return Err(Error::Format(format!("index {i} out of range")));
            }
            values[i] = v;
            seen += 1;
        }
        if seen != grid.len() {
            return Err(Error::Format(format!(
                "expected {} rows, found {seen}",
                grid.len()
            )));
        }
        Self::from_values(grid, values)
    }
}

/// Samples a closed-form expression at every cell center.
pub fn sample(expr: impl Fn(&[f64]) -> f64, grid: Grid) -> Result<SampledFunction> {
    let mut x = vec![0.0; grid.n];
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        grid.center_into(k, &mut x);
        let v = expr(&x);
        if !v.is_finite() {
            return Err(Error::NonFiniteSample {
                index: k,
                point: x.clone(),
            });
        }
        values.push(v);
    }
    Ok(SampledFunction { grid, values })
}

pub fn sample_recipe(recipe: &Recipe, grid: Grid) -> Result<SampledFunction> {
    recipe.validate(grid.n)?;
    sample(|x| recipe.eval(x), grid)
}

/// Ordered members sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOfFunctions {
    members: Vec<SampledFunction>,
}

impl FamilyOfFunctions {
    pub fn new(members: Vec<SampledFunction>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("family must have a member".into()));
        }
        let grid = members[0].grid;
        if members.iter().any(|f| f.grid != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[SampledFunction] {
        &self.members
    }

    pub fn grid(&self) -> &Grid {
        &self.members[0].grid
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "exponent must be in (0, inf), got {p}"
        )))
    }
}

/// Σ_k |f(x_k)|^p w(x_k) h^n, the p-th power of the weighted quasi-norm.
/// For p < 1 this is the metric used throughout the compactness module.
pub fn weighted_lp_power<W: Weight + ?Sized>(f: &SampledFunction, p: f64, w: &W) -> Result<f64> {
    check_exponent(p)?;
    let grid = f.grid;
    let mut x = vec![0.0; grid.n];
    let mut acc = CompensatedSum::new();
    for (k, &v) in f.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        grid.center_into(k, &mut x);
        acc.add(v.abs().powf(p) * w.eval(&x));
    }
    Ok(acc.value() * grid.cell_volume())
}

pub fn weighted_lp<W: Weight + ?Sized>(f: &SampledFunction, p: f64, w: &W) -> Result<f64> {
    Ok(weighted_lp_power(f, p, w)?.powf(1.0 / p))
}

/// Values-only variant for functions given at arbitrary lattice points;
/// `volume` is the quadrature weight per point.
pub fn weighted_lp_power_points<W: Weight + ?Sized>(
    values: &[f64],
    points: &[Vec<f64>],
    volume: f64,
    p: f64,
    w: &W,
) -> Result<f64> {
    check_exponent(p)?;
    Ok(compensated_sum(
        values
            .iter()
            .zip(points)
            .filter(|(v, _)| **v != 0.0)
            .map(|(v, x)| v.abs().powf(p) * w.eval(x)),
    ) * volume)
}

/// g(x_k) = f(x_k + u) for a grid-aligned shift u; zero where x_k + u
/// leaves the box.
pub fn translate(f: &SampledFunction, u: &[f64]) -> Result<SampledFunction> {
    let cells = f.grid.shift_in_cells(u)?;
    Ok(translate_cells(f, &cells))
}

pub fn translate_cells(f: &SampledFunction, shift: &[i64]) -> SampledFunction {
    let grid = f.grid;
    let mut values = vec![0.0; grid.len()];
    let mut idx = vec![0i64; grid.n];
    for (k, slot) in values.iter_mut().enumerate() {
        let multi = grid.multi_index(k);
        for d in 0..grid.n {
            idx[d] = multi[d] as i64 + shift[d];
        }
        *slot = f.at_lattice(&idx);
    }
    SampledFunction { grid, values }
}

/// Σ over cells with |x_k| ≥ radius of |f|^p w h^n.
pub fn tail_mass<W: Weight + ?Sized>(
    f: &SampledFunction,
    p: f64,
    w: &W,
    radius: f64,
) -> Result<f64> {
    check_exponent(p)?;
    if radius < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tail radius must be nonnegative, got {radius}"
        )));
    }
    let grid = f.grid;
    let mut x = vec![0.0; grid.n];
    let mut acc = CompensatedSum::new();
    for (k, &v) in f.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        grid.center_into(k, &mut x);
        if euclid(&x) >= radius {
            acc.add(v.abs().powf(p) * w.eval(&x));
        }
    }
    Ok(acc.value() * grid.cell_volume())
}

/// Lattice offsets (in cells) of the closed ball of radius `t` around a
/// lattice point, in row-major order.
pub fn ball_offsets(grid: &Grid, t: f64) -> Vec<Vec<i64>> {
    let h = grid.spacing();
    let reach = (t / h).floor() as i64 + 1;
    let mut out = Vec::new();
    let mut idx = vec![-reach; grid.n];
    loop {
        let d2: f64 = idx.iter().map(|&k| (k as f64 * h).powi(2)).sum();
        if d2.sqrt() <= t * (1.0 + 1e-12) {
            out.push(idx.clone());
        }
        let mut d = grid.n;
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] <= reach {
                break;
            }
            idx[d] = -reach;
        }
    }
}

/// Mean of f over the in-box cell centers within distance t of x.
pub fn ball_average(f: &SampledFunction, x: &[f64], t: f64) -> Result<f64> {
    let grid = f.grid;
    if x.len() != grid.n {
        return Err(Error::InvalidArgument("point dimension mismatch".into()));
    }
    if t < grid.spacing() * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "ball radius {t} is below the grid spacing {}",
            grid.spacing()
        )));
    }
    let h = grid.spacing();
    let lo: Vec<i64> = x
        .iter()
        .map(|&c| (((c - t + grid.half_width) / h) - 0.5).floor() as i64)
        .collect();
    let hi: Vec<i64> = x
        .iter()
        .map(|&c| (((c + t + grid.half_width) / h) - 0.5).ceil() as i64)
        .collect();
    let mut idx = lo.clone();
    let mut acc = CompensatedSum::new();
    let mut count = 0usize;
    let mut y = vec![0.0; grid.n];
    loop {
        if let Some(flat) = grid.flat_index(&idx) {
            for d in 0..grid.n {
                y[d] = grid.coord(idx[d]);
            }
            let d2: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2.sqrt() <= t {
                acc.add(f.values[flat]);
                count += 1;
            }
        }
        let mut d = grid.n;
        let done = loop {
            if d == 0 {
                break true;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] <= hi[d] {
                break false;
            }
            idx[d] = lo[d];
        };
        if done {
            break;
        }
    }
    if count == 0 {
        return Err(Error::EmptyBall {
            center: x.to_vec(),
            radius: t,
        });
    }
    Ok(acc.value() / count as f64)
}

/// Integer shifts within the box, useful for reporting.
pub fn describe_grid(grid: &Grid) -> String {
    format!(
        "n={} L={} N={} h={}",
        grid.n,
        grid.half_width,
        grid.points_per_axis,
        grid.spacing()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightSpec;

    fn unit() -> WeightSpec {
        WeightSpec::unit()
    }

    #[test]
    fn grid_rejects_odd_points() {
        assert!(Grid::new(1, 1.0, 3).is_err());
        assert!(Grid::new(1, 0.0, 4).is_err());
        assert!(Grid::new(0, 1.0, 4).is_err());
    }

    #[test]
    fn centers_avoid_origin() {
        for ppa in [2, 4, 8, 16] {
            let g = Grid::new(2, 1.5, ppa).unwrap();
            for k in 0..g.len() {
                let c = g.center(k);
                assert!(euclid(&c) > 0.0);
                assert!(c.iter().all(|v| v.abs() < 1.5));
            }
        }
    }

    #[test]
    fn sample_examples() {
        let g = Grid::new(1, 1.0, 4).unwrap();
        assert_eq!(sample(|_| 0.0, g).unwrap().values(), &[0.0; 4]);
        assert_eq!(sample(|_| 1.0, g).unwrap().values(), &[1.0; 4]);
        assert_eq!(
            sample(|x| x[0], g).unwrap().values(),
            &[-0.75, -0.25, 0.25, 0.75]
        );
        assert!(matches!(
            sample(|x| 1.0 / (x[0] - 0.25), g),
            Err(Error::NonFiniteSample { index: 2, .. })
        ));
    }

    #[test]
    fn lp_of_constant_and_zero() {
        let g = Grid::new(1, 1.0, 16).unwrap();
        let one = sample(|_| 1.0, g).unwrap();
        let zero = SampledFunction::zeros(g);
        assert!((weighted_lp(&one, 2.0, &unit()).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(weighted_lp(&zero, 0.5, &unit()).unwrap(), 0.0);
        assert!(weighted_lp(&one, 0.0, &unit()).is_err());
    }

    #[test]
    fn lp_of_identity_on_unit_interval_converges() {
        // ∫_0^1 x^2 dx = 1/3; grid (-1, 1) with the left half zeroed.
        let exact = (1.0f64 / 3.0).sqrt();
        let mut prev = f64::INFINITY;
        for ppa in [8, 32, 128, 512] {
            let g = Grid::new(1, 1.0, ppa).unwrap();
            let f = sample(|x| if x[0] > 0.0 { x[0] } else { 0.0 }, g).unwrap();
            let err = (weighted_lp(&f, 2.0, &unit()).unwrap() - exact).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn translate_examples() {
        let g = Grid::new(1, 1.0, 8).unwrap();
        let h = g.spacing();
        let mut v = vec![0.0; 8];
        v[4] = 1.0;
        let bump = SampledFunction::from_values(g, v).unwrap();
        assert_eq!(translate(&bump, &[0.0]).unwrap(), bump);
        let moved = translate(&bump, &[h]).unwrap();
        assert_eq!(moved.values()[3], 1.0);
        assert_eq!(moved.values().iter().sum::<f64>(), 1.0);
        assert!(matches!(
            translate(&bump, &[0.3 * h]),
            Err(Error::MisalignedShift { .. })
        ));
    }

    #[test]
    fn translate_round_trip_away_from_boundary() {
        let g = Grid::new(2, 1.0, 16).unwrap();
        let f = sample(|x| (3.0 * x[0]).sin() + x[1] * x[1], g).unwrap();
        let shift = [2, -3];
        let back = translate_cells(&translate_cells(&f, &shift), &[-2, 3]);
        for k in 0..g.len() {
            let idx = g.multi_index(k);
            let interior = idx[0] >= 2 && idx[0] < 14 && idx[1] >= 3 && idx[1] < 13;
            if interior {
                assert_eq!(back.values()[k], f.values()[k]);
            }
        }
    }

    #[test]
    fn tail_mass_examples() {
        let g = Grid::new(1, 2.0, 64).unwrap();
        let f = sample(|x| (-x[0] * x[0]).exp(), g).unwrap();
        let w = WeightSpec::power(0.5, 1.0);
        let whole = weighted_lp(&f, 1.5, &w).unwrap().powf(1.5);
        assert!((tail_mass(&f, 1.5, &w, 0.0).unwrap() - whole).abs() < 1e-12 * whole);
        assert_eq!(
            tail_mass(&f, 1.5, &w, 2.0 * 2f64.sqrt() + 0.1).unwrap(),
            0.0
        );
        let tails: Vec<f64> = [0.5, 1.0, 1.5]
            .iter()
            .map(|&a| tail_mass(&f, 2.0, &unit(), a).unwrap())
            .collect();
        // direct summation oracle
        let h = g.spacing();
        for (a, t) in [0.5, 1.0, 1.5].iter().zip(&tails) {
            let direct: f64 = (0..64)
                .map(|k| -2.0 + (k as f64 + 0.5) * h)
                .filter(|x| x.abs() >= *a)
                .map(|x| (-2.0 * x * x).exp() * h)
                .sum();
            assert!((direct - t).abs() < 1e-12);
        }
        assert!(tails[0] > tails[1] && tails[1] > tails[2]);
    }

    #[test]
    fn ball_average_examples() {
        let g = Grid::new(1, 1.0, 64).unwrap();
        let c = sample(|_| 2.5, g).unwrap();
        assert_eq!(ball_average(&c, &[0.3], 0.2).unwrap(), 2.5);
        let id = sample(|x| x[0], g).unwrap();
        assert!(ball_average(&id, &[0.0], 0.5).unwrap().abs() < 1e-15);
        assert!(ball_average(&id, &[0.0], 0.001).is_err());
        let fine = Grid::new(1, 1.0, 4096).unwrap();
        let sq = sample(|x| x[0] * x[0], fine).unwrap();
        let avg = ball_average(&sq, &[0.0], 0.5).unwrap();
        assert!((avg - 1.0 / 12.0).abs() < 1e-6);
        let far = ball_average(&c, &[5.0], 0.5);
        assert!(matches!(far, Err(Error::EmptyBall { .. })));
    }

    #[test]
    fn ball_offsets_count() {
        let g = Grid::new(2, 1.0, 20).unwrap();
        let h = g.spacing();
        assert_eq!(ball_offsets(&g, h).len(), 5);
        assert_eq!(ball_offsets(&g, 1.5 * h).len(), 9);
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::new(2, 0.7, 4).unwrap();
        let f = sample(|x| x[0].exp() - x[1] / 3.0, g).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = SampledFunction::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        assert!(SampledFunction::read_csv("index,value\n".as_bytes()).is_err());
    }

    #[test]
    fn family_requires_shared_grid() {
        let a = SampledFunction::zeros(Grid::new(1, 1.0, 4).unwrap());
        let b = SampledFunction::zeros(Grid::new(1, 1.0, 8).unwrap());
        assert!(matches!(
            FamilyOfFunctions::new(vec![a, b]),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn recipes_evaluate() {
        let bump = Recipe::bump(vec![0.0], 1.0, 2.0);
        assert!((bump.eval(&[0.0]) - 2.0 * (-1f64).exp()).abs() < 1e-15);
        assert_eq!(bump.eval(&[1.0]), 0.0);
        let osc = Recipe::Oscillation { k: 1, radius: 1.0 };
        assert!(osc.eval(&[0.0]).abs() < 1e-15);
        let pb = Recipe::PerturbedBump {
            center: vec![0.0],
            radius: 1.0,
            amplitude: 1.0,
            noise: 0.0,
            seed: 3,
        };
        assert_eq!(
            pb.eval(&[0.2]),
            Recipe::bump(vec![0.0], 1.0, 1.0).eval(&[0.2])
        );
        assert!(Recipe::bump(vec![0.0, 0.0], 1.0, 1.0).validate(1).is_err());
    }
}
