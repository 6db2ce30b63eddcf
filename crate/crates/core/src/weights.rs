//! Power weights, multiple-weight products and lower estimates of
//! Muckenhoupt-type constants over finite cube families.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::Grid;
use crate::numerics::{euclid, CompensatedSum};

/// A positive function evaluable at any point of R^n.
pub trait Weight: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<T: Weight + ?Sized> Weight for &T {
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

impl<T: Weight + ?Sized> Weight for Box<T> {
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

/// Weight given by an arbitrary closure.
pub struct FnWeight<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Weight for FnWeight<F> {
    fn eval(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// w(x) = scale · (eps + |x|)^alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub alpha: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self::unit()
    }
}

impl WeightSpec {
    pub fn unit() -> Self {
        Self {
            alpha: 0.0,
            eps: 0.0,
            scale: 1.0,
        }
    }

    pub fn power(alpha: f64, eps: f64) -> Self {
        Self {
            alpha,
            eps,
            scale: 1.0,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self {
            scale: self.scale * c,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight needs finite alpha and eps >= 0, got alpha={} eps={}",
                self.alpha, self.eps
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn is_unit(&self) -> bool {
        self.alpha == 0.0 && self.scale == 1.0
    }

    /// Same weight raised to a power: (c (eps+|x|)^α)^q.
    pub fn pow(&self, q: f64) -> Self {
        Self {
            alpha: self.alpha * q,
            eps: self.eps,
            scale: self.scale.powf(q),
        }
    }
}

impl Weight for WeightSpec {
    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        if self.alpha == 0.0 {
            return self.scale;
        }
        self.scale * (self.eps + euclid(x)).powf(self.alpha)
    }
}

/// Weights ω_1..ω_m with exponents p_1..p_m in (1, ∞).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<WeightSpec>,
    exponents: Vec<f64>,
    p: f64,
}

impl WeightVector {
    pub fn new(weights: Vec<WeightSpec>, exponents: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != exponents.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weights for {} exponents",
                weights.len(),
                exponents.len()
            )));
        }
        for w in &weights {
            w.validate()?;
        }
        if let Some(bad) = exponents.iter().find(|&&q| !(q > 1.0 && q.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "slot exponents must lie in (1, inf), got {bad}"
            )));
        }
        let p = 1.0 / exponents.iter().map(|q| 1.0 / q).sum::<f64>();
        Ok(Self {
            weights,
            exponents,
            p,
        })
    }

    pub fn weights(&self) -> &[WeightSpec] {
        &self.weights
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    /// 1/p = Σ 1/p_j.
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn all_slots(&self) -> Vec<usize> {
        (0..self.m()).collect()
    }
}

/// ν_{ω,A}(x) = Π_{j∈A} ω_j(x)^{p_A/p_j}.
#[derive(Debug, Clone, PartialEq)]
pub struct NuWeight {
    factors: Vec<(WeightSpec, f64)>,
    p_a: f64,
}

impl NuWeight {
    pub fn p_a(&self) -> f64 {
        self.p_a
    }
}

impl Weight for NuWeight {
    fn eval(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .map(|(w, q)| w.eval(x).powf(*q))
            .product()
    }
}

fn check_subset(wv: &WeightVector, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    if let Some(&j) = subset.iter().find(|&&j| j >= wv.m()) {
        return Err(Error::InvalidArgument(format!(
            "slot {} out of range 1..{}",
            j + 1,
            wv.m()
        )));
    }
    Ok(())
}

/// Slots in `subset` are 0-based.
pub fn nu_weight(wv: &WeightVector, subset: &[usize]) -> Result<NuWeight> {
    check_subset(wv, subset)?;
    let mut slots = subset.to_vec();
    slots.sort_unstable();
    slots.dedup();
    let p_a = 1.0 / slots.iter().map(|&j| 1.0 / wv.exponents[j]).sum::<f64>();
    Ok(NuWeight {
        factors: slots
            .iter()
            .map(|&j| (wv.weights[j], p_a / wv.exponents[j]))
            .collect(),
        p_a,
    })
}

/// Axis-aligned cube made of whole cells: lower-corner lattice index and
/// side length in cells.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cube {
    pub lower: Vec<i64>,
    pub side: usize,
}

impl Cube {
    pub fn center(&self, grid: &Grid) -> Vec<f64> {
        let h = grid.spacing();
        self.lower
            .iter()
            .map(|&k| -grid.half_width + (k as f64 + self.side as f64 / 2.0) * h)
            .collect()
    }

    pub fn side_length(&self, grid: &Grid) -> f64 {
        self.side as f64 * grid.spacing()
    }

    pub fn inside(&self, grid: &Grid) -> bool {
        self.lower
            .iter()
            .all(|&k| k >= 0 && k + self.side as i64 <= grid.points_per_axis as i64)
    }

    /// Flat indices of the cells making up the cube (must be inside).
    pub fn cells(&self, grid: &Grid) -> Vec<usize> {
        let n = grid.n;
        let mut out = Vec::with_capacity(self.side.pow(n as u32));
        let mut off = vec![0usize; n];
        loop {
            let idx: Vec<i64> = (0..n).map(|d| self.lower[d] + off[d] as i64).collect();
            if let Some(flat) = grid.flat_index(&idx) {
                out.push(flat);
            }
            let mut d = n;
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                off[d] += 1;
                if off[d] < self.side {
                    break;
                }
                off[d] = 0;
            }
        }
    }
}

/// Finite list of cubes on one grid, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFamily {
    grid: Grid,
    cubes: Vec<Cube>,
}

impl CubeFamily {
    /// Cubes clipped by the box are dropped.
    pub fn new(grid: Grid, cubes: Vec<Cube>) -> Result<Self> {
        for c in &cubes {
            if c.lower.len() != grid.n || c.side == 0 {
                return Err(Error::InvalidArgument(format!("malformed cube {c:?}")));
            }
        }
        let mut cubes: Vec<Cube> = cubes.into_iter().filter(|c| c.inside(&grid)).collect();
        cubes.sort();
        cubes.dedup();
        if cubes.is_empty() {
            return Err(Error::InvalidArgument(
                "no cube of the family lies inside the grid box".into(),
            ));
        }
        Ok(Self { grid, cubes })
    }

    /// The cube with lower corner `corner` and side `side`, both given in
    /// coordinates and required to align with cell edges.
    pub fn from_coordinates(grid: Grid, corner: &[f64], side: f64) -> Result<Self> {
        let h = grid.spacing();
        let snap = |v: f64| -> Result<i64> {
            let q = v / h;
            let r = q.round();
            if (q - r).abs() > 1e-9 * q.abs().max(1.0) {
                Err(Error::InvalidArgument(format!(
                    "{v} is not a multiple of the spacing {h}"
                )))
            } else {
                Ok(r as i64)
            }
        };
        let lower = corner
            .iter()
            .map(|&c| snap(c + grid.half_width))
            .collect::<Result<Vec<_>>>()?;
        let cells = snap(side)?;
        if cells <= 0 {
            return Err(Error::InvalidArgument("cube side must be positive".into()));
        }
        Self::new(
            grid,
            vec![Cube {
                lower,
                side: cells as usize,
            }],
        )
    }

    /// Cubes of side 2^j cells, j = 0..=levels, roughly centered at each of
    /// the given lattice points.
    pub fn dyadic(grid: Grid, centers: &[Vec<i64>], levels: u32) -> Result<Self> {
        let mut cubes = Vec::new();
        for c in centers {
            for j in 0..=levels {
                let side = 1usize << j;
                let half = (side / 2) as i64;
                cubes.push(Cube {
                    lower: c.iter().map(|&k| k - half).collect(),
                    side,
                });
            }
        }
        Self::new(grid, cubes)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }
}

/// Lower estimate of a sup over cubes, with its maximizing cube and the
/// per-cube values (in family order).
#[derive(Debug, Clone, PartialEq)]
pub struct ApEstimate {
    pub value: f64,
    pub argmax: Cube,
    pub per_cube: Vec<(Cube, f64)>,
}

fn cube_average<W: Weight + ?Sized>(w: &W, grid: &Grid, cells: &[usize], q: f64) -> f64 {
    let mut x = vec![0.0; grid.n];
    let mut acc = CompensatedSum::new();
    for &k in cells {
        grid.center_into(k, &mut x);
        let v = w.eval(&x);
        acc.add(if q == 1.0 { v } else { v.powf(q) });
    }
    acc.value() / cells.len() as f64
}

fn sup_over_cubes(cubes: &CubeFamily, local: impl Fn(&[usize]) -> f64 + Sync) -> ApEstimate {
    let grid = cubes.grid;
    let values: Vec<f64> = cubes
        .cubes
        .par_iter()
        .map(|c| local(&c.cells(&grid)))
        .collect();
    // strict comparison keeps the lexicographically smallest cube on ties
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    ApEstimate {
        value: values[best],
        argmax: cubes.cubes[best].clone(),
        per_cube: cubes.cubes.iter().cloned().zip(values).collect(),
    }
}

/// max over cubes of (avg_Q w)(avg_Q w^{1-p'})^{p-1}.
pub fn ap_constant<W: Weight + ?Sized>(w: &W, p: f64, cubes: &CubeFamily) -> Result<ApEstimate> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "p must lie in (1, inf), got {p}"
        )));
    }
    let grid = cubes.grid;
    let dual = -1.0 / (p - 1.0);
    Ok(sup_over_cubes(cubes, |cells| {
        cube_average(w, &grid, cells, 1.0) * cube_average(w, &grid, cells, dual).powf(p - 1.0)
    }))
}

/// max over cubes of (avg_Q ν_A)^{1/p_A} Π_{j∈A} (avg_Q ω_j^{1-p_j'})^{1/p_j'}.
pub fn multi_ap_constant(
    wv: &WeightVector,
    cubes: &CubeFamily,
    subset: &[usize],
) -> Result<ApEstimate> {
    let nu = nu_weight(wv, subset)?;
    let grid = cubes.grid;
    let mut slots = subset.to_vec();
    slots.sort_unstable();
    slots.dedup();
    Ok(sup_over_cubes(cubes, |cells| {
        let mut value = cube_average(&nu, &grid, cells, 1.0).powf(1.0 / nu.p_a);
        for &j in &slots {
            let pj = wv.exponents[j];
            let conj = pj / (pj - 1.0);
            value *= cube_average(&wv.weights[j], &grid, cells, 1.0 - conj).powf(1.0 / conj);
        }
        value
    }))
}

/// Total weight Σ w(x_k) h^n over cells with |x_k| ≤ radius.
pub fn ball_mass<W: Weight + ?Sized>(w: &W, grid: &Grid, radius: f64) -> f64 {
    let mut x = vec![0.0; grid.n];
    let mut acc = CompensatedSum::new();
    for k in 0..grid.len() {
        grid.center_into(k, &mut x);
        if euclid(&x) <= radius {
            acc.add(w.eval(&x));
        }
    }
    acc.value() * grid.cell_volume()
}

/// Smallest value of w over the cell centers of the grid.
pub fn grid_infimum<W: Weight + ?Sized>(w: &W, grid: &Grid) -> f64 {
    let mut x = vec![0.0; grid.n];
    let mut inf = f64::INFINITY;
    for k in 0..grid.len() {
        grid.center_into(k, &mut x);
        inf = inf.min(w.eval(&x));
    }
    inf
}
