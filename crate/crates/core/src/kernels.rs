//! Multilinear kernels, scale families and numerical certificates for the
//! size and Hölder-type conditions they are expected to satisfy.
//!
//! Points are passed flat: `x` has `n` components and `ys` packs the `m`
//! points y_1..y_m one after another (`m * n` components).

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::Grid;
use crate::numerics::{distance, loglog_slope, unit_bump, CompensatedSum};
use crate::rng::Stream;

pub trait Kernel: Send + Sync {
    fn m(&self) -> usize;
    fn n(&self) -> usize;
    fn eval(&self, x: &[f64], ys: &[f64]) -> f64;
    fn label(&self) -> String;
}

impl fmt::Debug for dyn Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Kernel({}, m={}, n={})",
            self.label(),
            self.m(),
            self.n()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuiltinLabel {
    /// (Σ_j |x - y_j|)^{-mn}
    K1,
    /// Π_j φ(2m (x - y_j)), φ(z) = exp(-1/(1-|z|²)) on the unit ball.
    K2,
    /// (1 + Σ_j |x - y_j|²)^{-(mn+1)/2}
    K3,
}

/// A built-in kernel multiplied by `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub label: BuiltinLabel,
    pub m: usize,
    pub n: usize,
    #[serde(default = "unit_amplitude")]
    pub amplitude: f64,
}

fn unit_amplitude() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn new(label: BuiltinLabel, m: usize, n: usize) -> Self {
        Self {
            label,
            m,
            n,
            amplitude: 1.0,
        }
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidArgument(
                "kernel needs m >= 1 and n >= 1".into(),
            ));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument(
                "kernel amplitude must be finite".into(),
            ));
        }
        Ok(())
    }
}

impl Kernel for KernelSpec {
    fn m(&self) -> usize {
        self.m
    }

    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64], ys: &[f64]) -> f64 {
        let n = self.n;
        let mn = (self.m * n) as i32;
        match self.label {
            BuiltinLabel::K1 => {
                let s: f64 = ys.chunks_exact(n).map(|y| distance(x, y)).sum();
                self.amplitude / s.powi(mn)
            }
            BuiltinLabel::K2 => {
                let scale = 2.0 * self.m as f64;
                let mut value = self.amplitude;
                for y in ys.chunks_exact(n) {
                    let r2: f64 = x
                        .iter()
                        .zip(y)
                        .map(|(a, b)| (scale * (a - b)).powi(2))
                        .sum();
                    if r2 >= 1.0 {
                        return 0.0;
                    }
                    value *= unit_bump(r2);
                }
                value
            }
            BuiltinLabel::K3 => {
                let q: f64 = ys
                    .chunks_exact(n)
                    .map(|y| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .sum();
                self.amplitude * (1.0 + q).powf(-(mn as f64 + 1.0) / 2.0)
            }
        }
    }

    fn label(&self) -> String {
        if self.amplitude == 1.0 {
            format!("{:?}", self.label)
        } else {
            format!("{}*{:?}", self.amplitude, self.label)
        }
    }
}

/// Analytic class of a built-in and the constants known in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinInfo {
    pub spec: KernelSpec,
    pub class: &'static str,
    /// sup |K|, when finite.
    pub sup: Option<f64>,
    /// An upper bound for sup |K| (Σ|x-y_j|)^{mn}, when known.
    pub size_constant: Option<f64>,
}

pub fn builtin_kernels(m: usize, n: usize) -> Vec<BuiltinInfo> {
    let mn = (m * n) as i32;
    vec![
        BuiltinInfo {
            spec: KernelSpec::new(BuiltinLabel::K1, m, n),
            class: "standard Calderón–Zygmund",
            sup: None,
            size_constant: Some(1.0),
        },
        BuiltinInfo {
            spec: KernelSpec::new(BuiltinLabel::K2, m, n),
            class: "Marcinkiewicz (compact support in Σ|x-y_j|² ≤ 1)",
            sup: Some((-(m as f64)).exp()),
            // on the support each |x - y_j| < 1/(2m), so Σ|x - y_j| < 1/2
            size_constant: Some((-(m as f64)).exp() * 0.5f64.powi(mn)),
        },
        BuiltinInfo {
            spec: KernelSpec::new(BuiltinLabel::K3, m, n),
            class: "Littlewood–Paley (decay of order mn+1)",
            sup: Some(1.0),
            size_constant: None,
        },
    ]
}

/// Kernel given by a closure.
pub struct FnKernel<F> {
    pub m: usize,
    pub n: usize,
    pub label: String,
    pub f: F,
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync> Kernel for FnKernel<F> {
    fn m(&self) -> usize {
        self.m
    }
    fn n(&self) -> usize {
        self.n
    }
    fn eval(&self, x: &[f64], ys: &[f64]) -> f64 {
        (self.f)(x, ys)
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// c · K for any kernel K.
pub struct Scaled<K> {
    pub factor: f64,
    pub inner: K,
}

impl<K: Kernel> Kernel for Scaled<K> {
    fn m(&self) -> usize {
        self.inner.m()
    }
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn eval(&self, x: &[f64], ys: &[f64]) -> f64 {
        self.factor * self.inner.eval(x, ys)
    }
    fn label(&self) -> String {
        format!("{}*{}", self.factor, self.inner.label())
    }
}

pub fn sum_of_distances(x: &[f64], ys: &[f64]) -> f64 {
    ys.chunks_exact(x.len()).map(|y| distance(x, y)).sum()
}

pub fn max_distance(x: &[f64], ys: &[f64]) -> f64 {
    ys.chunks_exact(x.len())
        .map(|y| distance(x, y))
        .fold(0.0, f64::max)
}

/// K_t(x, y) = t^{-mn} K(x/t, y/t) on the geometric grid t_min · r^k,
/// k = 0..count.
#[derive(Clone)]
pub struct ScaleFamily {
    base: Arc<dyn Kernel>,
    t_min: f64,
    ratio: f64,
    count: usize,
}

impl fmt::Debug for ScaleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScaleFamily")
            .field("base", &self.base.label())
            .field("t_min", &self.t_min)
            .field("ratio", &self.ratio)
            .field("count", &self.count)
            .finish()
    }
}

impl ScaleFamily {
    pub fn new(base: Arc<dyn Kernel>, t_min: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_min.is_finite()) || !(ratio > 1.0 && ratio.is_finite()) || count == 0
        {
            return Err(Error::InvalidArgument(format!(
                "t-grid needs t_min > 0, ratio > 1, count >= 1 (got {t_min}, {ratio}, {count})"
            )));
        }
        Ok(Self {
            base,
            t_min,
            ratio,
            count,
        })
    }

    /// Ratio 2^{1/4} spanning [2^-12, 2^12].
    pub fn with_default_grid(base: Arc<dyn Kernel>) -> Self {
        Self {
            base,
            t_min: 2f64.powi(-12),
            ratio: 2f64.powf(0.25),
            count: 97,
        }
    }

    /// Same span with the ratio replaced by its square root.
    pub fn refine(&self) -> Self {
        Self {
            base: self.base.clone(),
            t_min: self.t_min,
            ratio: self.ratio.sqrt(),
            count: 2 * self.count - 1,
        }
    }

    pub fn base(&self) -> &Arc<dyn Kernel> {
        &self.base
    }

    pub fn t_grid(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.t_min * self.ratio.powi(k as i32))
            .collect()
    }

    /// Quadrature weight of dt/t per grid point.
    pub fn log_step(&self) -> f64 {
        self.ratio.ln()
    }

    pub fn eval_t(&self, t: f64, x: &[f64], ys: &[f64]) -> f64 {
        let xs: Vec<f64> = x.iter().map(|c| c / t).collect();
        let yt: Vec<f64> = ys.iter().map(|c| c / t).collect();
        let mn = (self.base.m() * self.base.n()) as i32;
        self.base.eval(&xs, &yt) / t.powi(mn)
    }
}

fn check_configuration(x: &[f64], ys: &[f64]) -> Result<f64> {
    let s = sum_of_distances(x, ys);
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::DegenerateConfiguration(s))
    }
}

/// (Σ_k |K_{t_k}(x, y)|² ln r)^{1/2}.
pub fn h1_norm(fam: &ScaleFamily, x: &[f64], ys: &[f64]) -> Result<f64> {
    check_configuration(x, ys)?;
    Ok(h1_terms(fam, |t| fam.eval_t(t, x, ys)).0)
}

/// Returns the norm and whether an end of the t-grid still carries weight.
fn h1_terms(fam: &ScaleFamily, value: impl Fn(f64) -> f64) -> (f64, bool) {
    let terms: Vec<f64> = fam.t_grid().into_iter().map(|t| value(t).powi(2)).collect();
    let max = terms.iter().cloned().fold(0.0, f64::max);
    let truncated = max > 0.0 && (terms[0] > 1e-4 * max || terms[terms.len() - 1] > 1e-4 * max);
    let mut acc = CompensatedSum::new();
    for v in &terms {
        acc.add(*v);
    }
    ((acc.value() * fam.log_step()).sqrt(), truncated)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 1.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::LambdaTooSmall(lambda))
    }
}

/// Quadrature of (t/(|x-z|+t))^{nλ} |K_t(z, y)|² dz dt / t^{n+1} over the
/// cells of `z_grid` and the family's t-grid, square-rooted.
pub fn h2_norm(
    fam: &ScaleFamily,
    lambda: f64,
    x: &[f64],
    ys: &[f64],
    z_grid: &Grid,
) -> Result<f64> {
    check_lambda(lambda)?;
    check_configuration(x, ys)?;
    Ok(h2_of(fam, lambda, x, z_grid, |t, z| fam.eval_t(t, z, ys)))
}

fn h2_of(
    fam: &ScaleFamily,
    lambda: f64,
    x: &[f64],
    z_grid: &Grid,
    value: impl Fn(f64, &[f64]) -> f64,
) -> f64 {
    let n = z_grid.n;
    let mut z = vec![0.0; n];
    let mut acc = CompensatedSum::new();
    for t in fam.t_grid() {
        let mut inner = CompensatedSum::new();
        for k in 0..z_grid.len() {
            z_grid.center_into(k, &mut z);
            let v = value(t, &z);
            if v == 0.0 {
                continue;
            }
            let poisson = (t / (distance(x, &z) + t)).powf(n as f64 * lambda);
            inner.add(poisson * v * v);
        }
        acc.add(inner.value() / t.powi(n as i32));
    }
    (acc.value() * z_grid.cell_volume() * fam.log_step()).sqrt()
}

/// The weight (offset + Σ|x-y_j|)^{exponent} that multiplies |K| in a size
/// bound; Hölder bounds add γ to the exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayForm {
    pub offset: f64,
    pub exponent: f64,
}

impl DecayForm {
    /// (Σ|x - y_j|)^{mn}
    pub fn standard(m: usize, n: usize) -> Self {
        Self {
            offset: 0.0,
            exponent: (m * n) as f64,
        }
    }

    /// (Σ|x - y_j|)^{mn - δ}
    pub fn marcinkiewicz(m: usize, n: usize, delta: f64) -> Self {
        Self {
            offset: 0.0,
            exponent: (m * n) as f64 - delta,
        }
    }

    /// (1 + Σ|x - y_j|)^{mn + δ}
    pub fn littlewood_paley(m: usize, n: usize, delta: f64) -> Self {
        Self {
            offset: 1.0,
            exponent: (m * n) as f64 + delta,
        }
    }

    fn weight(&self, s: f64, extra: f64) -> f64 {
        (self.offset + s).powf(self.exponent + extra)
    }
}

/// One tested configuration: the base point (x, y) and its perturbation
/// (x', y'). For size tests x' = x and y' = y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub ys: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub ys_prime: Vec<f64>,
}

impl Sample {
    pub fn unperturbed(x: Vec<f64>, ys: Vec<f64>) -> Self {
        Self {
            x_prime: x.clone(),
            ys_prime: ys.clone(),
            x,
            ys,
        }
    }
}

/// Draws off-diagonal configurations: x uniform in [-spread, spread]^n and
/// y_j = x + ρ_j θ_j with ρ_j log-uniform in [r_min, r_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigSampler {
    pub m: usize,
    pub n: usize,
    pub spread: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl ConfigSampler {
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            spread: 1.0,
            r_min: 1e-2,
            r_max: 1e2,
        }
    }

    fn base(&self, rng: &mut Stream) -> (Vec<f64>, Vec<f64>) {
        let x = rng.point_in_cube(self.n, self.spread);
        let mut ys = Vec::with_capacity(self.m * self.n);
        for _ in 0..self.m {
            let r = rng.log_range(self.r_min, self.r_max);
            let dir = rng.direction(self.n);
            ys.extend(x.iter().zip(&dir).map(|(a, d)| a + r * d));
        }
        (x, ys)
    }

    pub fn size_samples(&self, count: usize, seed: u64) -> Vec<Sample> {
        let mut rng = Stream::new(seed);
        (0..count)
            .map(|_| {
                let (x, ys) = self.base(&mut rng);
                Sample::unperturbed(x, ys)
            })
            .collect()
    }

    /// Perturbs y_slot (0-based) by at most |x - y_slot| / b1.
    pub fn y_samples(&self, slot: usize, b1: f64, count: usize, seed: u64) -> Vec<Sample> {
        let mut rng = Stream::new(seed);
        let n = self.n;
        (0..count)
            .map(|_| {
                let (x, ys) = self.base(&mut rng);
                let yi = &ys[slot * n..(slot + 1) * n];
                let size = rng.open_unit() * distance(&x, yi) / b1;
                let dir = rng.direction(n);
                let mut ys_prime = ys.clone();
                for d in 0..n {
                    ys_prime[slot * n + d] += size * dir[d];
                }
                Sample {
                    x_prime: x.clone(),
                    x,
                    ys,
                    ys_prime,
                }
            })
            .collect()
    }

    /// Perturbs x by at most max_j |x - y_j| / b1.
    pub fn x_samples(&self, b1: f64, count: usize, seed: u64) -> Vec<Sample> {
        let mut rng = Stream::new(seed);
        (0..count)
            .map(|_| {
                let (x, ys) = self.base(&mut rng);
                let size = rng.open_unit() * max_distance(&x, &ys) / b1;
                let dir = rng.direction(self.n);
                let x_prime = x.iter().zip(&dir).map(|(a, d)| a + size * d).collect();
                Sample {
                    ys_prime: ys.clone(),
                    x,
                    ys,
                    x_prime,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    Size {
        form: DecayForm,
    },
    HoelderY {
        slot: usize,
        gamma: f64,
        form: DecayForm,
    },
    HoelderX {
        gamma: f64,
        form: DecayForm,
    },
    SquareSize,
    SquareY {
        slot: usize,
        gamma: f64,
    },
    SquareX {
        gamma: f64,
    },
    StarSize {
        lambda: f64,
        z_grid: Grid,
    },
    StarY {
        lambda: f64,
        slot: usize,
        gamma: f64,
        z_grid: Grid,
    },
    StarX {
        lambda: f64,
        gamma: f64,
        z_grid: Grid,
    },
}

impl Condition {
    pub fn name(&self) -> String {
        match self {
            Condition::Size { .. } => "size".into(),
            Condition::HoelderY { slot, .. } => format!("hoelder-y{}", slot + 1),
            Condition::HoelderX { .. } => "hoelder-x".into(),
            Condition::SquareSize => "square-size".into(),
            Condition::SquareY { slot, .. } => format!("square-y{}", slot + 1),
            Condition::SquareX { .. } => "square-x".into(),
            Condition::StarSize { .. } => "star-size".into(),
            Condition::StarY { slot, .. } => format!("star-y{}", slot + 1),
            Condition::StarX { .. } => "star-x".into(),
        }
    }
}

/// 0/0 counts as 0: an identical perturbation satisfies every Hölder bound.
fn hoelder_quotient(diff: f64, step: f64, gamma: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff.abs() / step.powf(gamma)
    }
}

fn slot_step(s: &Sample, slot: usize, n: usize) -> f64 {
    distance(
        &s.ys[slot * n..(slot + 1) * n],
        &s.ys_prime[slot * n..(slot + 1) * n],
    )
}

/// Ratio for pointwise conditions.
pub fn kernel_ratio(k: &dyn Kernel, cond: &Condition, s: &Sample) -> Result<f64> {
    let sum = check_configuration(&s.x, &s.ys)?;
    let n = k.n();
    Ok(match *cond {
        Condition::Size { form } => k.eval(&s.x, &s.ys).abs() * form.weight(sum, 0.0),
        Condition::HoelderY { slot, gamma, form } => {
            let diff = k.eval(&s.x, &s.ys) - k.eval(&s.x, &s.ys_prime);
            hoelder_quotient(diff, slot_step(s, slot, n), gamma) * form.weight(sum, gamma)
        }
        Condition::HoelderX { gamma, form } => {
            let diff = k.eval(&s.x, &s.ys) - k.eval(&s.x_prime, &s.ys);
            hoelder_quotient(diff, distance(&s.x, &s.x_prime), gamma) * form.weight(sum, gamma)
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{} is a square-function condition",
                cond.name()
            )))
        }
    })
}

/// Ratio for square-function conditions, plus a t-grid truncation flag.
pub fn family_ratio(fam: &ScaleFamily, cond: &Condition, s: &Sample) -> Result<(f64, bool)> {
    let sum = check_configuration(&s.x, &s.ys)?;
    let n = fam.base.n();
    let mn = (fam.base.m() * n) as f64;
    Ok(match *cond {
        Condition::SquareSize => {
            let (v, trunc) = h1_terms(fam, |t| fam.eval_t(t, &s.x, &s.ys));
            (v * sum.powf(mn), trunc)
        }
        Condition::SquareY { slot, gamma } => {
            let (v, trunc) = h1_terms(fam, |t| {
                fam.eval_t(t, &s.x, &s.ys) - fam.eval_t(t, &s.x, &s.ys_prime)
            });
            (
                hoelder_quotient(v, slot_step(s, slot, n), gamma) * sum.powf(mn + gamma),
                trunc,
            )
        }
        Condition::SquareX { gamma } => {
            let (v, trunc) = h1_terms(fam, |t| {
                fam.eval_t(t, &s.x_prime, &s.ys) - fam.eval_t(t, &s.x, &s.ys)
            });
            (
                hoelder_quotient(v, distance(&s.x, &s.x_prime), gamma) * sum.powf(mn + gamma),
                trunc,
            )
        }
        Condition::StarSize { lambda, z_grid } => {
            check_lambda(lambda)?;
            let v = h2_of(fam, lambda, &s.x, &z_grid, |t, z| fam.eval_t(t, z, &s.ys));
            (v * sum.powf(mn), false)
        }
        Condition::StarY {
            lambda,
            slot,
            gamma,
            z_grid,
        } => {
            check_lambda(lambda)?;
            let v = h2_of(fam, lambda, &s.x, &z_grid, |t, z| {
                fam.eval_t(t, z, &s.ys) - fam.eval_t(t, z, &s.ys_prime)
            });
            (
                hoelder_quotient(v, slot_step(s, slot, n), gamma) * sum.powf(mn + gamma),
                false,
            )
        }
        Condition::StarX {
            lambda,
            gamma,
            z_grid,
        } => {
            check_lambda(lambda)?;
            // K_t(x - z) - K_t(x' - z) against (t/(|z|+t))^{nλ}, written in
            // the variable z' = x - z
            let shift: Vec<f64> = s.x_prime.iter().zip(&s.x).map(|(a, b)| a - b).collect();
            let v = h2_of(fam, lambda, &s.x, &z_grid, |t, z| {
                let moved: Vec<f64> = z.iter().zip(&shift).map(|(a, b)| a + b).collect();
                fam.eval_t(t, z, &s.ys) - fam.eval_t(t, &moved, &s.ys)
            });
            (
                hoelder_quotient(v, distance(&s.x, &s.x_prime), gamma) * sum.powf(mn + gamma),
                false,
            )
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{} is a pointwise condition",
                cond.name()
            )))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCertificate {
    pub condition: Condition,
    pub sample_count: usize,
    pub worst_ratio: f64,
    pub witness: Option<Sample>,
    pub constant: f64,
    pub pass: bool,
    pub ratios: Vec<f64>,
    pub warnings: Vec<String>,
}

impl KernelCertificate {
    fn assemble(
        condition: Condition,
        samples: &[Sample],
        ratios: Vec<f64>,
        constant: f64,
        warnings: Vec<String>,
    ) -> Self {
        let mut worst = 0usize;
        for (i, r) in ratios.iter().enumerate() {
            if *r > ratios[worst] {
                worst = i;
            }
        }
        let worst_ratio = ratios.get(worst).copied().unwrap_or(0.0);
        Self {
            condition,
            sample_count: samples.len(),
            worst_ratio,
            witness: samples.get(worst).cloned(),
            constant,
            // relative slack absorbs round-off in saturated bounds
            pass: worst_ratio <= constant * (1.0 + 1e-12),
            ratios,
            warnings,
        }
    }

    /// Re-evaluates the witness of a pointwise certificate.
    pub fn recheck(&self, k: &dyn Kernel) -> Result<f64> {
        match &self.witness {
            Some(w) => kernel_ratio(k, &self.condition, w),
            None => Ok(0.0),
        }
    }

    pub fn recheck_family(&self, fam: &ScaleFamily) -> Result<f64> {
        match &self.witness {
            Some(w) => Ok(family_ratio(fam, &self.condition, w)?.0),
            None => Ok(0.0),
        }
    }
}

fn check_constraints(cond: &Condition, samples: &[Sample], b1: f64, n: usize) -> Result<()> {
    let slack = 1.0 + 1e-12;
    for s in samples {
        match cond {
            Condition::HoelderY { slot, .. }
            | Condition::SquareY { slot, .. }
            | Condition::StarY { slot, .. } => {
                let step = slot_step(s, *slot, n);
                let limit = distance(&s.x, &s.ys[slot * n..(slot + 1) * n]) / b1;
                if step > limit * slack {
                    return Err(Error::ConstraintViolated { delta: step, limit });
                }
            }
            Condition::HoelderX { .. } | Condition::SquareX { .. } | Condition::StarX { .. } => {
                let step = distance(&s.x, &s.x_prime);
                let limit = max_distance(&s.x, &s.ys) / b1;
                if step > limit * slack {
                    return Err(Error::ConstraintViolated { delta: step, limit });
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn check_slot(slot: usize, m: usize) -> Result<()> {
    if slot < m {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "slot {} out of range 1..{m}",
            slot + 1
        )))
    }
}

fn certify_pointwise(
    k: &dyn Kernel,
    cond: Condition,
    samples: &[Sample],
    constant: f64,
) -> Result<KernelCertificate> {
    let ratios = samples
        .par_iter()
        .map(|s| kernel_ratio(k, &cond, s))
        .collect::<Result<Vec<f64>>>()?;
    Ok(KernelCertificate::assemble(
        cond,
        samples,
        ratios,
        constant,
        Vec::new(),
    ))
}

/// max |K| · (Σ|x-y_j|)^{mn} over the samples (or another decay form).
pub fn certify_size(
    k: &dyn Kernel,
    samples: &[Sample],
    constant: f64,
    form: Option<DecayForm>,
) -> Result<KernelCertificate> {
    let form = form.unwrap_or(DecayForm::standard(k.m(), k.n()));
    certify_pointwise(k, Condition::Size { form }, samples, constant)
}

/// Hölder bound in y_slot (0-based) under |y_i - y_i'| ≤ |x - y_i| / b1.
pub fn certify_hoelder_y(
    k: &dyn Kernel,
    slot: usize,
    samples: &[Sample],
    constant: f64,
    gamma: f64,
    b1: f64,
    form: Option<DecayForm>,
) -> Result<KernelCertificate> {
    check_slot(slot, k.m())?;
    let form = form.unwrap_or(DecayForm::standard(k.m(), k.n()));
    let cond = Condition::HoelderY { slot, gamma, form };
    check_constraints(&cond, samples, b1, k.n())?;
    certify_pointwise(k, cond, samples, constant)
}

/// Hölder bound in x under |x - x'| ≤ max_j |x - y_j| / b1.
pub fn certify_hoelder_x(
    k: &dyn Kernel,
    samples: &[Sample],
    constant: f64,
    gamma: f64,
    b1: f64,
    form: Option<DecayForm>,
) -> Result<KernelCertificate> {
    let form = form.unwrap_or(DecayForm::standard(k.m(), k.n()));
    let cond = Condition::HoelderX { gamma, form };
    check_constraints(&cond, samples, b1, k.n())?;
    certify_pointwise(k, cond, samples, constant)
}

/// Requested square-function bounds; each present entry adds a certificate.
#[derive(Debug, Clone, Default)]
pub struct SquareRequest {
    pub size: Option<Vec<Sample>>,
    pub y: Option<(usize, Vec<Sample>)>,
    pub x: Option<Vec<Sample>>,
    /// (λ, z_grid) switches on the H₂ versions of the requested bounds.
    pub star: Option<(f64, Grid)>,
    pub gamma: f64,
    pub b1: f64,
    pub constant: f64,
}

pub fn certify_square_bounds(
    fam: &ScaleFamily,
    req: &SquareRequest,
) -> Result<Vec<KernelCertificate>> {
    let n = fam.base.n();
    let mut conds: Vec<(Condition, &[Sample])> = Vec::new();
    if let Some(s) = &req.size {
        conds.push((Condition::SquareSize, s));
    }
    if let Some((slot, s)) = &req.y {
        check_slot(*slot, fam.base.m())?;
        conds.push((
            Condition::SquareY {
                slot: *slot,
                gamma: req.gamma,
            },
            s,
        ));
    }
    if let Some(s) = &req.x {
        conds.push((Condition::SquareX { gamma: req.gamma }, s));
    }
    if let Some((lambda, z_grid)) = req.star {
        check_lambda(lambda)?;
        if let Some(s) = &req.size {
            conds.push((Condition::StarSize { lambda, z_grid }, s));
        }
        if let Some((slot, s)) = &req.y {
            conds.push((
                Condition::StarY {
                    lambda,
                    slot: *slot,
                    gamma: req.gamma,
                    z_grid,
                },
                s,
            ));
        }
        if let Some(s) = &req.x {
            conds.push((
                Condition::StarX {
                    lambda,
                    gamma: req.gamma,
                    z_grid,
                },
                s,
            ));
        }
    }
    let mut out = Vec::new();
    for (cond, samples) in conds {
        check_constraints(&cond, samples, req.b1, n)?;
        let results = samples
            .par_iter()
            .map(|s| family_ratio(fam, &cond, s))
            .collect::<Result<Vec<(f64, bool)>>>()?;
        let truncated = results.iter().filter(|r| r.1).count();
        let mut warnings = Vec::new();
        if truncated > 0 {
            warnings.push(format!(
                "{truncated} of {} samples carry non-negligible mass at an end of the t-grid",
                samples.len()
            ));
        }
        let ratios = results.into_iter().map(|r| r.0).collect();
        out.push(KernelCertificate::assemble(
            cond,
            samples,
            ratios,
            req.constant,
            warnings,
        ));
    }
    Ok(out)
}

/// Which variable a diagnostic exponent fit perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    X,
    Y(usize),
}

/// Fits log|ΔK| against log(step) for steps `largest · 2^{-k}`, k < levels,
/// along a fixed direction. A diagnostic for the Hölder exponent.
pub fn estimate_exponent(
    k: &dyn Kernel,
    x: &[f64],
    ys: &[f64],
    var: Variable,
    direction: &[f64],
    largest: f64,
    levels: usize,
) -> Option<f64> {
    let n = k.n();
    let base = k.eval(x, ys);
    let pts: Vec<(f64, f64)> = (0..levels)
        .map(|l| {
            let step = largest * 0.5f64.powi(l as i32);
            let moved = match var {
                Variable::X => {
                    let xp: Vec<f64> = x.iter().zip(direction).map(|(a, d)| a + step * d).collect();
                    k.eval(&xp, ys)
                }
                Variable::Y(slot) => {
                    let mut yp = ys.to_vec();
                    for d in 0..n {
                        yp[slot * n + d] += step * direction[d];
                    }
                    k.eval(x, &yp)
                }
            };
            (step, (moved - base).abs())
        })
        .collect();
    loglog_slope(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k1(m: usize, n: usize) -> KernelSpec {
        KernelSpec::new(BuiltinLabel::K1, m, n)
    }

    #[test]
    fn builtin_examples() {
        assert_eq!(k1(1, 1).eval(&[0.0], &[1.0]), 1.0);
        assert_eq!(k1(2, 1).eval(&[0.0], &[1.0, 1.0]), 0.25);
        let k2 = KernelSpec::new(BuiltinLabel::K2, 2, 1);
        assert_eq!(k2.eval(&[0.0], &[0.9, 0.0]), 0.0);
        assert!((k2.eval(&[0.0], &[0.0, 0.0]) - (-2f64).exp()).abs() < 1e-15);
        let k3 = KernelSpec::new(BuiltinLabel::K3, 1, 2);
        assert!((k3.eval(&[0.0, 0.0], &[3.0, 4.0]) - 26f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn k1_saturates_its_size_bound() {
        let samples = ConfigSampler::new(2, 2).size_samples(500, 9);
        let cert = certify_size(&k1(2, 2), &samples, 1.0, None).unwrap();
        assert!(cert.ratios.iter().all(|r| (r - 1.0).abs() < 1e-12));
        assert!(cert.pass);
        let doubled = certify_size(&k1(2, 2).with_amplitude(2.0), &samples, 1.0, None).unwrap();
        assert!(!doubled.pass);
        assert!((doubled.worst_ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k2_size_against_dense_maximization() {
        // m = 1, n = 1: ratio(d) = φ(2d) d on 0 < d < 1/2; dense oracle
        let k2 = KernelSpec::new(BuiltinLabel::K2, 1, 1);
        let dense = (1..200_000)
            .map(|i| {
                let d = i as f64 * 0.5 / 200_000.0;
                unit_bump(4.0 * d * d) * d
            })
            .fold(0.0, f64::max);
        let sampler = ConfigSampler {
            m: 1,
            n: 1,
            spread: 1.0,
            r_min: 1e-3,
            r_max: 0.6,
        };
        let samples = sampler.size_samples(5000, 3);
        let cert = certify_size(&k2, &samples, dense * (1.0 + 1e-9), None).unwrap();
        assert!(cert.pass);
        assert!(cert.worst_ratio > 0.98 * dense);
        let info = &builtin_kernels(1, 1)[1];
        assert!(dense <= info.size_constant.unwrap());
    }

    #[test]
    fn zero_perturbation_gives_zero_ratio() {
        let s = Sample::unperturbed(vec![0.1], vec![1.0, -2.0]);
        let c = certify_hoelder_y(&k1(2, 1), 1, &[s.clone()], 0.0, 1.0, 2.0, None).unwrap();
        assert_eq!(c.worst_ratio, 0.0);
        let c = certify_hoelder_x(&k1(2, 1), &[s], 0.0, 1.0, 2.0, None).unwrap();
        assert_eq!(c.worst_ratio, 0.0);
    }

    #[test]
    fn constant_kernel_region_has_no_difference() {
        let flat = FnKernel {
            m: 1,
            n: 1,
            label: "flat".into(),
            f: |_: &[f64], _: &[f64]| 3.0,
        };
        let samples = ConfigSampler::new(1, 1).y_samples(0, 2.0, 100, 4);
        let c = certify_hoelder_y(&flat, 0, &samples, 0.0, 1.0, 2.0, None).unwrap();
        assert_eq!(c.worst_ratio, 0.0);
        let samples = ConfigSampler::new(1, 1).x_samples(2.0, 100, 4);
        let c = certify_hoelder_x(&flat, &samples, 0.0, 1.0, 2.0, None).unwrap();
        assert_eq!(c.worst_ratio, 0.0);
    }

    #[test]
    fn k1_hoelder_bounded_by_gradient_oracle() {
        // |∇_{y_i} K1| = mn Σ^{-mn-1}; with |Δ| ≤ |x-y_i|/2 the sum stays above
        // Σ/2, so the ratio is at most mn 2^{mn+1}.
        let (m, n) = (2, 1);
        let bound = (m * n) as f64 * 2f64.powi((m * n + 1) as i32);
        let sampler = ConfigSampler::new(m, n);
        let y = sampler.y_samples(0, 2.0, 3000, 5);
        let cy = certify_hoelder_y(&k1(m, n), 0, &y, bound, 1.0, 2.0, None).unwrap();
        assert!(cy.pass && cy.worst_ratio > 0.0);
        let x = sampler.x_samples(2.0, 3000, 6);
        let cx = certify_hoelder_x(&k1(m, n), &x, 2.0 * bound, 1.0, 2.0, None).unwrap();
        assert!(cx.pass && cx.worst_ratio > 0.0);
    }

    #[test]
    fn constraint_and_degeneracy_errors() {
        let bad = Sample {
            x: vec![0.0],
            ys: vec![1.0],
            x_prime: vec![0.0],
            ys_prime: vec![2.0],
        };
        assert!(matches!(
            certify_hoelder_y(&k1(1, 1), 0, &[bad], 1.0, 1.0, 2.0, None),
            Err(Error::ConstraintViolated { .. })
        ));
        let diag = Sample::unperturbed(vec![0.5], vec![0.5]);
        assert!(matches!(
            certify_size(&k1(1, 1), &[diag], 1.0, None),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn witness_reproduces_worst_ratio() {
        let k = KernelSpec::new(BuiltinLabel::K3, 2, 1);
        let samples = ConfigSampler::new(2, 1).x_samples(2.0, 200, 8);
        let c = certify_hoelder_x(&k, &samples, 10.0, 1.0, 2.0, None).unwrap();
        assert_eq!(c.recheck(&k).unwrap(), c.worst_ratio);
    }

    #[test]
    fn size_is_scale_covariant() {
        let k = KernelSpec::new(BuiltinLabel::K3, 1, 1);
        let samples = ConfigSampler::new(1, 1).size_samples(300, 2);
        let a = certify_size(&k, &samples, 0.3, None).unwrap();
        let b = certify_size(&k.with_amplitude(4.0), &samples, 1.2, None).unwrap();
        assert_eq!(a.pass, b.pass);
        assert!((b.worst_ratio / 4.0 - a.worst_ratio).abs() < 1e-15 * a.worst_ratio.max(1.0));
    }

    fn k2_family(m: usize, n: usize) -> ScaleFamily {
        ScaleFamily::with_default_grid(Arc::new(KernelSpec::new(BuiltinLabel::K2, m, n)))
    }

    #[test]
    fn h1_zero_and_homogeneity() {
        let zero = ScaleFamily::with_default_grid(Arc::new(FnKernel {
            m: 1,
            n: 1,
            label: "zero".into(),
            f: |_: &[f64], _: &[f64]| 0.0,
        }));
        assert_eq!(h1_norm(&zero, &[0.0], &[1.0]).unwrap(), 0.0);
        let fam = k2_family(1, 1);
        let doubled = ScaleFamily::with_default_grid(Arc::new(
            KernelSpec::new(BuiltinLabel::K2, 1, 1).with_amplitude(2.0),
        ));
        let a = h1_norm(&fam, &[0.0], &[0.7]).unwrap();
        let b = h1_norm(&doubled, &[0.0], &[0.7]).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-14 * a);
    }

    #[test]
    fn h1_of_k2_matches_finer_t_grid() {
        let fam = k2_family(1, 1);
        let mut fine = fam.clone();
        for _ in 0..3 {
            fine = fine.refine();
        }
        let (x, y) = ([0.2], [-0.5]);
        let a = h1_norm(&fam, &x, &y).unwrap();
        let b = h1_norm(&fine, &x, &y).unwrap();
        assert!(a > 0.0 && a.is_finite());
        assert!((a - b).abs() < 1e-3 * b);
        // closed form: K_t = t^{-1} φ(2d/t) vanishes for t ≤ 2d, and
        // ∫_{2d}^∞ t^{-2} φ(2d/t)² dt/t = (2d)^{-2} ∫_0^1 s φ(s)² ds
        let d: f64 = 0.7;
        let inner: f64 = (0..100_000)
            .map(|i| {
                let s = (i as f64 + 0.5) / 100_000.0;
                s * unit_bump(s * s).powi(2) / 100_000.0
            })
            .sum();
        let exact = (inner / (2.0 * d).powi(2)).sqrt();
        assert!((b - exact).abs() < 1e-4 * exact);
    }

    #[test]
    fn h2_checks() {
        let fam = ScaleFamily::with_default_grid(Arc::new(KernelSpec::new(BuiltinLabel::K3, 1, 1)));
        let grid = Grid::new(1, 8.0, 128).unwrap();
        let fine = Grid::new(1, 8.0, 256).unwrap();
        assert!(matches!(
            h2_norm(&fam, 1.0, &[0.0], &[1.0], &grid),
            Err(Error::LambdaTooSmall(_))
        ));
        let a = h2_norm(&fam, 3.0, &[0.3], &[-0.6], &grid).unwrap();
        let b = h2_norm(&fam, 3.0, &[0.3], &[-0.6], &fine).unwrap();
        assert!(a > 0.0 && (a - b).abs() < 0.05 * b);
        let doubled = ScaleFamily::with_default_grid(Arc::new(
            KernelSpec::new(BuiltinLabel::K3, 1, 1).with_amplitude(2.0),
        ));
        let c = h2_norm(&doubled, 3.0, &[0.3], &[-0.6], &grid).unwrap();
        assert!((c - 2.0 * a).abs() < 1e-13 * a);
    }

    #[test]
    fn square_bounds_for_k2() {
        let fam = k2_family(1, 1);
        let sampler = ConfigSampler {
            m: 1,
            n: 1,
            spread: 1.0,
            r_min: 0.05,
            r_max: 2.0,
        };
        let req = SquareRequest {
            size: Some(sampler.size_samples(200, 1)),
            y: Some((0, sampler.y_samples(0, 2.0, 200, 2))),
            x: Some(sampler.x_samples(2.0, 200, 3)),
            star: None,
            gamma: 1.0,
            b1: 2.0,
            constant: f64::INFINITY,
        };
        let coarse = certify_square_bounds(&fam, &req).unwrap();
        let fine = certify_square_bounds(&fam.refine(), &req).unwrap();
        for (a, b) in coarse.iter().zip(&fine) {
            assert!(a.worst_ratio.is_finite() && a.worst_ratio > 0.0);
            assert!((a.worst_ratio - b.worst_ratio).abs() < 0.05 * b.worst_ratio);
            assert!(a.warnings.is_empty());
            assert_eq!(a.recheck_family(&fam).unwrap(), a.worst_ratio);
        }
        let same = SquareRequest {
            size: None,
            y: Some((0, vec![Sample::unperturbed(vec![0.0], vec![0.3])])),
            ..req
        };
        let c = certify_square_bounds(&fam, &same).unwrap();
        assert_eq!(c[0].worst_ratio, 0.0);
    }

    #[test]
    fn exponent_fit_of_k1_is_one() {
        let est = estimate_exponent(
            &k1(2, 1),
            &[0.0],
            &[1.0, -2.0],
            Variable::Y(0),
            &[1.0],
            0.1,
            12,
        )
        .unwrap();
        assert!((est - 1.0).abs() < 0.02);
    }
}
