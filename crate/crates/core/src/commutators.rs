//! Generalized commutators: the symbol factor Π_{(i,j)∈S}(b_i(x) - b_i(y_j))
//! inserted into truncated operators and square functions, and the studies
//! measuring their truncation convergence, spatial decay and translation
//! modulus.
//!
//! The factor splits over slots, so at a fixed x each input f_j is replaced
//! by y ↦ f_j(y) Π_{i∈S_j}(b_i(x) - b_i(y)) and the ordinary quadrature runs
//! on the modified inputs.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::funcspace::{sample_recipe, Grid, Recipe, SampledFunction};
use crate::kernels::{Kernel, ScaleFamily};
use crate::numerics::{euclid, loglog_slope, spread, unit_bump_max_slope, CompensatedSum};
use crate::operators::{
    apply_g_star, check_inputs, check_star, dyadic_scales, for_each_tuple, h1_of_profile,
    h2_of_field, maximal_ma, theta_profile, truncated_integral, Cutoff, EvalPoints, OperatorOutput,
    SlotData, TruncationPolicy,
};
use crate::rng::Stream;
use crate::weights::{nu_weight, WeightVector};

/// Pairs (i, j): symbol index i ≥ 1 and slot j, stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSet {
    pairs: BTreeSet<(u32, usize)>,
    m: usize,
}

impl IndexSet {
    pub fn empty(m: usize) -> Self {
        Self {
            pairs: BTreeSet::new(),
            m,
        }
    }

    /// Pairs with 1-based slots, as written in configurations.
    pub fn from_pairs(pairs: &[(u32, usize)], m: usize) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(i, j) in pairs {
            if i == 0 {
                return Err(Error::InvalidArgument("symbol indices start at 1".into()));
            }
            if j == 0 || j > m {
                return Err(Error::InvalidArgument(format!(
                    "slot {j} out of range 1..{m}"
                )));
            }
            set.insert((i, j - 1));
        }
        Ok(Self { pairs: set, m })
    }

    pub fn insert(&mut self, i: u32, slot: usize) {
        self.pairs.insert((i, slot));
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// (symbol, 0-based slot) in sorted order.
    pub fn pairs(&self) -> Vec<(u32, usize)> {
        self.pairs.iter().copied().collect()
    }

    /// S_j for a 0-based slot.
    pub fn symbols_for(&self, slot: usize) -> Vec<u32> {
        self.pairs
            .iter()
            .filter(|p| p.1 == slot)
            .map(|p| p.0)
            .collect()
    }

    /// A = {j : S_j ≠ ∅}, 0-based.
    pub fn active_slots(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.pairs.iter().map(|p| p.1).collect();
        set.into_iter().collect()
    }

    pub fn symbols(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.pairs.iter().map(|p| p.0).collect();
        set.into_iter().collect()
    }
}

/// A sampled symbol with dominating sup and gradient bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    pub values: SampledFunction,
    pub sup: f64,
    pub gradient: f64,
    pub support_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymbolSet {
    symbols: BTreeMap<u32, Symbol>,
}

/// Largest central-difference gradient norm over the cells.
fn finite_difference_gradient(f: &SampledFunction) -> f64 {
    let grid = f.grid();
    let h = grid.spacing();
    let mut best: f64 = 0.0;
    for k in 0..grid.len() {
        let idx: Vec<i64> = grid.multi_index(k).iter().map(|&v| v as i64).collect();
        let mut g2 = 0.0;
        for d in 0..grid.n {
            let mut up = idx.clone();
            let mut down = idx.clone();
            up[d] += 1;
            down[d] -= 1;
            let g = (f.at_lattice(&up) - f.at_lattice(&down)) / (2.0 * h);
            g2 += g * g;
        }
        best = best.max(g2.sqrt());
    }
    best
}

impl SymbolSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// amplitude · exp(1/((|x - c|/radius)² - 1)) with closed-form bounds.
    pub fn insert_bump(
        &mut self,
        i: u32,
        grid: Grid,
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    ) -> Result<()> {
        let reach = euclid(&center) + radius;
        let values = sample_recipe(&Recipe::bump(center, radius, amplitude), grid)?;
        self.symbols.insert(
            i,
            Symbol {
                values,
                sup: amplitude.abs() * (-1f64).exp(),
                gradient: amplitude.abs() * unit_bump_max_slope() / radius,
                support_radius: Some(reach),
            },
        );
        Ok(())
    }

    /// Any sampled symbol; sup is read off the samples and the gradient bound
    /// is the largest central difference inflated by 10%.
    pub fn insert_sampled(&mut self, i: u32, values: SampledFunction) {
        let sup = values.max_abs();
        let gradient = 1.1 * finite_difference_gradient(&values);
        self.symbols.insert(
            i,
            Symbol {
                values,
                sup,
                gradient,
                support_radius: None,
            },
        );
    }

    /// Bumps use the closed-form bounds, other recipes the sampled ones.
    pub fn insert_recipe(&mut self, i: u32, recipe: &Recipe, grid: Grid) -> Result<()> {
        match recipe {
            Recipe::Bump {
                center,
                radius,
                amplitude,
            } => self.insert_bump(i, grid, center.clone(), *radius, *amplitude),
            other => {
                self.insert_sampled(i, sample_recipe(other, grid)?);
                Ok(())
            }
        }
    }

    pub fn get(&self, i: u32) -> Result<&Symbol> {
        self.symbols.get(&i).ok_or(Error::MissingSymbol(i))
    }

    pub fn check(&self, s: &IndexSet, grid: &Grid) -> Result<()> {
        for i in s.symbols() {
            if *self.get(i)?.values.grid() != *grid {
                return Err(Error::GridMismatch);
            }
        }
        Ok(())
    }

    /// Symbol values shifted by a constant (all symbols).
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let mut out = Self::new();
        for (&i, s) in &self.symbols {
            out.symbols.insert(
                i,
                Symbol {
                    values: s.values.map(|v| v + c)?,
                    sup: s.sup + c.abs(),
                    gradient: s.gradient,
                    support_radius: None,
                },
            );
        }
        Ok(out)
    }
}

/// Π_{(i,j)∈S}(b_i(x) - b_i(y_j)) at lattice points; `ys` holds m lattice
/// multi-indices.
pub fn symbol_factor(b: &SymbolSet, s: &IndexSet, x: &[i64], ys: &[Vec<i64>]) -> Result<f64> {
    let mut prod = 1.0;
    for (i, j) in s.pairs() {
        let sym = &b.get(i)?.values;
        prod *= sym.at_lattice(x) - sym.at_lattice(&ys[j]);
    }
    Ok(prod)
}

/// Inputs restricted to their supports plus the data needed to fold the
/// symbol factor into them at a given x.
struct Folded<'a> {
    base: Vec<SlotData>,
    support: Vec<Vec<usize>>,
    sets: Vec<Vec<u32>>,
    symbols: &'a SymbolSet,
}

impl<'a> Folded<'a> {
    fn new(fs: &'a [SampledFunction], b: &'a SymbolSet, s: &IndexSet) -> Result<Self> {
        if s.m() != fs.len() {
            return Err(Error::InvalidArgument(format!(
                "index set is for {} slots, got {} inputs",
                s.m(),
                fs.len()
            )));
        }
        b.check(s, fs[0].grid())?;
        Ok(Self {
            base: fs.iter().map(SlotData::from_function).collect(),
            support: fs.iter().map(|f| f.support()).collect(),
            sets: (0..fs.len()).map(|j| s.symbols_for(j)).collect(),
            symbols: b,
        })
    }

    /// Slots with b_i evaluated at the lattice point `at`; slots without
    /// symbols are passed through untouched.
    fn slots_at(&self, at: &[i64]) -> Vec<SlotData> {
        self.base
            .iter()
            .enumerate()
            .map(|(j, slot)| {
                if self.sets[j].is_empty() {
                    return slot.clone();
                }
                let mut values = slot.values.clone();
                for &i in &self.sets[j] {
                    // symbols were checked in `new`
                    let sym = &self.symbols.symbols[&i].values;
                    let bx = sym.at_lattice(at);
                    for (v, &k) in values.iter_mut().zip(&self.support[j]) {
                        *v *= bx - sym.values()[k];
                    }
                }
                SlotData {
                    coords: slot.coords.clone(),
                    values,
                }
            })
            .collect()
    }
}

/// T_{b,S,δ}(f) at the evaluation points. With S = ∅ this is the same
/// computation as [`crate::operators::apply_t`].
pub fn apply_t_bs(
    k: &dyn Kernel,
    b: &SymbolSet,
    s: &IndexSet,
    fs: &[SampledFunction],
    trunc: &TruncationPolicy,
    points: &EvalPoints,
) -> Result<OperatorOutput> {
    let grid = check_inputs(fs, k.m(), k.n())?;
    trunc.check(&grid)?;
    let folded = Folded::new(fs, b, s)?;
    let values = points
        .lattice
        .par_iter()
        .map(|xi| {
            let x = grid.lattice_point(xi);
            truncated_integral(k, &x, &folded.slots_at(xi), trunc, grid.cell_volume())
        })
        .collect();
    Ok(OperatorOutput {
        points: points.coordinates(&grid),
        lattice: points.lattice.clone(),
        values,
        volume: points.volume,
    })
}

/// G_{b,S}(f)(x): the H₁ norm over t of the symbol-weighted inner integral.
pub fn apply_g_bs(
    fam: &ScaleFamily,
    b: &SymbolSet,
    s: &IndexSet,
    fs: &[SampledFunction],
    trunc: Option<&TruncationPolicy>,
    points: &EvalPoints,
) -> Result<OperatorOutput> {
    let grid = check_inputs(fs, fam.base().m(), fam.base().n())?;
    if let Some(t) = trunc {
        t.check(&grid)?;
    }
    let folded = Folded::new(fs, b, s)?;
    let values = points
        .lattice
        .par_iter()
        .map(|xi| {
            let x = grid.lattice_point(xi);
            let profile = theta_profile(fam, &x, &folded.slots_at(xi), trunc, grid.cell_volume());
            h1_of_profile(&profile, fam.log_step())
        })
        .collect();
    Ok(OperatorOutput {
        points: points.coordinates(&grid),
        lattice: points.lattice.clone(),
        values,
        volume: points.volume,
    })
}

/// G*_{λ,b,S}(f)(x). The symbol is evaluated at x while the kernel runs over
/// z, so the inner field is recomputed for every x unless S = ∅.
#[allow(clippy::too_many_arguments)]
pub fn apply_g_star_bs(
    fam: &ScaleFamily,
    lambda: f64,
    b: &SymbolSet,
    s: &IndexSet,
    fs: &[SampledFunction],
    points: &EvalPoints,
    z_grid: &Grid,
    trunc: Option<&TruncationPolicy>,
) -> Result<OperatorOutput> {
    if s.is_empty() {
        return apply_g_star(fam, lambda, fs, points, z_grid, trunc);
    }
    let grid = check_inputs(fs, fam.base().m(), fam.base().n())?;
    check_star(lambda, z_grid, grid.n)?;
    if let Some(t) = trunc {
        t.check(&grid)?;
    }
    let folded = Folded::new(fs, b, s)?;
    let values = points
        .lattice
        .par_iter()
        .map(|xi| {
            let x = grid.lattice_point(xi);
            let slots = folded.slots_at(xi);
            let theta: Vec<Vec<f64>> = (0..z_grid.len())
                .map(|zi| theta_profile(fam, &z_grid.center(zi), &slots, trunc, grid.cell_volume()))
                .collect();
            h2_of_field(fam, lambda, &x, z_grid, &theta)
        })
        .collect();
    Ok(OperatorOutput {
        points: points.coordinates(&grid),
        lattice: points.lattice.clone(),
        values,
        volume: points.volume,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub pairs: usize,
    pub trials: usize,
    /// Max relative error of Π(a+b) - Πb = Σ_{D⊊S} Π_D b Π_{S∖D} a.
    pub first: f64,
    /// Max relative error of Π_D(c_i - d_ij) = Σ_{E⊆D} (-1)^{|D∖E|} Π_E c_i Π_{D∖E} d_ij.
    pub second: f64,
}

/// Checks both product-expansion identities on random data by brute-force
/// subset enumeration. Errors are relative to the sum of absolute terms.
pub fn expansion_identity_check(s: &IndexSet, trials: usize, seed: u64) -> Result<ExpansionReport> {
    let size = s.len();
    if size > 8 {
        return Err(Error::SetTooLarge(size));
    }
    let pairs = s.pairs();
    let symbols = s.symbols();
    let mut rng = Stream::new(seed);
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    let full = (1usize << size) - 1;
    for _ in 0..trials {
        let a: Vec<f64> = (0..size).map(|_| rng.range(-2.0, 2.0)).collect();
        let b: Vec<f64> = (0..size).map(|_| rng.range(-2.0, 2.0)).collect();
        let lhs = (0..size).map(|p| a[p] + b[p]).product::<f64>() - b.iter().product::<f64>();
        let mut rhs = CompensatedSum::new();
        let mut scale = b.iter().product::<f64>().abs();
        for d in 0..full {
            let term: f64 = (0..size)
                .map(|p| if d >> p & 1 == 1 { b[p] } else { a[p] })
                .product();
            rhs.add(term);
            scale += term.abs();
        }
        first = first.max(relative(lhs, rhs.value(), scale));

        // c depends on the symbol only, d on the pair
        let c: BTreeMap<u32, f64> = symbols.iter().map(|&i| (i, rng.range(-2.0, 2.0))).collect();
        let d: Vec<f64> = (0..size).map(|_| rng.range(-2.0, 2.0)).collect();
        for dmask in 0..=full {
            let lhs: f64 = (0..size)
                .filter(|p| dmask >> p & 1 == 1)
                .map(|p| c[&pairs[p].0] - d[p])
                .product();
            let mut rhs = CompensatedSum::new();
            let mut scale = 0.0;
            // E ranges over the submasks of D
            let mut e = dmask;
            loop {
                let mut term = 1.0;
                let mut flips = 0;
                for p in (0..size).filter(|p| dmask >> p & 1 == 1) {
                    if e >> p & 1 == 1 {
                        term *= c[&pairs[p].0];
                    } else {
                        term *= d[p];
                        flips += 1;
                    }
                }
                if flips % 2 == 1 {
                    term = -term;
                }
                rhs.add(term);
                scale += term.abs();
                if e == 0 {
                    break;
                }
                e = (e - 1) & dmask;
            }
            second = second.max(relative(lhs, rhs.value(), scale));
        }
    }
    Ok(ExpansionReport {
        pairs: size,
        trials,
        first,
        second,
    })
}

fn relative(a: f64, b: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn nu_norm(values: &[f64], points: &[Vec<f64>], volume: f64, wv: &WeightVector) -> Result<f64> {
    let nu = nu_weight(wv, &wv.all_slots())?;
    let p = wv.p();
    Ok(crate::funcspace::weighted_lp_power_points(values, points, volume, p, &nu)?.powf(1.0 / p))
}

fn full_maximal(fs: &[SampledFunction], points: &EvalPoints) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..fs.len()).collect();
    Ok(maximal_ma(fs, &all, points, &dyadic_scales(fs[0].grid()))?.values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub delta: f64,
    /// ‖T_{b,S,ref} - T_{b,S,δ}‖_{L^p(ν)}
    pub norm: f64,
    /// max over points of |difference| / (δ M(f)(x)).
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub reference_delta: f64,
    pub rows: Vec<ConvergenceRow>,
    /// log-log slope of `norm` against δ over rows with δ > reference.
    pub slope: Option<f64>,
    /// max/min of `max_ratio` over rows with δ > reference.
    pub ratio_spread: f64,
}

/// Compares T_{b,S,δ} with the reference truncation. The difference is
/// accumulated directly with weight u(Σ/ref) - u(Σ/δ), so it is exactly zero
/// at δ = ref.
#[allow(clippy::too_many_arguments)]
pub fn truncation_convergence_study(
    k: &dyn Kernel,
    b: &SymbolSet,
    s: &IndexSet,
    fs: &[SampledFunction],
    cutoff: Cutoff,
    deltas: &[f64],
    reference_delta: f64,
    wv: &WeightVector,
    points: &EvalPoints,
) -> Result<ConvergenceStudy> {
    let grid = check_inputs(fs, k.m(), k.n())?;
    let reference = TruncationPolicy::new(reference_delta, cutoff);
    reference.check(&grid)?;
    if deltas.iter().any(|&d| d < reference_delta) {
        return Err(Error::InvalidArgument(
            "every delta must be at least the reference delta".into(),
        ));
    }
    let folded = Folded::new(fs, b, s)?;
    let maximal = full_maximal(fs, points)?;
    let coords = points.coordinates(&grid);
    let vol = grid.cell_volume().powi(fs.len() as i32);
    // diffs[point][delta]
    let diffs: Vec<Vec<f64>> = points
        .lattice
        .par_iter()
        .zip(&coords)
        .map(|(xi, x)| {
            let slots = folded.slots_at(xi);
            let mut acc = vec![CompensatedSum::new(); deltas.len()];
            let policies: Vec<TruncationPolicy> = deltas
                .iter()
                .map(|&d| TruncationPolicy::new(d, cutoff))
                .collect();
            for_each_tuple(x, &slots, grid.n, |ys, sum, prod| {
                if prod == 0.0 {
                    return;
                }
                let u_ref = reference.weight(sum);
                let mut kv = None;
                for (a, pol) in acc.iter_mut().zip(&policies) {
                    let w = u_ref - pol.weight(sum);
                    if w != 0.0 {
                        let kval = *kv.get_or_insert_with(|| k.eval(x, ys));
                        a.add(w * kval * prod);
                    }
                }
            });
            acc.iter().map(|a| a.value() * vol).collect()
        })
        .collect();
    let mut rows = Vec::new();
    for (di, &delta) in deltas.iter().enumerate() {
        let values: Vec<f64> = diffs.iter().map(|d| d[di]).collect();
        let ratios: Vec<f64> = values
            .iter()
            .zip(&maximal)
            .map(|(v, m)| if *m > 0.0 { v.abs() / (delta * m) } else { 0.0 })
            .collect();
        rows.push(ConvergenceRow {
            delta,
            norm: nu_norm(&values, &coords, points.volume, wv)?,
            max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
            ratios,
        });
    }
    let active: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.delta > reference_delta).collect();
    let slope = loglog_slope(&active.iter().map(|r| (r.delta, r.norm)).collect::<Vec<_>>());
    let ratio_spread = spread(&active.iter().map(|r| r.max_ratio).collect::<Vec<_>>());
    Ok(ConvergenceStudy {
        reference_delta,
        rows,
        slope,
        ratio_spread,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearFarRow {
    pub delta: f64,
    pub near: Vec<f64>,
    pub far: Vec<f64>,
    pub near_sup: f64,
    pub far_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearFarStudy {
    pub rows: Vec<NearFarRow>,
    /// max/min over δ of the sup near ratio.
    pub near_spread: f64,
    pub far_spread: f64,
}

/// near = ∫_{Σ≤δ} Π|f_j| / Σ^{nm-1} / (δ M(f)(x)),
/// far = δ ∫_{Σ≥δ} Π|f_j| / Σ^{nm+1} / M(f)(x).
/// The single tuple with Σ = 0 (all y_j = x) is a null set and skipped;
/// tuples on the shell Σ = δ count half on each side.
pub fn near_far_bounds_study(
    fs: &[SampledFunction],
    deltas: &[f64],
    points: &EvalPoints,
) -> Result<NearFarStudy> {
    if fs.is_empty() || deltas.is_empty() {
        return Err(Error::InvalidArgument("need inputs and deltas".into()));
    }
    let grid = *fs[0].grid();
    if fs.iter().any(|f| *f.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let maximal = full_maximal(fs, points)?;
    let coords = points.coordinates(&grid);
    if let Some(i) = maximal.iter().position(|&m| m == 0.0) {
        return Err(Error::ZeroMaximal(coords[i].clone()));
    }
    let abs: Vec<SampledFunction> = fs.iter().map(|f| f.map(f64::abs)).collect::<Result<_>>()?;
    let slots: Vec<SlotData> = abs.iter().map(SlotData::from_function).collect();
    let nm = (grid.n * fs.len()) as i32;
    let vol = grid.cell_volume().powi(fs.len() as i32);
    let per_point: Vec<(Vec<f64>, Vec<f64>)> = coords
        .par_iter()
        .map(|x| {
            let mut near = vec![CompensatedSum::new(); deltas.len()];
            let mut far = vec![CompensatedSum::new(); deltas.len()];
            for_each_tuple(x, &slots, grid.n, |_, sum, prod| {
                if sum == 0.0 || prod == 0.0 {
                    return;
                }
                let inner = prod / sum.powi(nm - 1);
                let outer = prod / sum.powi(nm + 1);
                for (i, &d) in deltas.iter().enumerate() {
                    if (sum - d).abs() <= 1e-9 * d {
                        near[i].add(0.5 * inner);
                        far[i].add(0.5 * outer);
                    } else if sum < d {
                        near[i].add(inner);
                    } else {
                        far[i].add(outer);
                    }
                }
            });
            (
                near.iter().map(|a| a.value() * vol).collect(),
                far.iter().map(|a| a.value() * vol).collect(),
            )
        })
        .collect();
    let rows: Vec<NearFarRow> = deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let near: Vec<f64> = per_point
                .iter()
                .zip(&maximal)
                .map(|(p, m)| p.0[i] / (d * m))
                .collect();
            let far: Vec<f64> = per_point
                .iter()
                .zip(&maximal)
                .map(|(p, m)| p.1[i] * d / m)
                .collect();
            NearFarRow {
                delta: d,
                near_sup: near.iter().cloned().fold(0.0, f64::max),
                far_sup: far.iter().cloned().fold(0.0, f64::max),
                near,
                far,
            }
        })
        .collect();
    Ok(NearFarStudy {
        near_spread: spread(&rows.iter().map(|r| r.near_sup).collect::<Vec<_>>()),
        far_spread: spread(&rows.iter().map(|r| r.far_sup).collect::<Vec<_>>()),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub radius: f64,
    /// |x| of the cell attaining the sup.
    pub at: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayStudy {
    pub rows: Vec<DecayRow>,
    /// log-log slope of `sup` against `at`.
    pub slope: Option<f64>,
}

/// sup of |T_{b,S,δ}(f)| over the cells with ||x| - r| ≤ h/2, per radius.
pub fn decay_study(
    k: &dyn Kernel,
    b: &SymbolSet,
    s: &IndexSet,
    fs: &[SampledFunction],
    trunc: &TruncationPolicy,
    radii: &[f64],
) -> Result<DecayStudy> {
    let grid = check_inputs(fs, k.m(), k.n())?;
    let h = grid.spacing();
    if let Some(&r) = radii
        .iter()
        .find(|&&r| !(r > 0.0 && r + h / 2.0 <= grid.half_width))
    {
        return Err(Error::RadiusOutsideBox {
            radius: r,
            half_width: grid.half_width,
        });
    }
    let mut rows = Vec::new();
    for &r in radii {
        let lattice: Vec<Vec<i64>> = (0..grid.len())
            .filter(|&c| (euclid(&grid.center(c)) - r).abs() <= h / 2.0)
            .map(|c| grid.multi_index(c).iter().map(|&v| v as i64).collect())
            .collect();
        if lattice.is_empty() {
            return Err(Error::EmptyBall {
                center: vec![0.0; grid.n],
                radius: r,
            });
        }
        let out = apply_t_bs(k, b, s, fs, trunc, &EvalPoints::explicit(lattice, 1.0))?;
        let mut best = 0;
        for (i, v) in out.values.iter().enumerate() {
            if v.abs() > out.values[best].abs() {
                best = i;
            }
        }
        rows.push(DecayRow {
            radius: r,
            at: euclid(&out.points[best]),
            sup: out.values[best].abs(),
        });
    }
    let slope = loglog_slope(&rows.iter().map(|r| (r.at, r.sup)).collect::<Vec<_>>());
    Ok(DecayStudy { rows, slope })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusRow {
    pub shift: Vec<f64>,
    pub length: f64,
    /// ‖T(· + t) - T‖_{L^p(ν)}
    pub norm: f64,
    /// ‖I‖ and ‖II‖ of the split, and their ratios to the bound expressions.
    pub part_one: f64,
    pub part_two: f64,
    pub part_one_ratio: f64,
    pub part_two_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusStudy {
    pub rows: Vec<ModulusRow>,
    /// log-log slope of `norm` against |t| over nonzero shifts.
    pub slope: Option<f64>,
}

/// Measures x ↦ T_{b,S,δ}(f)(x + t) - T_{b,S,δ}(f)(x) for grid-aligned
/// shifts, evaluating T at x + t directly. The difference splits as I + II:
/// I changes only the symbol argument (x → x + t) with the kernel at x, II
/// changes only the kernel argument with symbols at x + t. Bound expressions:
/// I ≲ Σ_{D⊊S} Π_{S∖D} |t| ‖∇b_i‖ Π_D ‖b_i‖ Π‖f_j‖, II ≲ Π_S ‖b_i‖ |t|/δ Π‖f_j‖.
#[allow(clippy::too_many_arguments)]
pub fn translation_modulus_study(
    k: &dyn Kernel,
    b: &SymbolSet,
    s: &IndexSet,
    fs: &[SampledFunction],
    trunc: &TruncationPolicy,
    shifts: &[Vec<f64>],
    wv: &WeightVector,
    points: &EvalPoints,
) -> Result<ModulusStudy> {
    let grid = check_inputs(fs, k.m(), k.n())?;
    trunc.check(&grid)?;
    let cells = shifts
        .iter()
        .map(|t| grid.shift_in_cells(t))
        .collect::<Result<Vec<_>>>()?;
    for t in shifts {
        let len = euclid(t);
        if len > trunc.delta / 2.0 * (1.0 + 1e-12) {
            return Err(Error::ShiftTooLarge {
                shift: len,
                limit: trunc.delta / 2.0,
            });
        }
    }
    let folded = Folded::new(fs, b, s)?;
    let coords = points.coordinates(&grid);
    let cv = grid.cell_volume();
    let base: Vec<f64> = points
        .lattice
        .par_iter()
        .zip(&coords)
        .map(|(xi, x)| truncated_integral(k, x, &folded.slots_at(xi), trunc, cv))
        .collect();

    let mut denom = 1.0;
    for (j, f) in fs.iter().enumerate() {
        denom *= crate::funcspace::weighted_lp(f, wv.exponents()[j], &wv.weights()[j])?;
    }
    let pairs = s.pairs();
    let mut sups = Vec::new();
    let mut grads = Vec::new();
    for &(i, _) in &pairs {
        let sym = b.get(i)?;
        sups.push(sym.sup);
        grads.push(sym.gradient);
    }
    let sup_all: f64 = sups.iter().product();

    let mut rows = Vec::new();
    for (t, tc) in shifts.iter().zip(&cells) {
        let len = euclid(t);
        let evals: Vec<(f64, f64)> = points
            .lattice
            .par_iter()
            .zip(&coords)
            .map(|(xi, x)| {
                let moved: Vec<i64> = xi.iter().zip(tc).map(|(a, b)| a + b).collect();
                let xt = grid.lattice_point(&moved);
                let slots_t = folded.slots_at(&moved);
                let shifted = truncated_integral(k, &xt, &slots_t, trunc, cv);
                let mixed = truncated_integral(k, x, &slots_t, trunc, cv);
                (shifted, mixed)
            })
            .collect();
        let diff: Vec<f64> = evals.iter().zip(&base).map(|(a, b)| a.0 - b).collect();
        let one: Vec<f64> = evals.iter().zip(&base).map(|(a, b)| a.1 - b).collect();
        let two: Vec<f64> = evals.iter().map(|a| a.0 - a.1).collect();
        let norm = nu_norm(&diff, &coords, points.volume, wv)?;
        let part_one = nu_norm(&one, &coords, points.volume, wv)?;
        let part_two = nu_norm(&two, &coords, points.volume, wv)?;
        // Σ over proper subsets D of S
        let size = pairs.len();
        let mut bound_one = 0.0;
        if size > 0 {
            for d in 0..(1usize << size) - 1 {
                let mut term = 1.0;
                for p in 0..size {
                    term *= if d >> p & 1 == 1 {
                        sups[p]
                    } else {
                        len * grads[p]
                    };
                }
                bound_one += term;
            }
        }
        let bound_two = sup_all * len / trunc.delta;
        let ratio = |v: f64, bound: f64| {
            if v == 0.0 {
                0.0
            } else {
                v / (bound * denom)
            }
        };
        rows.push(ModulusRow {
            shift: t.clone(),
            length: len,
            norm,
            part_one,
            part_two,
            part_one_ratio: ratio(part_one, bound_one),
            part_two_ratio: ratio(part_two, bound_two),
        });
    }
    let slope = loglog_slope(
        &rows
            .iter()
            .filter(|r| r.length > 0.0)
            .map(|r| (r.length, r.norm))
            .collect::<Vec<_>>(),
    );
    Ok(ModulusStudy { rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::sample;
    use crate::kernels::{BuiltinLabel, KernelSpec};
    use crate::operators::apply_t;
    use crate::weights::WeightSpec;

    fn grid() -> Grid {
        Grid::new(1, 2.0, 32).unwrap()
    }

    fn k1(m: usize) -> KernelSpec {
        KernelSpec::new(BuiltinLabel::K1, m, 1)
    }

    fn inputs(g: Grid) -> Vec<SampledFunction> {
        vec![
            sample_recipe(&Recipe::bump(vec![0.2], 1.2, 1.0), g).unwrap(),
            sample_recipe(&Recipe::bump(vec![-0.3], 1.0, 2.0), g).unwrap(),
        ]
    }

    fn symbols(g: Grid) -> SymbolSet {
        let mut b = SymbolSet::new();
        b.insert_bump(1, g, vec![0.0], 1.0, 1.0).unwrap();
        b.insert_bump(2, g, vec![0.4], 0.8, 0.5).unwrap();
        b
    }

    #[test]
    fn index_set_bookkeeping() {
        let s = IndexSet::from_pairs(&[(1, 1), (2, 1), (1, 3), (1, 1)], 3).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.symbols_for(0), vec![1, 2]);
        assert!(s.symbols_for(1).is_empty());
        assert_eq!(s.active_slots(), vec![0, 2]);
        assert!(IndexSet::from_pairs(&[(1, 4)], 3).is_err());
    }

    #[test]
    fn symbol_factor_examples() {
        let g = grid();
        let mut b = SymbolSet::new();
        b.insert_sampled(1, sample(|x| x[0], g).unwrap());
        b.insert_sampled(2, sample(|_| 4.0, g).unwrap());
        let x = [20i64];
        let ys = vec![vec![7i64], vec![11]];
        assert_eq!(
            symbol_factor(&b, &IndexSet::empty(2), &x, &ys).unwrap(),
            1.0
        );
        let lin = IndexSet::from_pairs(&[(1, 1)], 2).unwrap();
        let expected = g.coord(20) - g.coord(7);
        assert_eq!(symbol_factor(&b, &lin, &x, &ys).unwrap(), expected);
        let flat = IndexSet::from_pairs(&[(2, 2), (1, 1)], 2).unwrap();
        assert_eq!(symbol_factor(&b, &flat, &x, &ys).unwrap(), 0.0);
        let missing = IndexSet::from_pairs(&[(3, 1)], 2).unwrap();
        assert_eq!(
            symbol_factor(&b, &missing, &x, &ys),
            Err(Error::MissingSymbol(3))
        );
    }

    #[test]
    fn empty_set_is_plain_operator() {
        let g = grid();
        let fs = inputs(g);
        let trunc = TruncationPolicy::new(4.0 * g.spacing(), Cutoff::Smooth);
        let pts = EvalPoints::full(&g);
        let a = apply_t(&k1(2), &fs, &trunc, &pts).unwrap();
        let b = apply_t_bs(&k1(2), &symbols(g), &IndexSet::empty(2), &fs, &trunc, &pts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_symbols_vanish_and_shifts_cancel() {
        let g = grid();
        let fs = inputs(g);
        let trunc = TruncationPolicy::new(4.0 * g.spacing(), Cutoff::Smooth);
        let pts = EvalPoints::full(&g);
        let mut consts = SymbolSet::new();
        consts.insert_sampled(1, sample(|_| 2.5, g).unwrap());
        let s = IndexSet::from_pairs(&[(1, 1), (1, 2)], 2).unwrap();
        let out = apply_t_bs(&k1(2), &consts, &s, &fs, &trunc, &pts).unwrap();
        assert!(out.values.iter().all(|v| *v == 0.0));

        let b = symbols(g);
        let s = IndexSet::from_pairs(&[(1, 1), (2, 2), (2, 1)], 2).unwrap();
        let plain = apply_t_bs(&k1(2), &b, &s, &fs, &trunc, &pts).unwrap();
        let moved = apply_t_bs(&k1(2), &b.shifted(3.0).unwrap(), &s, &fs, &trunc, &pts).unwrap();
        let scale = plain.max_abs();
        for (u, v) in plain.values.iter().zip(&moved.values) {
            assert!((u - v).abs() <= 1e-10 * scale);
        }
    }

    /// Direct sum over all cell tuples with the symbol factor evaluated
    /// pair by pair; independent of the slot-folding path.
    fn direct(
        k: &dyn Kernel,
        b: &SymbolSet,
        s: &IndexSet,
        fs: &[SampledFunction],
        delta: f64,
        xi: i64,
    ) -> f64 {
        let g = *fs[0].grid();
        let x = [g.coord(xi)];
        let h = g.spacing();
        let mut total = 0.0;
        for a in 0..g.points_per_axis as i64 {
            for c in 0..g.points_per_axis as i64 {
                let ys = [g.coord(a), g.coord(c)];
                let sum = (x[0] - ys[0]).abs() + (x[0] - ys[1]).abs();
                let u = crate::numerics::smooth_step(sum / delta);
                if u == 0.0 {
                    continue;
                }
                let factor = symbol_factor(b, s, &[xi], &[vec![a], vec![c]]).unwrap();
                total +=
                    u * factor * k.eval(&x, &ys) * fs[0].at_lattice(&[a]) * fs[1].at_lattice(&[c]);
            }
        }
        total * h * h
    }

    #[test]
    fn commutator_forms_match_direct_sums() {
        let g = Grid::new(1, 2.0, 16).unwrap();
        let fs = inputs(g);
        let b = symbols(g);
        let delta = 2.0 * g.spacing();
        let trunc = TruncationPolicy::new(delta, Cutoff::Smooth);
        let pts = EvalPoints::full(&g);
        let forms = [
            vec![(1, 1), (1, 2)],
            vec![(1, 1)],
            vec![(2, 2)],
            vec![(1, 1), (2, 2)],
            vec![(1, 1), (2, 1), (2, 2)],
        ];
        for pairs in forms {
            let s = IndexSet::from_pairs(&pairs, 2).unwrap();
            let out = apply_t_bs(&k1(2), &b, &s, &fs, &trunc, &pts).unwrap();
            for (xi, v) in pts.lattice.iter().zip(&out.values) {
                let d = direct(&k1(2), &b, &s, &fs, delta, xi[0]);
                assert!((v - d).abs() <= 1e-12 * d.abs().max(1e-12), "{pairs:?}");
            }
        }
    }

    #[test]
    fn square_commutators() {
        let g = Grid::new(1, 2.0, 16).unwrap();
        let fam = ScaleFamily::with_default_grid(std::sync::Arc::new(KernelSpec::new(
            BuiltinLabel::K2,
            1,
            1,
        )));
        let f = vec![sample_recipe(&Recipe::bump(vec![0.0], 1.5, 1.0), g).unwrap()];
        let pts = EvalPoints::explicit(vec![vec![3], vec![9]], 1.0);
        let empty = IndexSet::empty(1);
        let b = symbols(g);
        let plain = crate::operators::apply_g(&fam, &f, &pts, None).unwrap();
        let same = apply_g_bs(&fam, &b, &empty, &f, None, &pts).unwrap();
        assert_eq!(plain, same);

        let mut lin = SymbolSet::new();
        lin.insert_sampled(1, sample(|x| x[0], g).unwrap());
        let s = IndexSet::from_pairs(&[(1, 1)], 1).unwrap();
        let out = apply_g_bs(&fam, &lin, &s, &f, None, &pts).unwrap();
        // direct oracle: Θ_t(x) = Σ_y K_t(x, y)(x - y) f(y) h
        for (xi, v) in pts.lattice.iter().zip(&out.values) {
            let x = g.coord(xi[0]);
            let mut acc = 0.0;
            for t in fam.t_grid() {
                let mut theta = 0.0;
                for k in 0..g.len() {
                    let y = g.coord(k as i64);
                    theta += fam.eval_t(t, &[x], &[y]) * (x - y) * f[0].values()[k] * g.spacing();
                }
                acc += theta * theta * fam.log_step();
            }
            assert!((v - acc.sqrt()).abs() <= 1e-10 * v);
        }

        let mut consts = SymbolSet::new();
        consts.insert_sampled(1, sample(|_| 1.0, g).unwrap());
        let zero = apply_g_bs(&fam, &consts, &s, &f, None, &pts).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        let star = apply_g_star_bs(&fam, 4.0, &consts, &s, &f, &pts, &g, None).unwrap();
        assert!(star.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn expansion_identities() {
        let one = IndexSet::from_pairs(&[(1, 1)], 1).unwrap();
        let r = expansion_identity_check(&one, 50, 1).unwrap();
        assert!(r.first < 1e-15 && r.second < 1e-15);
        for size in 1..=6 {
            let pairs: Vec<(u32, usize)> =
                (0..size).map(|q| ((q / 2 + 1) as u32, q % 3 + 1)).collect();
            let s = IndexSet::from_pairs(&pairs, 3).unwrap();
            let r = expansion_identity_check(&s, 200, size as u64).unwrap();
            assert!(r.first <= 1e-10 && r.second <= 1e-10, "{r:?}");
        }
        let mut big = IndexSet::empty(9);
        for j in 0..9 {
            big.insert(1, j);
        }
        assert_eq!(
            expansion_identity_check(&big, 1, 0),
            Err(Error::SetTooLarge(9))
        );
    }

    fn unit_wv() -> WeightVector {
        WeightVector::new(vec![WeightSpec::unit(); 2], vec![2.0, 2.0]).unwrap()
    }

    #[test]
    fn convergence_study_trivia() {
        let g = grid();
        let h = g.spacing();
        let fs = inputs(g);
        let s = IndexSet::from_pairs(&[(1, 1)], 2).unwrap();
        let pts = EvalPoints::default_for(&g);
        let study = truncation_convergence_study(
            &k1(2),
            &symbols(g),
            &s,
            &fs,
            Cutoff::Smooth,
            &[2.0 * h, 4.0 * h],
            2.0 * h,
            &unit_wv(),
            &pts,
        )
        .unwrap();
        assert_eq!(study.rows[0].norm, 0.0);
        assert!(study.rows[1].norm > 0.0);
        let mut consts = SymbolSet::new();
        consts.insert_sampled(1, sample(|_| 1.0, g).unwrap());
        let flat = truncation_convergence_study(
            &k1(2),
            &consts,
            &s,
            &fs,
            Cutoff::Smooth,
            &[4.0 * h, 8.0 * h],
            2.0 * h,
            &unit_wv(),
            &pts,
        )
        .unwrap();
        assert!(flat.rows.iter().all(|r| r.norm == 0.0));
    }

    #[test]
    fn near_far_trivia() {
        let g = grid();
        let h = g.spacing();
        // x far from a narrow support: nothing within small δ
        let f = vec![sample_recipe(&Recipe::bump(vec![-1.2], 0.5, 1.0), g).unwrap()];
        let pts = EvalPoints::explicit(vec![vec![28]], 1.0);
        let study = near_far_bounds_study(&f, &[2.0 * h], &pts).unwrap();
        assert_eq!(study.rows[0].near[0], 0.0);
        let fs = inputs(g);
        let pts = EvalPoints::explicit(vec![vec![14], vec![17]], 1.0);
        let a = near_far_bounds_study(&fs, &[2.0 * h, 4.0 * h], &pts).unwrap();
        let scaled = vec![fs[0].scaled(3.0).unwrap(), fs[1].scaled(0.25).unwrap()];
        let b = near_far_bounds_study(&scaled, &[2.0 * h, 4.0 * h], &pts).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for (u, v) in ra
                .near
                .iter()
                .zip(&rb.near)
                .chain(ra.far.iter().zip(&rb.far))
            {
                assert!((u - v).abs() <= 1e-12 * u);
            }
        }
        let zero = vec![SampledFunction::zeros(g)];
        assert!(matches!(
            near_far_bounds_study(&zero, &[2.0 * h], &pts),
            Err(Error::ZeroMaximal(_))
        ));
    }

    #[test]
    fn decay_trivia() {
        let g = Grid::new(1, 20.0, 64).unwrap();
        let h = g.spacing();
        let trunc = TruncationPolicy::new(2.0 * h, Cutoff::Smooth);
        let mut b = SymbolSet::new();
        b.insert_bump(1, g, vec![0.0], 1.0, 1.0).unwrap();
        let s = IndexSet::from_pairs(&[(1, 1)], 2).unwrap();
        let zero = vec![SampledFunction::zeros(g), SampledFunction::zeros(g)];
        let study = decay_study(&k1(2), &b, &s, &zero, &trunc, &[4.0, 8.0]).unwrap();
        assert!(study.rows.iter().all(|r| r.sup == 0.0));
        let fs: Vec<SampledFunction> = (0..2)
            .map(|_| sample_recipe(&Recipe::bump(vec![0.0], 1.5, 1.0), g).unwrap())
            .collect();
        let a = decay_study(&k1(2), &b, &s, &fs, &trunc, &[4.0, 8.0]).unwrap();
        let doubled = vec![fs[0].scaled(2.0).unwrap(), fs[1].clone()];
        let c = decay_study(&k1(2), &b, &s, &doubled, &trunc, &[4.0, 8.0]).unwrap();
        for (u, v) in a.rows.iter().zip(&c.rows) {
            assert!((v.sup - 2.0 * u.sup).abs() <= 1e-12 * u.sup);
        }
        assert!(matches!(
            decay_study(&k1(2), &b, &s, &fs, &trunc, &[30.0]),
            Err(Error::RadiusOutsideBox { .. })
        ));
    }

    #[test]
    fn modulus_trivia() {
        let g = grid();
        let h = g.spacing();
        let fs = inputs(g);
        let trunc = TruncationPolicy::new(8.0 * h, Cutoff::Smooth);
        let pts = EvalPoints::full(&g);
        let s = IndexSet::from_pairs(&[(1, 1)], 2).unwrap();
        let b = symbols(g);
        let study = translation_modulus_study(
            &k1(2),
            &b,
            &s,
            &fs,
            &trunc,
            &[vec![0.0], vec![h]],
            &unit_wv(),
            &pts,
        )
        .unwrap();
        assert_eq!(study.rows[0].norm, 0.0);
        assert!(study.rows[1].norm > 0.0);
        assert!(matches!(
            translation_modulus_study(
                &k1(2),
                &b,
                &s,
                &fs,
                &trunc,
                &[vec![5.0 * h]],
                &unit_wv(),
                &pts
            ),
            Err(Error::ShiftTooLarge { .. })
        ));
        assert!(matches!(
            translation_modulus_study(
                &k1(2),
                &b,
                &s,
                &fs,
                &trunc,
                &[vec![0.5 * h]],
                &unit_wv(),
                &pts
            ),
            Err(Error::MisalignedShift { .. })
        ));
        let mut consts = SymbolSet::new();
        consts.insert_sampled(1, sample(|_| 1.0, g).unwrap());
        let flat = translation_modulus_study(
            &k1(2),
            &consts,
            &IndexSet::empty(2),
            &fs,
            &trunc,
            &[vec![h], vec![2.0 * h]],
            &unit_wv(),
            &pts,
        )
        .unwrap();
        assert!(flat.rows[0].norm > 0.0 && flat.rows[0].norm < flat.rows[1].norm);
    }
}
