//! The acceptance suite: thirteen numbered checks at fixed desk-scale
//! configurations. Every check returns a pass flag, a one-line summary and a
//! text dump of the numbers it looked at; the last check compares those
//! dumps across thread counts.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::commutators::{
    apply_t_bs, decay_study, expansion_identity_check, near_far_bounds_study,
    translation_modulus_study, truncation_convergence_study, IndexSet, SymbolSet,
};
use crate::compactness::{
    axis_shifts, build_net, epsilon_from_report, exponent_domination, fk_report, fk_verdict,
    inequality_selftest, FkTolerance, Verdict,
};
use crate::error::{Error, Result};
use crate::funcspace::{
    sample, sample_recipe, translate_cells, FamilyOfFunctions, Grid, Recipe, SampledFunction,
};
use crate::kernels::{
    certify_size, certify_square_bounds, BuiltinLabel, ConfigSampler, Kernel, KernelSpec,
    ScaleFamily, SquareRequest,
};
use crate::numerics::{fmt17, spread};
use crate::operators::{
    apply_t, dyadic_scales, empirical_ratio, maximal_ma, Cutoff, EvalPoints, TruncationPolicy,
};
use crate::rng::Stream;
use crate::weights::{ap_constant, CubeFamily, WeightSpec, WeightVector};

pub const DEFAULT_SEED: u64 = 20_160_101;
pub const CRITERIA: u8 = 13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub summary: String,
    /// Every number the check looked at, one `key,value...` row per line.
    pub output: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<34} {}  {}",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.summary
        )
    }
}

pub fn name(id: u8) -> &'static str {
    match id {
        1 => "elementary inequalities",
        2 => "product-expansion identities",
        3 => "commutator degeneracies",
        4 => "truncation convergence",
        5 => "near/far diagonal bounds",
        6 => "spatial decay",
        7 => "translation modulus",
        8 => "A_p oracle",
        9 => "maximal ratio stability",
        10 => "kernel certificates",
        11 => "FK diagnostics",
        12 => "net certificate",
        13 => "determinism",
        _ => "unknown",
    }
}

/// Rows of `key,v1,v2,...` with 17-digit floats.
#[derive(Default)]
struct Dump(String);

impl Dump {
    fn row(&mut self, key: &str, values: &[f64]) {
        self.0.push_str(key);
        for v in values {
            self.0.push(',');
            self.0.push_str(&fmt17(*v));
        }
        self.0.push('\n');
    }

    fn text(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key},{value}");
    }
}

struct Check {
    pass: bool,
    summary: String,
    dump: Dump,
}

fn seed_for(seed: u64, id: u8) -> u64 {
    Stream::derive(seed, id as u64).next_u64()
}

/// Runs one criterion in the current rayon pool. Criterion 13 runs 1..=12
/// twice in dedicated pools.
pub fn run(id: u8, seed: u64) -> Outcome {
    let checked = match id {
        1 => c1(seed_for(seed, 1)),
        2 => c2(seed_for(seed, 2)),
        3 => c3(),
        4 => c4(),
        5 => c5(),
        6 => c6(),
        7 => c7(),
        8 => c8(),
        9 => c9(seed_for(seed, 9)),
        10 => c10(seed_for(seed, 10)),
        11 => c11(seed_for(seed, 11)),
        12 => c12(),
        13 => c13(seed),
        _ => Err(Error::InvalidArgument(format!("no criterion {id}"))),
    };
    match checked {
        Ok(c) => Outcome {
            id,
            name: name(id),
            pass: c.pass,
            summary: c.summary,
            output: c.dump.0,
        },
        Err(e) => Outcome {
            id,
            name: name(id),
            pass: false,
            summary: format!("error: {e}"),
            output: String::new(),
        },
    }
}

pub fn run_all(seed: u64) -> Vec<Outcome> {
    (1..=CRITERIA).map(|id| run(id, seed)).collect()
}

fn c1(seed: u64) -> Result<Check> {
    let r = inequality_selftest(1_000_000, seed)?;
    let mut dump = Dump::default();
    dump.text("trials", r.trials);
    dump.text("violations_first", r.violations_first);
    dump.text("violations_second", r.violations_second);
    dump.row("worst_ratios", &[r.worst_first, r.worst_second]);
    Ok(Check {
        pass: r.violations_first == 0 && r.violations_second == 0,
        summary: format!(
            "{} triples, violations {}/{}, worst lhs/rhs {:.3e} {:.3e}",
            r.trials, r.violations_first, r.violations_second, r.worst_first, r.worst_second
        ),
        dump,
    })
}

fn c2(seed: u64) -> Result<Check> {
    let mut dump = Dump::default();
    let mut worst: f64 = 0.0;
    for size in 1..=6usize {
        let pairs: Vec<(u32, usize)> = (0..size).map(|q| ((q / 3 + 1) as u32, q % 3 + 1)).collect();
        let s = IndexSet::from_pairs(&pairs, 3)?;
        let r = expansion_identity_check(&s, 1000, seed.wrapping_add(size as u64))?;
        dump.row(&format!("size_{size}"), &[r.first, r.second]);
        worst = worst.max(r.first).max(r.second);
    }
    Ok(Check {
        pass: worst <= 1e-10,
        summary: format!("|S| = 1..6, 1000 trials each, max relative error {worst:.3e}"),
        dump,
    })
}

fn k1(m: usize, n: usize) -> KernelSpec {
    KernelSpec::new(BuiltinLabel::K1, m, n)
}

fn bump(g: Grid, center: f64, radius: f64) -> Result<SampledFunction> {
    sample_recipe(&Recipe::bump(vec![center], radius, 1.0), g)
}

fn unit_weights(m: usize) -> Result<WeightVector> {
    WeightVector::new(vec![WeightSpec::unit(); m], vec![2.0; m])
}

fn c3() -> Result<Check> {
    let g = Grid::new(1, 2.0, 32)?;
    let h = g.spacing();
    let fs = vec![bump(g, 0.2, 1.2)?, bump(g, -0.3, 1.0)?.scaled(2.0)?];
    let mut b = SymbolSet::new();
    b.insert_bump(1, g, vec![0.0], 1.0, 1.0)?;
    b.insert_bump(2, g, vec![0.4], 0.8, 0.5)?;
    let k = k1(2, 1);
    let trunc = TruncationPolicy::new(4.0 * h, Cutoff::Smooth);
    let pts = EvalPoints::full(&g);
    let mut dump = Dump::default();

    let plain = apply_t(&k, &fs, &trunc, &pts)?;
    let empty = apply_t_bs(&k, &b, &IndexSet::empty(2), &fs, &trunc, &pts)?;
    let identical = plain
        .values
        .iter()
        .zip(&empty.values)
        .all(|(a, e)| a.to_bits() == e.to_bits());
    dump.row("plain", &plain.values);

    let s = IndexSet::from_pairs(&[(1, 1), (2, 2), (1, 2)], 2)?;
    let mut consts = SymbolSet::new();
    consts.insert_sampled(1, sample(|_| 2.5, g)?);
    consts.insert_sampled(2, sample(|_| -1.0, g)?);
    let flat = apply_t_bs(&k, &consts, &s, &fs, &trunc, &pts)?;
    let scale = plain.max_abs();
    let vanishing = flat.max_abs() / scale;
    dump.row("constant_symbols", &flat.values);

    let base = apply_t_bs(&k, &b, &s, &fs, &trunc, &pts)?;
    let moved = apply_t_bs(&k, &b.shifted(3.0)?, &s, &fs, &trunc, &pts)?;
    let shift_err = base
        .values
        .iter()
        .zip(&moved.values)
        .map(|(a, c)| (a - c).abs())
        .fold(0.0, f64::max)
        / base.max_abs();
    dump.row("commutator", &base.values);
    dump.row("shifted_symbols", &moved.values);
    Ok(Check {
        pass: identical && vanishing <= 1e-12 && shift_err <= 1e-10,
        summary: format!(
            "empty S bitwise {}, constants {vanishing:.1e}, shift {shift_err:.1e}",
            if identical { "equal" } else { "DIFFERENT" }
        ),
        dump,
    })
}

/// Shared configuration of the truncation studies: L = 2, unit bumps,
/// bump symbol, S = {(1,1)}, p_j = 2 with unit weights.
struct BumpSetup {
    grid: Grid,
    fs: Vec<SampledFunction>,
    b: SymbolSet,
    s: IndexSet,
}

fn bump_setup(points: usize) -> Result<BumpSetup> {
    let grid = Grid::new(1, 2.0, points)?;
    let fs = vec![bump(grid, 0.0, 1.0)?, bump(grid, 0.0, 1.0)?];
    let mut b = SymbolSet::new();
    b.insert_bump(1, grid, vec![0.0], 1.0, 1.0)?;
    Ok(BumpSetup {
        grid,
        fs,
        b,
        s: IndexSet::from_pairs(&[(1, 1)], 2)?,
    })
}

/// 16 consecutive cells around the origin.
fn central_probes(g: &Grid) -> Vec<usize> {
    let mid = g.points_per_axis / 2;
    (mid - 8..mid + 8).collect()
}

fn c4() -> Result<Check> {
    let st = bump_setup(32)?;
    let h = st.grid.spacing();
    let deltas: Vec<f64> = [2.0, 4.0, 8.0, 16.0, 32.0].iter().map(|c| c * h).collect();
    let study = truncation_convergence_study(
        &k1(2, 1),
        &st.b,
        &st.s,
        &st.fs,
        Cutoff::Smooth,
        &deltas,
        2.0 * h,
        &unit_weights(2)?,
        &EvalPoints::full(&st.grid),
    )?;
    let probes = central_probes(&st.grid);
    let mut dump = Dump::default();
    let mut sups = Vec::new();
    for row in &study.rows {
        let sup = probes.iter().map(|&i| row.ratios[i]).fold(0.0, f64::max);
        dump.row(
            &format!("delta_{}", row.delta),
            &[row.norm, row.max_ratio, sup],
        );
        if row.delta > study.reference_delta {
            sups.push(sup);
        }
    }
    let slope = study.slope.unwrap_or(f64::NAN);
    let ratio_spread = spread(&sups);
    dump.row("fit", &[slope, ratio_spread]);
    Ok(Check {
        pass: (0.8..=1.2).contains(&slope) && ratio_spread <= 2.0,
        summary: format!("slope {slope:.3}, probe-ratio spread {ratio_spread:.3}"),
        dump,
    })
}

fn c5() -> Result<Check> {
    // the six dyadic δ from 2h must stay well inside the unit supports
    let st = bump_setup(1024)?;
    let h = st.grid.spacing();
    let probes: Vec<Vec<i64>> = central_probes(&st.grid)
        .into_iter()
        .map(|i| vec![i as i64])
        .collect();
    let deltas: Vec<f64> = (0..6).map(|k| 2.0 * h * 2f64.powi(k)).collect();
    let study = near_far_bounds_study(&st.fs, &deltas, &EvalPoints::explicit(probes, 1.0))?;
    let mut dump = Dump::default();
    for row in &study.rows {
        dump.row(
            &format!("delta_{}", row.delta),
            &[row.near_sup, row.far_sup],
        );
    }
    let finite = study
        .rows
        .iter()
        .all(|r| r.near_sup.is_finite() && r.far_sup.is_finite());
    Ok(Check {
        pass: finite && study.near_spread <= 2.0 && study.far_spread <= 2.0,
        summary: format!(
            "near spread {:.3}, far spread {:.3}",
            study.near_spread, study.far_spread
        ),
        dump,
    })
}

fn c6() -> Result<Check> {
    let g = Grid::new(1, 34.0, 64)?;
    let fs = vec![bump(g, 0.0, 1.0)?, bump(g, 0.2, 0.8)?];
    let mut b = SymbolSet::new();
    b.insert_bump(1, g, vec![0.0], 1.0, 1.0)?;
    let s = IndexSet::from_pairs(&[(1, 1)], 2)?;
    let trunc = TruncationPolicy::new(2.0 * g.spacing(), Cutoff::Smooth);
    let study = decay_study(&k1(2, 1), &b, &s, &fs, &trunc, &[4.0, 8.0, 16.0, 32.0])?;
    let mut dump = Dump::default();
    for row in &study.rows {
        dump.row(&format!("radius_{}", row.radius), &[row.at, row.sup]);
    }
    let slope = study.slope.unwrap_or(f64::NAN);
    dump.row("slope", &[slope]);
    Ok(Check {
        pass: (slope + 2.0).abs() <= 0.15,
        summary: format!("slope {slope:.3} (target -2)"),
        dump,
    })
}

fn c7() -> Result<Check> {
    let st = bump_setup(64)?;
    let h = st.grid.spacing();
    let shifts: Vec<Vec<f64>> = [1.0, 2.0, 4.0, 8.0].iter().map(|c| vec![c * h]).collect();
    let study = translation_modulus_study(
        &k1(2, 1),
        &st.b,
        &st.s,
        &st.fs,
        &TruncationPolicy::new(32.0 * h, Cutoff::Smooth),
        &shifts,
        &unit_weights(2)?,
        &EvalPoints::full(&st.grid),
    )?;
    let mut dump = Dump::default();
    for r in &study.rows {
        dump.row(
            &format!("shift_{}", r.length),
            &[
                r.norm,
                r.part_one,
                r.part_two,
                r.part_one_ratio,
                r.part_two_ratio,
            ],
        );
    }
    let slope = study.slope.unwrap_or(f64::NAN);
    dump.row("slope", &[slope]);
    Ok(Check {
        pass: (0.8..=1.2).contains(&slope),
        summary: format!("slope {slope:.3}"),
        dump,
    })
}

/// The cube [0, 1] resolved by `cells` cells.
fn unit_cube(cells: usize) -> Result<CubeFamily> {
    CubeFamily::from_coordinates(Grid::new(1, 1.0, 2 * cells)?, &[0.0], 1.0)
}

fn c8() -> Result<Check> {
    let mut dump = Dump::default();
    let exact = 4.0 / 3.0;
    let mut errors = Vec::new();
    for k in 6..=10 {
        let v = ap_constant(&WeightSpec::power(0.5, 0.0), 2.0, &unit_cube(1 << k)?)?.value;
        dump.row(&format!("sqrt_cells_{}", 1 << k), &[v]);
        errors.push((v - exact).abs() / exact);
    }
    let converging = errors.windows(2).all(|e| e[1] < e[0]);
    let final_error = *errors.last().expect("five levels");
    let mut growth = Vec::new();
    for k in 3..=10 {
        let v = ap_constant(&WeightSpec::power(1.5, 0.0), 2.0, &unit_cube(1 << k)?)?.value;
        dump.row(&format!("steep_cells_{}", 1 << k), &[v]);
        growth.push(v);
    }
    let growing = growth.windows(2).all(|g| g[1] > g[0]);
    Ok(Check {
        pass: converging && final_error <= 0.02 && growing,
        summary: format!(
            "alpha=1/2 error {:.2}% at 1024 cells; alpha=1.5 {:.3} -> {:.3} {}",
            100.0 * final_error,
            growth[0],
            growth[growth.len() - 1],
            if growing {
                "increasing"
            } else {
                "NOT increasing"
            }
        ),
        dump,
    })
}

fn c9(seed: u64) -> Result<Check> {
    let wv = WeightVector::new(
        vec![WeightSpec::power(0.3, 0.0), WeightSpec::power(-0.2, 0.0)],
        vec![2.0, 2.0],
    )?;
    let mut rng = Stream::new(seed);
    let testset: Vec<Vec<Recipe>> = (0..20)
        .map(|_| {
            (0..2)
                .map(|_| {
                    Recipe::bump(
                        vec![rng.range(-1.0, 1.0)],
                        rng.range(0.3, 1.0),
                        rng.range(0.5, 2.0),
                    )
                })
                .collect()
        })
        .collect();
    let grids = [Grid::new(1, 2.0, 32)?, Grid::new(1, 2.0, 64)?];
    let report = empirical_ratio(
        |fs: &[SampledFunction]| {
            let g = fs[0].grid();
            maximal_ma(fs, &[0, 1], &EvalPoints::full(g), &dyadic_scales(g))
        },
        &wv,
        &testset,
        &grids,
    )?;
    let mut dump = Dump::default();
    for gr in &report.per_grid {
        dump.row(&format!("points_{}", gr.grid.points_per_axis), &gr.ratios);
    }
    dump.row("stability", &[report.stability]);
    Ok(Check {
        pass: report.stability <= 0.2,
        summary: format!(
            "max ratio {:.4} (32) vs {:.4} (64), change {:.1}%",
            report.per_grid[0].max,
            report.per_grid[1].max,
            100.0 * report.stability
        ),
        dump,
    })
}

fn c10(seed: u64) -> Result<Check> {
    let mut dump = Dump::default();
    let mut size_dev: f64 = 0.0;
    for m in 1..=3 {
        for n in 1..=2 {
            let samples = ConfigSampler::new(m, n).size_samples(10_000, seed ^ (10 * m + n) as u64);
            let cert = certify_size(&k1(m, n), &samples, 1.0, None)?;
            let dev = cert
                .ratios
                .iter()
                .map(|r| (r - 1.0).abs())
                .fold(0.0, f64::max);
            dump.row(&format!("k1_size_m{m}_n{n}"), &[dev]);
            size_dev = size_dev.max(dev);
        }
    }

    let mut outside = 0usize;
    let mut nonzero_outside = 0usize;
    let mut inside_positive = 0usize;
    for m in 1..=3 {
        for n in 1..=2 {
            let k2 = KernelSpec::new(BuiltinLabel::K2, m, n);
            let sampler = ConfigSampler {
                m,
                n,
                spread: 1.0,
                r_min: 1e-3,
                r_max: 2.0,
            };
            for s in sampler.size_samples(10_000, seed ^ (100 + 10 * m + n) as u64) {
                let sq: f64 =
                    s.ys.chunks_exact(n)
                        .map(|y| {
                            y.iter()
                                .zip(&s.x)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                        })
                        .sum();
                let v = k2.eval(&s.x, &s.ys);
                if sq > 1.0 {
                    outside += 1;
                    if v != 0.0 {
                        nonzero_outside += 1;
                    }
                } else if v != 0.0 {
                    inside_positive += 1;
                }
            }
        }
    }
    dump.text("k2_outside", outside);
    dump.text("k2_nonzero_outside", nonzero_outside);
    dump.text("k2_nonzero_inside", inside_positive);

    let fam = ScaleFamily::with_default_grid(Arc::new(KernelSpec::new(BuiltinLabel::K2, 2, 1)));
    let sampler = ConfigSampler {
        m: 2,
        n: 1,
        spread: 1.0,
        r_min: 0.05,
        r_max: 2.0,
    };
    let req = SquareRequest {
        size: Some(sampler.size_samples(200, seed ^ 1)),
        y: Some((1, sampler.y_samples(1, 2.0, 200, seed ^ 2))),
        x: Some(sampler.x_samples(2.0, 200, seed ^ 3)),
        star: Some((2.0, Grid::new(1, 4.0, 32)?)),
        gamma: 1.0,
        b1: 2.0,
        constant: f64::INFINITY,
    };
    let coarse = certify_square_bounds(&fam, &req)?;
    let fine = certify_square_bounds(&fam.refine(), &req)?;
    let mut worst_change: f64 = 0.0;
    let mut finite = true;
    for (a, b) in coarse.iter().zip(&fine) {
        let change = (a.worst_ratio - b.worst_ratio).abs() / b.worst_ratio;
        finite &= a.worst_ratio.is_finite() && b.worst_ratio.is_finite() && b.worst_ratio > 0.0;
        worst_change = worst_change.max(change);
        dump.row(&a.condition.name(), &[a.worst_ratio, b.worst_ratio]);
    }
    Ok(Check {
        pass: size_dev <= 1e-12
            && nonzero_outside == 0
            && inside_positive > 0
            && finite
            && worst_change <= 0.05,
        summary: format!(
            "K1 deviation {size_dev:.1e}; K2 nonzero outside support {nonzero_outside}/{outside}; square ratios change {:.2}%",
            100.0 * worst_change
        ),
        dump,
    })
}

fn c11(seed: u64) -> Result<Check> {
    let tol = FkTolerance::default();
    let mut dump = Dump::default();

    let g = Grid::new(1, 4.0, 64)?;
    let shifts = axis_shifts(&g, &[0, 8, 4, 2, 1]);
    let radii = [1.0, 2.0, 3.0];
    let zero = FamilyOfFunctions::new(vec![SampledFunction::zeros(g)])?;
    let single = FamilyOfFunctions::new(vec![bump(g, 0.0, 1.0)?])?;
    let v_zero = fk_verdict(
        &fk_report(&zero, 2.0, &WeightSpec::unit(), &radii, &shifts)?,
        &tol,
    );
    let v_single = fk_verdict(
        &fk_report(&single, 2.0, &WeightSpec::unit(), &radii, &shifts)?,
        &tol,
    );
    dump.text("zero", v_zero);
    dump.text("single_bump", v_single);

    let wide = Grid::new(1, 8.0, 64)?;
    let base = bump(wide, 0.0, 1.0)?;
    let translates =
        FamilyOfFunctions::new((0..=6).map(|k| translate_cells(&base, &[-4 * k])).collect())?;
    let heavy = WeightSpec {
        alpha: 2.0,
        eps: 1.0,
        scale: 1.0,
    };
    let report = fk_report(
        &translates,
        2.0,
        &heavy,
        &[2.0, 4.0, 6.0],
        &axis_shifts(&wide, &[0, 2, 1]),
    )?;
    let v_translates = fk_verdict(&report, &tol);
    let tails: Vec<f64> = report.tail_curve.iter().map(|c| c.1).collect();
    dump.row("translate_tails", &tails);
    dump.text("translates", v_translates);

    let fine = Grid::new(1, 2.0, 128)?;
    let oscillations = FamilyOfFunctions::new(
        (1..=5)
            .map(|k| sample_recipe(&Recipe::Oscillation { k, radius: 1.0 }, fine))
            .collect::<Result<_>>()?,
    )?;
    let report = fk_report(
        &oscillations,
        2.0,
        &WeightSpec::unit(),
        &[1.0, 1.5],
        &axis_shifts(&fine, &[0, 8, 4, 2, 1]),
    )?;
    let v_osc = fk_verdict(&report, &tol);
    let moduli: Vec<f64> = report.modulus_curve.iter().map(|s| s.value).collect();
    dump.row("oscillation_moduli", &moduli);
    dump.text("oscillations", v_osc);

    let mut rng = Stream::new(seed);
    let mut members = Vec::new();
    for k in 0..6 {
        let pb = sample_recipe(
            &Recipe::PerturbedBump {
                center: vec![rng.range(-1.0, 1.0)],
                radius: rng.range(0.5, 2.0),
                amplitude: 1.0,
                noise: 0.2,
                seed: seed.wrapping_add(k),
            },
            g,
        )?;
        members.push(pb.map(f64::abs)?);
    }
    members.push(SampledFunction::from_values(
        g,
        (0..g.len()).map(|_| rng.uniform() * 2.0).collect(),
    )?);
    let dom = exponent_domination(
        &FamilyOfFunctions::new(members)?,
        0.5,
        2.0,
        &WeightSpec::power(0.5, 1.0),
        &axis_shifts(&g, &[1, 2, 3, 5, 8, 13]),
    )?;
    dump.text("domination_checks", dom.checks);
    dump.text("domination_cell_violations", dom.cell_violations);
    dump.text("domination_integral_violations", dom.integral_violations);
    dump.row("domination_worst", &[dom.worst_cell_ratio]);

    let pass = v_zero == Verdict::Pass
        && v_single == Verdict::Pass
        && v_translates == Verdict::FailTail
        && v_osc == Verdict::FailModulus
        && dom.cell_violations == 0
        && dom.integral_violations == 0;
    Ok(Check {
        pass,
        summary: format!(
            "zero {v_zero}, bump {v_single}, translates {v_translates}, oscillations {v_osc}, domination violations {}/{}",
            dom.cell_violations + dom.integral_violations,
            dom.checks
        ),
        dump,
    })
}

fn c12() -> Result<Check> {
    let g = Grid::new(1, 4.0, 64)?;
    let h = g.spacing();
    let family = FamilyOfFunctions::new(
        (0..8)
            .map(|k| {
                sample_recipe(
                    &Recipe::PerturbedBump {
                        center: vec![0.0],
                        radius: 1.0,
                        amplitude: 1.0,
                        noise: 0.01 * k as f64,
                        seed: 7,
                    },
                    g,
                )
            })
            .collect::<Result<_>>()?,
    )?;
    let t = 2.0 * h;
    let a = 3.0;
    let shifts = axis_shifts(&g, &[0, 1, 2]);
    let mut dump = Dump::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, w) in [
        ("unit", WeightSpec::unit()),
        ("sqrt", WeightSpec::power(0.5, 1.0)),
    ] {
        let report = fk_report(&family, 2.0, &w, &[1.0, 2.0, a], &shifts)?;
        let eps = epsilon_from_report(&report, t, a)
            .ok_or_else(|| Error::InvalidArgument("report yields no epsilon".into()))?;
        let cert = build_net(&family, 2.0, &w, eps, t, a)?;
        let deviation = cert.verify(&family)?;
        dump.row(
            &format!("{label}_certificate"),
            &[
                eps,
                cert.tolerance,
                cert.certified_radius,
                cert.target,
                deviation,
            ],
        );
        dump.row(&format!("{label}_distances"), &cert.distances);
        pass &= cert.holds() && deviation <= 1e-12 && cert.selected.len() <= 8;
        parts.push(format!(
            "{label}: {} of 8 selected, radius {:.3e} <= 5eps {:.3e}",
            cert.selected.len(),
            cert.certified_radius,
            cert.target
        ));
    }
    Ok(Check {
        pass,
        summary: parts.join("; "),
        dump,
    })
}

fn c13(seed: u64) -> Result<Check> {
    let in_pool = |threads: usize| -> Result<Vec<Outcome>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(pool.install(|| (1..CRITERIA).map(|id| run(id, seed)).collect()))
    };
    let one = in_pool(1)?;
    let four = in_pool(4)?;
    let mut dump = Dump::default();
    let mut differing = Vec::new();
    for (a, b) in one.iter().zip(&four) {
        let same = a.output == b.output && a.pass == b.pass;
        dump.text(
            &format!("criterion_{}", a.id),
            if same { "identical" } else { "differs" },
        );
        if !same {
            differing.push(a.id.to_string());
        }
    }
    Ok(Check {
        pass: differing.is_empty(),
        summary: if differing.is_empty() {
            "criteria 1-12 byte-identical with 1 and 4 threads".into()
        } else {
            format!("outputs differ for criteria {}", differing.join(", "))
        },
        dump,
    })
}
