use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use czlab::acceptance;
use czlab::commutators::{
    apply_g_bs, apply_g_star_bs, apply_t_bs, decay_study, near_far_bounds_study,
    translation_modulus_study, truncation_convergence_study, IndexSet, SymbolSet,
};
use czlab::compactness::{
    axis_shifts, build_net, epsilon_from_report, fk_report, fk_verdict, Verdict,
};
use czlab::funcspace::{Grid, SampledFunction};
use czlab::kernels::{
    certify_hoelder_x, certify_hoelder_y, certify_size, certify_square_bounds, ConfigSampler,
    Kernel, KernelCertificate, KernelSpec, ScaleFamily, SquareRequest,
};
use czlab::numerics::fmt17;
use czlab::operators::{
    apply_g, apply_g_star, apply_t, empirical_ratio, EvalPoints, OperatorOutput, TruncationPolicy,
};
use czlab::rng::Stream;
use czlab::weights::{ap_constant, CubeFamily};

use crate::config::{self as cfg, ConditionKind, OperatorKind, ScalesConfig, StarConfig};

/// Everything a finished scenario hands back: named output files, report
/// lines for stdout, and whether the scenario passed.
pub struct Produced {
    pub files: Vec<(String, Vec<u8>)>,
    pub lines: Vec<String>,
    pub pass: bool,
}

/// Validated scenario, ready to execute.
pub type Job = Box<dyn FnOnce() -> Result<Produced> + Send>;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: ToString>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
    }
}

fn f(x: f64) -> String {
    fmt17(x)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), fmt17)
}

fn axis_header(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|d| format!("{prefix}_{d}")).collect()
}

fn with_coords(coords: &[f64], rest: impl IntoIterator<Item = String>) -> Vec<String> {
    coords.iter().map(|&c| f(c)).chain(rest).collect()
}

fn values_table(out: &OperatorOutput, n: usize) -> Table {
    let mut t = Table::new(axis_header("x", n).into_iter().chain(["value".into()]));
    for (x, v) in out.points.iter().zip(&out.values) {
        t.push(with_coords(x, [f(*v)]));
    }
    t
}

/// Operator choice resolved against the config: T needs δ, G* needs λ and a
/// z-grid. Symbols switch to the commutator versions.
struct Operator {
    kind: OperatorKind,
    kernel: KernelSpec,
    family: Option<ScaleFamily>,
    trunc: Option<TruncationPolicy>,
    star: Option<(f64, Grid)>,
    commutator: Option<(SymbolSet, IndexSet)>,
}

impl Operator {
    fn new(
        kind: OperatorKind,
        kernel: &KernelSpec,
        trunc: Option<TruncationPolicy>,
        scales: Option<ScalesConfig>,
        star: Option<StarConfig>,
    ) -> Result<Self> {
        kernel.validate().context("kernel")?;
        let family = match kind {
            OperatorKind::T => {
                if trunc.is_none() {
                    bail!("`delta` is required for operator \"t\"");
                }
                None
            }
            OperatorKind::G | OperatorKind::GStar => Some(cfg::scale_family(kernel, scales)?),
        };
        let star = match (kind, star) {
            (OperatorKind::GStar, Some(s)) => {
                Some((s.lambda, s.z_grid.build().context("star.z_grid")?))
            }
            (OperatorKind::GStar, None) => bail!("operator \"g-star\" needs a `star` table"),
            _ => None,
        };
        Ok(Self {
            kind,
            kernel: *kernel,
            family,
            trunc,
            star,
            commutator: None,
        })
    }

    fn apply(&self, fs: &[SampledFunction], points: &EvalPoints) -> czlab::Result<OperatorOutput> {
        let trunc = self.trunc.as_ref();
        match (&self.commutator, self.kind) {
            (None, OperatorKind::T) => apply_t(&self.kernel, fs, trunc.unwrap(), points),
            (None, OperatorKind::G) => apply_g(self.family.as_ref().unwrap(), fs, points, trunc),
            (None, OperatorKind::GStar) => {
                let (lambda, z) = self.star.unwrap();
                apply_g_star(self.family.as_ref().unwrap(), lambda, fs, points, &z, trunc)
            }
            (Some((b, s)), OperatorKind::T) => {
                apply_t_bs(&self.kernel, b, s, fs, trunc.unwrap(), points)
            }
            (Some((b, s)), OperatorKind::G) => {
                apply_g_bs(self.family.as_ref().unwrap(), b, s, fs, trunc, points)
            }
            (Some((b, s)), OperatorKind::GStar) => {
                let (lambda, z) = self.star.unwrap();
                apply_g_star_bs(
                    self.family.as_ref().unwrap(),
                    lambda,
                    b,
                    s,
                    fs,
                    points,
                    &z,
                    trunc,
                )
            }
        }
    }
}

fn check_trunc(trunc: Option<&TruncationPolicy>, grid: &Grid) -> Result<()> {
    if let Some(t) = trunc {
        t.check(grid).context("delta")?;
    }
    Ok(())
}

pub fn verify_kernel(c: &cfg::VerifyKernel, seed: u64) -> Result<Job> {
    let k = c.kernel;
    k.validate().context("kernel")?;
    cfg::nonempty(&c.conditions, "conditions")?;
    if c.samples == 0 {
        bail!("`samples` must be positive");
    }
    if c.slot == 0 || c.slot > k.m {
        bail!("`slot` must lie in 1..={}", k.m);
    }
    let mut sampler = ConfigSampler::new(k.m, k.n);
    sampler.spread = c.spread.unwrap_or(sampler.spread);
    sampler.r_min = c.r_min.unwrap_or(sampler.r_min);
    sampler.r_max = c.r_max.unwrap_or(sampler.r_max);
    if !(sampler.spread > 0.0 && sampler.r_min > 0.0 && sampler.r_min < sampler.r_max) {
        bail!("sampler needs spread > 0 and 0 < r_min < r_max");
    }
    let square = c.conditions.iter().any(|k| {
        matches!(
            k,
            ConditionKind::SquareSize | ConditionKind::SquareX | ConditionKind::SquareY
        )
    });
    let family = if square {
        Some(cfg::scale_family(&k, c.scales)?)
    } else {
        None
    };
    let star = match c.star {
        Some(s) => Some((s.lambda, s.z_grid.build().context("star.z_grid")?)),
        None => None,
    };
    let c = c.clone();
    Ok(Box::new(move || {
        let slot = c.slot - 1;
        let draw = |tag: u64| Stream::derive(seed, tag).next_u64();
        let mut certs: Vec<KernelCertificate> = Vec::new();
        let mut req = SquareRequest {
            star,
            gamma: c.gamma,
            b1: c.b1,
            constant: c.constant,
            ..Default::default()
        };
        for (i, cond) in c.conditions.iter().enumerate() {
            let s = draw(i as u64);
            match cond {
                ConditionKind::Size => certs.push(certify_size(
                    &k,
                    &sampler.size_samples(c.samples, s),
                    c.constant,
                    None,
                )?),
                ConditionKind::HoelderX => certs.push(certify_hoelder_x(
                    &k,
                    &sampler.x_samples(c.b1, c.samples, s),
                    c.constant,
                    c.gamma,
                    c.b1,
                    None,
                )?),
                ConditionKind::HoelderY => certs.push(certify_hoelder_y(
                    &k,
                    slot,
                    &sampler.y_samples(slot, c.b1, c.samples, s),
                    c.constant,
                    c.gamma,
                    c.b1,
                    None,
                )?),
                ConditionKind::SquareSize => req.size = Some(sampler.size_samples(c.samples, s)),
                ConditionKind::SquareX => req.x = Some(sampler.x_samples(c.b1, c.samples, s)),
                ConditionKind::SquareY => {
                    req.y = Some((slot, sampler.y_samples(slot, c.b1, c.samples, s)))
                }
            }
        }
        if let Some(fam) = &family {
            certs.extend(certify_square_bounds(fam, &req)?);
        }
        let mut text = String::new();
        let mut ratios = Table::new(["condition", "sample", "ratio"]);
        let mut summary = Table::new(["condition", "samples", "worst_ratio", "constant", "pass"]);
        let mut lines = Vec::new();
        for cert in &certs {
            let name = cert.condition.name();
            writeln!(text, "[{name}]")?;
            writeln!(
                text,
                "kernel = {} (m = {}, n = {})",
                Kernel::label(&k),
                k.m,
                k.n
            )?;
            writeln!(text, "samples = {}", cert.sample_count)?;
            writeln!(text, "worst_ratio = {}", f(cert.worst_ratio))?;
            writeln!(text, "constant = {}", f(cert.constant))?;
            writeln!(text, "pass = {}", cert.pass)?;
            if let Some(w) = &cert.witness {
                let join = |v: &[f64]| v.iter().map(|&x| f(x)).collect::<Vec<_>>().join(" ");
                writeln!(text, "witness_x = {}", join(&w.x))?;
                writeln!(text, "witness_ys = {}", join(&w.ys))?;
                writeln!(text, "witness_x_prime = {}", join(&w.x_prime))?;
                writeln!(text, "witness_ys_prime = {}", join(&w.ys_prime))?;
            }
            for warn in &cert.warnings {
                writeln!(text, "warning = {warn}")?;
            }
            writeln!(text)?;
            for (i, r) in cert.ratios.iter().enumerate() {
                ratios.push(vec![name.clone(), i.to_string(), f(*r)]);
            }
            summary.push(vec![
                name.clone(),
                cert.sample_count.to_string(),
                f(cert.worst_ratio),
                f(cert.constant),
                cert.pass.to_string(),
            ]);
            lines.push(format!(
                "{name}: worst ratio {:.6e} vs constant {:.6e} -> {}",
                cert.worst_ratio,
                cert.constant,
                if cert.pass { "pass" } else { "fail" }
            ));
        }
        Ok(Produced {
            files: vec![
                ("certificate.txt".into(), text.into_bytes()),
                ("ratios.csv".into(), ratios.bytes()?),
                ("summary.csv".into(), summary.bytes()?),
            ],
            lines,
            pass: certs.iter().all(|c| c.pass),
        })
    }))
}

pub fn ap_constant_run(c: &cfg::ApConstant) -> Result<Job> {
    let grid = c.grid.build()?;
    c.weight.validate().context("weight")?;
    let mut cubes = Vec::new();
    if let Some(d) = &c.dyadic {
        cubes.extend(
            CubeFamily::dyadic(grid, &d.centers, d.levels)
                .context("dyadic")?
                .cubes()
                .iter()
                .cloned(),
        );
    }
    for (i, q) in c.cubes.iter().enumerate() {
        let fam = CubeFamily::from_coordinates(grid, &q.corner, q.side)
            .with_context(|| format!("cubes[{i}]"))?;
        cubes.extend(fam.cubes().iter().cloned());
    }
    if cubes.is_empty() {
        bail!("give `dyadic` or at least one entry in `cubes`");
    }
    let family = CubeFamily::new(grid, cubes).context("cubes")?;
    let (w, p) = (c.weight, c.p);
    Ok(Box::new(move || {
        let est = ap_constant(&w, p, &family)?;
        let n = grid.n;
        let header = ["kind".to_string()]
            .into_iter()
            .chain(axis_header("center", n))
            .chain(["side".into(), "value".into()]);
        let mut t = Table::new(header);
        for (q, v) in &est.per_cube {
            let mut row = vec!["cube".to_string()];
            row.extend(with_coords(
                &q.center(&grid),
                [f(q.side_length(&grid)), f(*v)],
            ));
            t.push(row);
        }
        let mut row = vec!["sup".to_string()];
        row.extend(with_coords(
            &est.argmax.center(&grid),
            [f(est.argmax.side_length(&grid)), f(est.value)],
        ));
        t.push(row);
        Ok(Produced {
            files: vec![("cubes.csv".into(), t.bytes()?)],
            lines: vec![format!(
                "A_p constant over {} cubes: {:.6e}",
                est.per_cube.len(),
                est.value
            )],
            pass: true,
        })
    }))
}

pub fn run_operator(c: &cfg::RunOperator) -> Result<Job> {
    let grid = c.grid.build()?;
    let trunc = cfg::truncation(c.delta, c.cutoff);
    check_trunc(trunc.as_ref(), &grid)?;
    let op = Operator::new(c.operator, &c.kernel, trunc, c.scales, c.star)?;
    let fs = cfg::sample_all(&c.inputs, grid, "inputs")?;
    let points = c.points.build(&grid)?;
    Ok(operator_job(op, fs, points, grid.n))
}

fn operator_job(op: Operator, fs: Vec<SampledFunction>, points: EvalPoints, n: usize) -> Job {
    Box::new(move || {
        let out = op.apply(&fs, &points)?;
        let mut summary = Table::new(["points", "max_abs"]);
        summary.push(vec![out.values.len().to_string(), f(out.max_abs())]);
        Ok(Produced {
            files: vec![
                ("values.csv".into(), values_table(&out, n).bytes()?),
                ("summary.csv".into(), summary.bytes()?),
            ],
            lines: vec![format!(
                "{} points, max |value| {:.6e}",
                out.values.len(),
                out.max_abs()
            )],
            pass: true,
        })
    })
}

pub fn empirical_ratio_run(c: &cfg::EmpiricalRatio) -> Result<Job> {
    let grids = c
        .grids
        .iter()
        .enumerate()
        .map(|(i, g)| g.build().with_context(|| format!("grids[{i}]")))
        .collect::<Result<Vec<Grid>>>()?;
    cfg::nonempty(&grids, "grids")?;
    cfg::nonempty(&c.tuples, "tuples")?;
    let trunc = cfg::truncation(c.delta, c.cutoff);
    for g in &grids {
        check_trunc(trunc.as_ref(), g)?;
    }
    let op = Operator::new(c.operator, &c.kernel, trunc, c.scales, c.star)?;
    let wv = c.weights.build()?;
    if wv.m() != c.kernel.m {
        bail!("weights: need {} entries, one per input slot", c.kernel.m);
    }
    for (i, t) in c.tuples.iter().enumerate() {
        if t.len() != c.kernel.m {
            bail!("tuples[{i}] must have {} recipes", c.kernel.m);
        }
        for (j, r) in t.iter().enumerate() {
            r.validate(c.kernel.n)
                .with_context(|| format!("tuples[{i}][{j}]"))?;
        }
    }
    let stride = c.stride;
    if stride == Some(0) {
        bail!("`stride` must be positive");
    }
    let tuples = c.tuples.clone();
    Ok(Box::new(move || {
        let report = empirical_ratio(
            |fs: &[SampledFunction]| {
                let grid = *fs[0].grid();
                let points = match stride {
                    Some(s) => EvalPoints::decimated(&grid, s),
                    None => EvalPoints::default_for(&grid),
                };
                op.apply(fs, &points)
            },
            &wv,
            &tuples,
            &grids,
        )?;
        let mut ratios = Table::new(["grid_points", "tuple", "ratio"]);
        let mut summary = Table::new(["grid_points", "max", "median", "stability"]);
        let mut lines = Vec::new();
        for g in &report.per_grid {
            let ppa = g.grid.points_per_axis.to_string();
            for (i, r) in g.ratios.iter().enumerate() {
                ratios.push(vec![ppa.clone(), i.to_string(), f(*r)]);
            }
            summary.push(vec![
                ppa.clone(),
                f(g.max),
                f(g.median),
                f(report.stability),
            ]);
            lines.push(format!(
                "{ppa} points/axis: max ratio {:.6e}, median {:.6e}",
                g.max, g.median
            ));
        }
        lines.push(format!("stability {:.4e}", report.stability));
        Ok(Produced {
            files: vec![
                ("ratios.csv".into(), ratios.bytes()?),
                ("summary.csv".into(), summary.bytes()?),
            ],
            lines,
            pass: true,
        })
    }))
}

pub fn commutator_run(c: &cfg::CommutatorRun) -> Result<Job> {
    let cm = c.commutator()?;
    let trunc = cfg::truncation(c.delta, c.cutoff);
    check_trunc(trunc.as_ref(), &cm.grid)?;
    let mut op = Operator::new(c.operator, &cm.kernel, trunc, c.scales, c.star)?;
    op.commutator = Some((cm.symbols, cm.set));
    let points = c.points.build(&cm.grid)?;
    Ok(operator_job(op, cm.inputs, points, cm.grid.n))
}

pub fn commutator_convergence(c: &cfg::CommutatorConvergence) -> Result<Job> {
    let cm = c.commutator()?;
    cfg::nonempty(&c.deltas, "deltas")?;
    TruncationPolicy::new(c.reference_delta, c.cutoff)
        .check(&cm.grid)
        .context("reference_delta")?;
    if c.deltas.iter().any(|&d| d < c.reference_delta) {
        bail!("every entry of `deltas` must be at least `reference_delta`");
    }
    let wv = c.weights.build()?;
    if wv.m() != cm.kernel.m {
        bail!("weights: need {} entries, one per input slot", cm.kernel.m);
    }
    let points = c.points.build(&cm.grid)?;
    let (cutoff, deltas, reference) = (c.cutoff, c.deltas.clone(), c.reference_delta);
    Ok(Box::new(move || {
        let st = truncation_convergence_study(
            &cm.kernel,
            &cm.symbols,
            &cm.set,
            &cm.inputs,
            cutoff,
            &deltas,
            reference,
            &wv,
            &points,
        )?;
        let mut rows = Table::new(["delta", "norm", "max_ratio"]);
        for r in &st.rows {
            rows.push(vec![f(r.delta), f(r.norm), f(r.max_ratio)]);
        }
        let mut summary = Table::new(["reference_delta", "slope", "ratio_spread"]);
        summary.push(vec![
            f(st.reference_delta),
            opt(st.slope),
            f(st.ratio_spread),
        ]);
        Ok(Produced {
            files: vec![
                ("convergence.csv".into(), rows.bytes()?),
                ("summary.csv".into(), summary.bytes()?),
            ],
            lines: vec![format!(
                "slope {}, ratio spread {:.4}",
                st.slope.map_or("n/a".into(), |s| format!("{s:.4}")),
                st.ratio_spread
            )],
            pass: true,
        })
    }))
}

pub fn commutator_near_far(c: &cfg::CommutatorNearFar) -> Result<Job> {
    let grid = c.grid.build()?;
    let fs = cfg::sample_all(&c.inputs, grid, "inputs")?;
    cfg::nonempty(&c.deltas, "deltas")?;
    if c.deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        bail!("`deltas` must be positive");
    }
    let points = c.points.build(&grid)?;
    let deltas = c.deltas.clone();
    Ok(Box::new(move || {
        let st = near_far_bounds_study(&fs, &deltas, &points)?;
        let mut rows = Table::new(["delta", "near_sup", "far_sup"]);
        for r in &st.rows {
            rows.push(vec![f(r.delta), f(r.near_sup), f(r.far_sup)]);
        }
        let mut per_point = Table::new(
            ["delta".to_string(), "point".to_string()]
                .into_iter()
                .chain(["near".into(), "far".into()]),
        );
        for r in &st.rows {
            for (i, (a, b)) in r.near.iter().zip(&r.far).enumerate() {
                per_point.push(vec![f(r.delta), i.to_string(), f(*a), f(*b)]);
            }
        }
        let mut summary = Table::new(["near_spread", "far_spread"]);
        summary.push(vec![f(st.near_spread), f(st.far_spread)]);
        Ok(Produced {
            files: vec![
                ("near_far.csv".into(), rows.bytes()?),
                ("near_far_points.csv".into(), per_point.bytes()?),
                ("summary.csv".into(), summary.bytes()?),
            ],
            lines: vec![format!(
                "near spread {:.4}, far spread {:.4}",
                st.near_spread, st.far_spread
            )],
            pass: true,
        })
    }))
}

pub fn commutator_decay(c: &cfg::CommutatorDecay) -> Result<Job> {
    let cm = c.commutator()?;
    let trunc = TruncationPolicy::new(c.delta, c.cutoff);
    trunc.check(&cm.grid).context("delta")?;
    cfg::nonempty(&c.radii, "radii")?;
    let radii = c.radii.clone();
    Ok(Box::new(move || {
        let st = decay_study(&cm.kernel, &cm.symbols, &cm.set, &cm.inputs, &trunc, &radii)?;
        let mut rows = Table::new(["radius", "at", "sup"]);
        for r in &st.rows {
            rows.push(vec![f(r.radius), f(r.at), f(r.sup)]);
        }
        let mut summary = Table::new(["slope"]);
        summary.push(vec![opt(st.slope)]);
        Ok(Produced {
            files: vec![
                ("decay.csv".into(), rows.bytes()?),
                ("summary.csv".into(), summary.bytes()?),
            ],
            lines: vec![format!(
                "decay slope {}",
                st.slope.map_or("n/a".into(), |s| format!("{s:.4}"))
            )],
            pass: true,
        })
    }))
}

pub fn translation_modulus(c: &cfg::TranslationModulus) -> Result<Job> {
    let cm = c.commutator()?;
    let trunc = TruncationPolicy::new(c.delta, c.cutoff);
    trunc.check(&cm.grid).context("delta")?;
    cfg::nonempty(&c.shifts, "shifts")?;
    if c.shifts.iter().any(|u| u.len() != cm.grid.n) {
        bail!("shifts must have {} coordinates", cm.grid.n);
    }
    let wv = c.weights.build()?;
    if wv.m() != cm.kernel.m {
        bail!("weights: need {} entries, one per input slot", cm.kernel.m);
    }
    let points = c.points.build(&cm.grid)?;
    let shifts = c.shifts.clone();
    Ok(Box::new(move || {
        let st = translation_modulus_study(
            &cm.kernel,
            &cm.symbols,
            &cm.set,
            &cm.inputs,
            &trunc,
            &shifts,
            &wv,
            &points,
        )?;
        let n = cm.grid.n;
        let header = axis_header("shift", n).into_iter().chain(
            [
                "length",
                "norm",
                "part_one",
                "part_two",
                "part_one_ratio",
                "part_two_ratio",
            ]
            .map(String::from),
        );
        let mut rows = Table::new(header);
        for r in &st.rows {
            rows.push(with_coords(
                &r.shift,
                [
                    f(r.length),
                    f(r.norm),
                    f(r.part_one),
                    f(r.part_two),
                    f(r.part_one_ratio),
                    f(r.part_two_ratio),
                ],
            ));
        }
        let mut summary = Table::new(["slope"]);
        summary.push(vec![opt(st.slope)]);
        Ok(Produced {
            files: vec![
                ("modulus.csv".into(), rows.bytes()?),
                ("summary.csv".into(), summary.bytes()?),
            ],
            lines: vec![format!(
                "modulus slope {}",
                st.slope.map_or("n/a".into(), |s| format!("{s:.4}"))
            )],
            pass: true,
        })
    }))
}

pub fn fk_check(c: &cfg::FkCheck) -> Result<Job> {
    let grid = c.grid.build()?;
    let family = cfg::family(&c.family, grid)?;
    c.weight.validate().context("weight")?;
    cfg::nonempty(&c.tail_radii, "tail_radii")?;
    let shifts = c.all_shifts(&grid)?;
    let (p, w, radii, tol) = (c.p, c.weight, c.tail_radii.clone(), c.tolerance);
    Ok(Box::new(move || {
        let report = fk_report(&family, p, &w, &radii, &shifts)?;
        let verdict = fk_verdict(&report, &tol);
        let mut curves = Table::new(["curve", "parameter", "value"]);
        curves.push(vec![
            "uniform_bound".into(),
            f(0.0),
            f(report.uniform_bound),
        ]);
        for (a, v) in &report.tail_curve {
            curves.push(vec!["tail".into(), f(*a), f(*v)]);
        }
        for s in &report.modulus_curve {
            curves.push(vec!["modulus".into(), f(s.length), f(s.value)]);
        }
        let n = grid.n;
        let mut modulus = Table::new(
            axis_header("shift", n)
                .into_iter()
                .chain(["length".into(), "value".into()]),
        );
        for s in &report.modulus_curve {
            modulus.push(with_coords(&s.shift, [f(s.length), f(s.value)]));
        }
        let line = format!("verdict: {verdict}");
        let mut text = String::new();
        writeln!(text, "{line}")?;
        writeln!(text, "members = {}", report.members)?;
        writeln!(text, "p = {}", f(report.p))?;
        writeln!(text, "uniform_bound = {}", f(report.uniform_bound))?;
        writeln!(text, "dual_weight_finite = {}", report.dual_weight_finite)?;
        writeln!(text, "weight_infimum = {}", f(report.weight_infimum))?;
        Ok(Produced {
            files: vec![
                ("curves.csv".into(), curves.bytes()?),
                ("modulus.csv".into(), modulus.bytes()?),
                ("verdict.txt".into(), text.into_bytes()),
            ],
            lines: vec![line],
            pass: verdict == Verdict::Pass,
        })
    }))
}

pub fn net_build(c: &cfg::NetBuild) -> Result<Job> {
    let grid = c.grid.build()?;
    let family = cfg::family(&c.family, grid)?;
    c.weight.validate().context("weight")?;
    if let Some(e) = c.epsilon {
        if !(e > 0.0 && e.is_finite()) {
            bail!("`epsilon` must be positive");
        }
    }
    let h = grid.spacing();
    let t = c.mollification_radius;
    if t < h * (1.0 - 1e-12) {
        bail!("`mollification_radius` {t} is below the grid spacing {h}");
    }
    if !(c.tail_radius > 0.0 && c.tail_radius <= grid.half_width) {
        bail!("`tail_radius` must lie in (0, {}]", grid.half_width);
    }
    let (p, w, eps, a) = (c.p, c.weight, c.epsilon, c.tail_radius);
    Ok(Box::new(move || {
        let eps = match eps {
            Some(e) => e,
            None => {
                let steps: Vec<i64> = (1..=((t / h) * (1.0 + 1e-12)).floor() as i64).collect();
                let report = fk_report(&family, p, &w, &[a], &axis_shifts(&grid, &steps))?;
                epsilon_from_report(&report, t, a)
                    .context("family has zero modulus and tail; no epsilon to derive")?
            }
        };
        let cert = build_net(&family, p, &w, eps, t, a)?;
        let deviation = cert.verify(&family)?;
        let mut text = String::new();
        writeln!(text, "p = {}", f(cert.p))?;
        writeln!(
            text,
            "weight = alpha {} eps {} scale {}",
            f(cert.weight.alpha),
            f(cert.weight.eps),
            f(cert.weight.scale)
        )?;
        writeln!(text, "epsilon = {}", f(cert.epsilon))?;
        writeln!(
            text,
            "mollification_radius = {}",
            f(cert.mollification_radius)
        )?;
        writeln!(text, "tail_radius = {}", f(cert.tail_radius))?;
        if let Some(p0) = cert.p0 {
            writeln!(text, "p0 = {}", f(p0))?;
        }
        writeln!(text, "tolerance = {}", f(cert.tolerance))?;
        writeln!(
            text,
            "mollification_error = {}",
            f(cert.mollification_error)
        )?;
        writeln!(text, "tail = {}", f(cert.tail))?;
        let sel: Vec<String> = cert.selected.iter().map(|i| i.to_string()).collect();
        writeln!(text, "selected = {}", sel.join(" "))?;
        writeln!(text, "certified_radius = {}", f(cert.certified_radius))?;
        writeln!(text, "target = {}", f(cert.target))?;
        writeln!(text, "recheck_deviation = {}", f(deviation))?;
        writeln!(text, "holds = {}", cert.holds())?;
        for warn in &cert.warnings {
            writeln!(text, "warning = {warn}")?;
        }
        let mut dist = Table::new(["member", "nearest", "distance", "selected"]);
        for (i, (j, d)) in cert.nearest.iter().zip(&cert.distances).enumerate() {
            dist.push(vec![
                i.to_string(),
                j.to_string(),
                f(*d),
                cert.selected.contains(&i).to_string(),
            ]);
        }
        Ok(Produced {
            files: vec![
                ("certificate.txt".into(), text.into_bytes()),
                ("distances.csv".into(), dist.bytes()?),
            ],
            lines: vec![format!(
                "net of {} / {} members, radius {:.6e} vs target {:.6e} -> {}",
                cert.selected.len(),
                family.len(),
                cert.certified_radius,
                cert.target,
                if cert.holds() { "holds" } else { "fails" }
            )],
            pass: cert.holds(),
        })
    }))
}

pub fn acceptance_run(c: &cfg::Acceptance, seed: u64) -> Result<Job> {
    let ids: Vec<u8> = if c.criteria.is_empty() {
        (1..=acceptance::CRITERIA).collect()
    } else {
        c.criteria.clone()
    };
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > acceptance::CRITERIA) {
        bail!("no acceptance criterion {bad}");
    }
    Ok(Box::new(move || {
        let mut table = Table::new(["criterion", "name", "pass", "summary"]);
        let mut files = Vec::new();
        let mut lines = Vec::new();
        let mut pass = true;
        for id in ids {
            let o = acceptance::run(id, seed);
            lines.push(o.line());
            pass &= o.pass;
            table.push(vec![
                o.id.to_string(),
                o.name.to_string(),
                o.pass.to_string(),
                o.summary.clone(),
            ]);
            files.push((format!("criterion_{:02}.txt", o.id), o.output.into_bytes()));
        }
        files.insert(0, ("acceptance.csv".into(), table.bytes()?));
        Ok(Produced { files, lines, pass })
    }))
}
