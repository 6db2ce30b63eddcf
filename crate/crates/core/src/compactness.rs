//! Fréchet–Kolmogorov diagnostics in weighted L^p: the three curves of the
//! criterion, a finite-resolution verdict, the exponent trick for p < 1 and
//! a constructive ε-net with a self-verifying certificate.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{
    ball_average, tail_mass, translate, weighted_lp_power, FamilyOfFunctions, Grid, SampledFunction,
};
use crate::numerics::euclid;
use crate::rng::Stream;
use crate::weights::{ball_mass, grid_infimum, Weight, WeightSpec};

/// Exponent used to route p < 1 through the exponent trick.
pub const DEFAULT_P0: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftPoint {
    pub shift: Vec<f64>,
    pub length: f64,
    /// sup over members of Σ |f(x + u) - f(x)|^p w(x) h^n.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FKReport {
    pub p: f64,
    pub weight: WeightSpec,
    pub members: usize,
    /// sup over members of ‖f‖_{L^p(w)}.
    pub uniform_bound: f64,
    /// (A, sup over members of the tail mass beyond A), in the given order.
    pub tail_curve: Vec<(f64, f64)>,
    /// Sorted by decreasing |u|.
    pub modulus_curve: Vec<ShiftPoint>,
    /// w^{-1/(p0-1)} finite and summable on the box (p0 = p for p > 1,
    /// otherwise the exponent-trick p0).
    pub dual_weight_finite: bool,
    /// min of w over the cell centers; relevant for p = 1.
    pub weight_infimum: f64,
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "p must be in (0, inf), got {p}"
        )))
    }
}

/// Computes the uniform bound, tail curve and modulus curve of a family.
pub fn fk_report(
    family: &FamilyOfFunctions,
    p: f64,
    w: &WeightSpec,
    tail_radii: &[f64],
    shifts: &[Vec<f64>],
) -> Result<FKReport> {
    check_p(p)?;
    w.validate()?;
    if tail_radii.windows(2).any(|r| r[1] <= r[0]) {
        return Err(Error::InvalidArgument("tail radii must increase".into()));
    }
    let grid = *family.grid();
    for u in shifts {
        grid.shift_in_cells(u)?;
    }
    let members = family.members();
    let per_member: Vec<(f64, Vec<f64>, Vec<f64>)> = members
        .par_iter()
        .map(|f| {
            let norm = weighted_lp_power(f, p, w)?;
            let tails = tail_radii
                .iter()
                .map(|&r| tail_mass(f, p, w, r))
                .collect::<Result<Vec<_>>>()?;
            let moduli = shifts
                .iter()
                .map(|u| modulus(f, u, p, w))
                .collect::<Result<Vec<_>>>()?;
            Ok((norm, tails, moduli))
        })
        .collect::<Result<_>>()?;
    let uniform_bound = per_member
        .iter()
        .map(|m| m.0)
        .fold(0.0, f64::max)
        .powf(1.0 / p);
    let tail_curve = tail_radii
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, per_member.iter().map(|m| m.1[i]).fold(0.0, f64::max)))
        .collect();
    let mut modulus_curve: Vec<ShiftPoint> = shifts
        .iter()
        .enumerate()
        .map(|(i, u)| ShiftPoint {
            shift: u.clone(),
            length: euclid(u),
            value: per_member.iter().map(|m| m.2[i]).fold(0.0, f64::max),
        })
        .collect();
    modulus_curve.sort_by(|a, b| b.length.total_cmp(&a.length));
    let p0 = if p > 1.0 { p } else { DEFAULT_P0 };
    let dual = w.pow(-1.0 / (p0 - 1.0));
    let dual_mass = ball_mass(&dual, &grid, f64::INFINITY);
    Ok(FKReport {
        p,
        weight: *w,
        members: members.len(),
        uniform_bound,
        tail_curve,
        modulus_curve,
        dual_weight_finite: dual_mass.is_finite(),
        weight_infimum: grid_infimum(w, &grid),
    })
}

/// Σ |f(x + u) - f(x)|^p w(x) h^n.
pub fn modulus<W: Weight + ?Sized>(f: &SampledFunction, u: &[f64], p: f64, w: &W) -> Result<f64> {
    let moved = translate(f, u)?;
    weighted_lp_power(&moved.zip_with(f, |a, b| a - b)?, p, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkTolerance {
    /// Final tail value relative to uniform_bound^p.
    pub tail: f64,
    /// Modulus at the smallest nonzero shift relative to uniform_bound^p.
    pub modulus: f64,
    /// Allowed relative increase of the modulus curve as |u| decreases.
    #[serde(default = "default_slack")]
    pub monotone_slack: f64,
}

fn default_slack() -> f64 {
    0.05
}

impl Default for FkTolerance {
    fn default() -> Self {
        Self {
            tail: 0.01,
            modulus: 0.1,
            monotone_slack: default_slack(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    /// Tails do not decay: condition (ii).
    FailTail,
    /// Translations are not uniformly continuous: condition (iii).
    FailModulus,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::FailTail => "fail(ii)",
            Verdict::FailModulus => "fail(iii)",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

fn relative(v: f64, scale: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v / scale
    }
}

/// Finite-resolution reading of a report. Violations are checked first
/// (tail, then modulus); a modulus curve that grows toward u = 0 beyond the
/// slack is reported as inconclusive.
pub fn fk_verdict(report: &FKReport, tol: &FkTolerance) -> Verdict {
    if !report.uniform_bound.is_finite() {
        return Verdict::Inconclusive;
    }
    let scale = report.uniform_bound.powf(report.p);
    if let Some(&(_, tail)) = report.tail_curve.last() {
        if relative(tail, scale) > tol.tail {
            return Verdict::FailTail;
        }
    }
    // sup per distinct |u|, in decreasing |u|
    let mut moving: Vec<f64> = Vec::new();
    let mut last_length = f64::NAN;
    for s in report.modulus_curve.iter().filter(|s| s.length > 0.0) {
        if s.length == last_length {
            let top = moving
                .last_mut()
                .expect("same length implies a previous entry");
            *top = top.max(s.value);
        } else {
            moving.push(s.value);
            last_length = s.length;
        }
    }
    if let Some(&last) = moving.last() {
        if relative(last, scale) > tol.modulus {
            return Verdict::FailModulus;
        }
    }
    let rising = moving
        .windows(2)
        .any(|v| v[1] > v[0] * (1.0 + tol.monotone_slack) && relative(v[1], scale) > 1e-14);
    if rising {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    }
}

fn check_nonnegative(f: &SampledFunction) -> Result<()> {
    match f.values().iter().position(|&v| v < 0.0) {
        Some(index) => Err(Error::NegativeValues {
            index,
            value: f.values()[index],
        }),
        None => Ok(()),
    }
}

/// F^a = {f^a} with a = p/p0, for nonnegative members.
pub fn exponent_trick(family: &FamilyOfFunctions, p: f64, p0: f64) -> Result<FamilyOfFunctions> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p must be in (0, 1), got {p}"
        )));
    }
    if !(p0 > 1.0 && p0.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "p0 must exceed 1, got {p0}"
        )));
    }
    let a = p / p0;
    let members = family
        .members()
        .iter()
        .map(|f| {
            check_nonnegative(f)?;
            f.map(|v| v.powf(a))
        })
        .collect::<Result<Vec<_>>>()?;
    FamilyOfFunctions::new(members)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub checks: usize,
    pub cell_violations: usize,
    pub integral_violations: usize,
    /// max over cells of |f(x+u)^a - f(x)^a|^{p0} / |f(x+u) - f(x)|^p.
    pub worst_cell_ratio: f64,
}

/// Checks |f(x+u)^a - f(x)^a|^{p0} ≤ |f(x+u) - f(x)|^p at every cell and the
/// weighted integrals, for every member and shift.
pub fn exponent_domination(
    family: &FamilyOfFunctions,
    p: f64,
    p0: f64,
    w: &WeightSpec,
    shifts: &[Vec<f64>],
) -> Result<DominationReport> {
    let powered = exponent_trick(family, p, p0)?;
    let rows: Vec<(usize, usize, usize, f64)> = family
        .members()
        .par_iter()
        .zip(powered.members())
        .map(|(f, fa)| {
            let mut out = (0, 0, 0, 0.0f64);
            for u in shifts {
                let g = translate(f, u)?;
                let ga = translate(fa, u)?;
                for k in 0..f.values().len() {
                    let lhs = (ga.values()[k] - fa.values()[k]).abs().powf(p0);
                    let rhs = (g.values()[k] - f.values()[k]).abs().powf(p);
                    out.0 += 1;
                    if lhs > rhs * (1.0 + 1e-12) {
                        out.1 += 1;
                    }
                    if rhs > 0.0 {
                        out.3 = out.3.max(lhs / rhs);
                    }
                }
                let lhs = modulus(fa, u, p0, w)?;
                let rhs = modulus(f, u, p, w)?;
                if lhs > rhs * (1.0 + 1e-12) {
                    out.2 += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(DominationReport {
        checks: rows.iter().map(|r| r.0).sum(),
        cell_violations: rows.iter().map(|r| r.1).sum(),
        integral_violations: rows.iter().map(|r| r.2).sum(),
        worst_cell_ratio: rows.iter().map(|r| r.3).fold(0.0, f64::max),
    })
}

/// |s^a - t^a| without cancellation for nearby s, t.
pub fn power_gap(s: f64, t: f64, a: f64) -> f64 {
    let (hi, lo) = if s >= t { (s, t) } else { (t, s) };
    if hi == 0.0 {
        return 0.0;
    }
    -hi.powf(a) * (a * ((lo - hi) / hi).ln_1p()).exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub trials: usize,
    /// |s^a - t^a| ≤ |s - t|^a
    pub violations_first: usize,
    /// |s - t|^a ≤ (1/a)((s + t)/|s - t|)^{1-a} |s^a - t^a|
    pub violations_second: usize,
    /// Largest lhs/rhs seen for each inequality.
    pub worst_first: f64,
    pub worst_second: f64,
}

/// Random (s, t, a) with s, t log-uniform over twelve decades and a tenth
/// of the pairs within 1e-6 relative of each other.
pub fn inequality_selftest(trials: usize, seed: u64) -> Result<InequalityReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let mut rng = Stream::new(seed);
    let mut report = InequalityReport {
        trials,
        violations_first: 0,
        violations_second: 0,
        worst_first: 0.0,
        worst_second: 0.0,
    };
    for k in 0..trials {
        let s = rng.log_range(1e-6, 1e6);
        let t = if k % 10 == 0 {
            s * (1.0 + rng.range(-1e-6, 1e-6))
        } else {
            rng.log_range(1e-6, 1e6)
        };
        let a = rng.open_unit();
        let gap = power_gap(s, t, a);
        let diff = (s - t).abs();
        if diff == 0.0 {
            continue;
        }
        let first_rhs = diff.powf(a);
        let second_rhs = ((s + t) / diff).powf(1.0 - a) * gap / a;
        let r1 = gap / first_rhs;
        let r2 = first_rhs / second_rhs;
        if r1 > 1.0 + 1e-12 {
            report.violations_first += 1;
        }
        if r2 > 1.0 + 1e-12 {
            report.violations_second += 1;
        }
        report.worst_first = report.worst_first.max(r1);
        report.worst_second = report.worst_second.max(r2);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchySplitReport {
    pub cells_inside: usize,
    /// ∫_{E_ε} |f - g|^p w and a^{-p0} ε^{(a-1)p0} ∫_{E_ε} |f^a - g^a|^{p0} w.
    pub inside_lhs: f64,
    pub inside_rhs: f64,
    /// ∫_{E_ε^c} |f - g|^p w and c_p ε^p (∫f^p w + ∫g^p w), c_p = max(1, 2^{p-1}).
    pub outside_lhs: f64,
    pub outside_rhs: f64,
    pub holds: bool,
}

/// Splits the cells into E_ε = {ε(f + g) ≤ |f - g|} and its complement and
/// checks both bounds by direct summation.
pub fn cauchy_split_check<W: Weight + ?Sized>(
    f: &SampledFunction,
    g: &SampledFunction,
    p: f64,
    p0: f64,
    w: &W,
    eps: f64,
) -> Result<CauchySplitReport> {
    check_p(p)?;
    if !(p0 > p) {
        return Err(Error::InvalidArgument("p0 must exceed p".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    check_nonnegative(f)?;
    check_nonnegative(g)?;
    let grid = *f.grid();
    let a = p / p0;
    let mut x = vec![0.0; grid.n];
    let (mut in_l, mut in_r, mut out_l, mut mass) = (0.0, 0.0, 0.0, 0.0);
    let mut cells_inside = 0;
    for (k, (&fv, &gv)) in f.values().iter().zip(g.values()).enumerate() {
        grid.center_into(k, &mut x);
        let wx = w.eval(&x);
        let diff = (fv - gv).abs();
        mass += (fv.powf(p) + gv.powf(p)) * wx;
        if diff > 0.0 && eps * (fv + gv) <= diff {
            cells_inside += 1;
            in_l += diff.powf(p) * wx;
            in_r += power_gap(fv, gv, a).powf(p0) * wx;
        } else {
            out_l += diff.powf(p) * wx;
        }
    }
    let v = grid.cell_volume();
    let inside_lhs = in_l * v;
    let inside_rhs = a.powf(-p0) * eps.powf((a - 1.0) * p0) * in_r * v;
    let outside_lhs = out_l * v;
    let outside_rhs = 1f64.max(2f64.powf(p - 1.0)) * eps.powf(p) * mass * v;
    let slack = 1.0 + 1e-12;
    Ok(CauchySplitReport {
        cells_inside,
        inside_lhs,
        inside_rhs,
        outside_lhs,
        outside_rhs,
        holds: inside_lhs <= inside_rhs * slack && outside_lhs <= outside_rhs * slack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetCertificate {
    pub p: f64,
    pub weight: WeightSpec,
    pub epsilon: f64,
    pub mollification_radius: f64,
    pub tail_radius: f64,
    /// Exponent of the exponent-trick route, when p < 1.
    pub p0: Option<f64>,
    /// Sup-metric tolerance used to select the net on |x| ≤ A.
    pub tolerance: f64,
    pub mollification_error: f64,
    pub tail: f64,
    /// Member indices, in selection order.
    pub selected: Vec<usize>,
    /// Per member: the nearest selected member and the distance to it, in
    /// the norm (p ≥ 1) or the p-th power metric (p < 1).
    pub nearest: Vec<usize>,
    pub distances: Vec<f64>,
    /// max of `distances`.
    pub certified_radius: f64,
    /// 5ε for p ≥ 1, (a^{-p0} 5^{p0} + 2K^p) ε^p for p < 1.
    pub target: f64,
    pub warnings: Vec<String>,
}

impl NetCertificate {
    pub fn holds(&self) -> bool {
        self.certified_radius <= self.target * (1.0 + 1e-12)
    }

    /// Re-measures every recorded distance; returns the largest relative
    /// deviation from the certificate.
    pub fn verify(&self, family: &FamilyOfFunctions) -> Result<f64> {
        if self.distances.len() != family.len() {
            return Err(Error::InvalidArgument(
                "certificate is for another family".into(),
            ));
        }
        let members = family.members();
        let mut worst: f64 = 0.0;
        for (i, f) in members.iter().enumerate() {
            let j = self.nearest[i];
            if !self.selected.contains(&j) {
                return Err(Error::InvalidArgument(format!(
                    "member {j} is not in the net"
                )));
            }
            let d = distance(f, &members[j], self.p, &self.weight)?;
            let r = self.distances[i];
            worst = worst.max(if r == 0.0 { d } else { (d - r).abs() / r });
        }
        Ok(worst)
    }
}

/// ‖f - g‖_{L^p(w)} for p ≥ 1, ∫|f - g|^p w for p < 1.
pub fn distance(f: &SampledFunction, g: &SampledFunction, p: f64, w: &WeightSpec) -> Result<f64> {
    let power = weighted_lp_power(&f.zip_with(g, |a, b| a - b)?, p, w)?;
    Ok(if p >= 1.0 { power.powf(1.0 / p) } else { power })
}

/// f_{B(x,t)} at every cell.
fn ball_field(f: &SampledFunction, t: f64) -> Result<Vec<f64>> {
    let grid = f.grid();
    (0..grid.len())
        .map(|k| ball_average(f, &grid.center(k), t))
        .collect()
}

/// Twice the larger of the worst modulus at |u| ≤ t and the tail at the
/// largest radius not exceeding A, both as norms; a choice of ε for which
/// the mollification and tail checks of [`build_net`] are expected to pass.
pub fn epsilon_from_report(report: &FKReport, t: f64, tail_radius: f64) -> Option<f64> {
    let modulus = report
        .modulus_curve
        .iter()
        .filter(|s| s.length <= t * (1.0 + 1e-12))
        .map(|s| s.value)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })?;
    let tail = report
        .tail_curve
        .iter()
        .filter(|c| c.0 <= tail_radius)
        .map(|c| c.1)
        .next_back()?;
    let eps = 2.0 * modulus.max(tail).powf(1.0 / report.p);
    (eps > 0.0).then_some(eps)
}

/// Greedy farthest-point ε-net. Ball averages at radius t are compared in
/// the sup metric on |x| ≤ A with tolerance ε / max(w(B(0,A)), w(B(0,A))^{1/p}),
/// and the certificate records the directly measured distance from every
/// member to its nearest net member. For p < 1 the selection runs on F^a in
/// L^{p0}(w), a = p/p0, and distances are certified in the p-th power metric.
pub fn build_net(
    family: &FamilyOfFunctions,
    p: f64,
    w: &WeightSpec,
    eps: f64,
    t: f64,
    tail_radius: f64,
) -> Result<NetCertificate> {
    check_p(p)?;
    w.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let grid = *family.grid();
    if t < grid.spacing() * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "mollification radius {t} is below the grid spacing {}",
            grid.spacing()
        )));
    }
    if !(tail_radius > 0.0 && tail_radius <= grid.half_width) {
        return Err(Error::RadiusOutsideBox {
            radius: tail_radius,
            half_width: grid.half_width,
        });
    }
    let (working, q, p0) = if p < 1.0 {
        (
            exponent_trick(family, p, DEFAULT_P0)?,
            DEFAULT_P0,
            Some(DEFAULT_P0),
        )
    } else {
        (family.clone(), p, None)
    };
    let members = working.members();
    let fields: Vec<Vec<f64>> = members
        .par_iter()
        .map(|f| ball_field(f, t))
        .collect::<Result<_>>()?;

    let mut mollification_error: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for (f, field) in members.iter().zip(&fields) {
        let smooth = SampledFunction::from_values(grid, field.clone())?;
        let gap = weighted_lp_power(&f.zip_with(&smooth, |a, b| a - b)?, q, w)?;
        mollification_error = mollification_error.max(gap.powf(1.0 / q));
        tail = tail.max(tail_mass(f, q, w, tail_radius)?.powf(1.0 / q));
    }
    if mollification_error >= eps {
        return Err(Error::MollificationTooCoarse {
            error: mollification_error,
            epsilon: eps,
        });
    }
    if tail >= eps {
        return Err(Error::TailTooHeavy {
            tail,
            radius: tail_radius,
            epsilon: eps,
        });
    }

    let mut warnings = Vec::new();
    if p == 1.0 && grid_infimum(w, &grid) <= 0.0 {
        warnings.push("weight vanishes somewhere on the box (p = 1)".to_string());
    }
    let mass = ball_mass(w, &grid, tail_radius);
    let tolerance = eps / mass.max(mass.powf(1.0 / q));

    let inner: Vec<usize> = (0..grid.len())
        .filter(|&k| euclid(&grid.center(k)) <= tail_radius)
        .collect();
    let sup_gap = |i: usize, j: usize| {
        inner
            .iter()
            .map(|&k| (fields[i][k] - fields[j][k]).abs())
            .fold(0.0, f64::max)
    };
    let mut selected = vec![0usize];
    let mut gap: Vec<f64> = (0..members.len()).map(|i| sup_gap(i, 0)).collect();
    loop {
        // farthest member; the lowest index wins ties
        let (far, &worst) = gap
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| {
                if *cur.1 > *best.1 {
                    cur
                } else {
                    best
                }
            });
        if worst < tolerance {
            break;
        }
        selected.push(far);
        for (i, g) in gap.iter_mut().enumerate() {
            *g = g.min(sup_gap(i, far));
        }
    }

    let originals = family.members();
    let measured: Vec<(usize, f64)> = originals
        .par_iter()
        .map(|f| {
            let mut best = (selected[0], f64::INFINITY);
            for &j in &selected {
                let d = distance(f, &originals[j], p, w)?;
                if d < best.1 {
                    best = (j, d);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let target = match p0 {
        None => 5.0 * eps,
        Some(p0) => {
            let a = p / p0;
            let k_p = originals
                .iter()
                .map(|f| weighted_lp_power(f, p, w))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            (a.powf(-p0) * 5f64.powf(p0) + 2.0 * k_p) * eps.powf(p)
        }
    };
    let distances: Vec<f64> = measured.iter().map(|m| m.1).collect();
    Ok(NetCertificate {
        p,
        weight: *w,
        epsilon: eps,
        mollification_radius: t,
        tail_radius,
        p0,
        tolerance,
        mollification_error,
        tail,
        selected,
        nearest: measured.iter().map(|m| m.0).collect(),
        certified_radius: distances.iter().cloned().fold(0.0, f64::max),
        distances,
        target,
        warnings,
    })
}

/// Grid-aligned shifts ±k h along the first axis.
pub fn axis_shifts(grid: &Grid, steps: &[i64]) -> Vec<Vec<f64>> {
    let h = grid.spacing();
    let mut out = Vec::new();
    for &s in steps {
        for sign in [1, -1] {
            let mut u = vec![0.0; grid.n];
            u[0] = (sign * s) as f64 * h;
            if s != 0 || sign == 1 {
                out.push(u);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{sample, sample_recipe, Recipe};
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(1, 4.0, 64).unwrap()
    }

    fn family(fs: Vec<SampledFunction>) -> FamilyOfFunctions {
        FamilyOfFunctions::new(fs).unwrap()
    }

    fn bump(g: Grid, c: f64) -> SampledFunction {
        sample_recipe(&Recipe::bump(vec![c], 1.0, 1.0), g).unwrap()
    }

    #[test]
    fn zero_family_report() {
        let g = grid();
        let fam = family(vec![SampledFunction::zeros(g)]);
        let shifts = axis_shifts(&g, &[0, 1, 2]);
        let r = fk_report(&fam, 2.0, &WeightSpec::unit(), &[1.0, 2.0], &shifts).unwrap();
        assert_eq!(r.uniform_bound, 0.0);
        assert!(r.tail_curve.iter().all(|c| c.1 == 0.0));
        assert!(r.modulus_curve.iter().all(|c| c.value == 0.0));
        assert_eq!(fk_verdict(&r, &FkTolerance::default()), Verdict::Pass);
    }

    #[test]
    fn bump_modulus_against_gradient_bound() {
        let g = grid();
        let f = bump(g, 0.0);
        let grad = crate::numerics::unit_bump_max_slope();
        let support = 2.0 + 2.0 * g.spacing() * 8.0;
        let fam = family(vec![f]);
        let shifts = axis_shifts(&g, &[0, 1, 2, 4, 8]);
        let r = fk_report(&fam, 2.0, &WeightSpec::unit(), &[0.5, 1.0, 2.0], &shifts).unwrap();
        let zero = r.modulus_curve.iter().find(|s| s.length == 0.0).unwrap();
        assert_eq!(zero.value, 0.0);
        for s in &r.modulus_curve {
            assert!(s.value <= (grad * s.length).powi(2) * support);
        }
        // decreasing to 0 with |u|
        let pos: Vec<f64> = r
            .modulus_curve
            .iter()
            .filter(|s| s.shift[0] > 0.0)
            .map(|s| s.value)
            .collect();
        assert!(pos.windows(2).all(|v| v[1] < v[0]));
        assert_eq!(r.tail_curve[2].1, 0.0);
        assert!(r.tail_curve.windows(2).all(|c| c[1].1 <= c[0].1));
    }

    #[test]
    fn translates_share_modulus() {
        let g = grid();
        // centers -2, -1.5, -1, -0.5
        let fs: Vec<SampledFunction> = (0..4)
            .map(|k| crate::funcspace::translate_cells(&bump(g, -2.0), &[-4 * k]))
            .collect();
        let shifts = axis_shifts(&g, &[1, 3]);
        for u in &shifts {
            let first = modulus(&fs[0], u, 2.0, &WeightSpec::unit()).unwrap();
            for f in &fs[1..] {
                let v = modulus(f, u, 2.0, &WeightSpec::unit()).unwrap();
                assert!((v - first).abs() <= 1e-12 * first);
            }
        }
        let fam = family(fs.clone());
        let r = fk_report(&fam, 2.0, &WeightSpec::unit(), &[1.5], &shifts).unwrap();
        let farthest = tail_mass(&fs[0], 2.0, &WeightSpec::unit(), 1.5).unwrap();
        assert_eq!(r.tail_curve[0].1, farthest);
    }

    #[test]
    fn weighted_translates_fail_tail_condition() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let base = sample_recipe(&Recipe::bump(vec![-6.0], 1.0, 1.0), g).unwrap();
        let fs: Vec<SampledFunction> = (0..12)
            .map(|k| crate::funcspace::translate_cells(&base, &[-4 * k]))
            .collect();
        let w = WeightSpec {
            alpha: 2.0,
            eps: 1.0,
            scale: 1.0,
        };
        let r = fk_report(
            &family(fs),
            2.0,
            &w,
            &[2.0, 4.0, 6.0],
            &axis_shifts(&g, &[1]),
        )
        .unwrap();
        assert_eq!(fk_verdict(&r, &FkTolerance::default()), Verdict::FailTail);
    }

    #[test]
    fn oscillations_fail_modulus_condition() {
        let g = Grid::new(1, 2.0, 128).unwrap();
        let fs: Vec<SampledFunction> = (1..=5)
            .map(|k| sample_recipe(&Recipe::Oscillation { k, radius: 1.0 }, g).unwrap())
            .collect();
        let r = fk_report(
            &family(fs),
            2.0,
            &WeightSpec::unit(),
            &[1.0, 1.5],
            &axis_shifts(&g, &[8, 4, 2, 1]),
        )
        .unwrap();
        assert_eq!(
            fk_verdict(&r, &FkTolerance::default()),
            Verdict::FailModulus
        );
    }

    #[test]
    fn exponent_trick_fixed_points() {
        let g = grid();
        let fam = family(vec![SampledFunction::zeros(g), sample(|_| 1.0, g).unwrap()]);
        let out = exponent_trick(&fam, 0.5, 2.0).unwrap();
        assert!(out.members()[0].values().iter().all(|v| *v == 0.0));
        assert!(out.members()[1].values().iter().all(|v| *v == 1.0));
        let neg = family(vec![sample(|x| x[0], g).unwrap()]);
        assert!(matches!(
            exponent_trick(&neg, 0.5, 2.0),
            Err(Error::NegativeValues { .. })
        ));
    }

    #[test]
    fn domination_on_random_nonnegative_data() {
        let g = grid();
        let mut rng = Stream::new(11);
        let fs: Vec<SampledFunction> = (0..4)
            .map(|_| {
                let vals = (0..g.len()).map(|_| rng.uniform() * 3.0).collect();
                SampledFunction::from_values(g, vals).unwrap()
            })
            .collect();
        let r = exponent_domination(
            &family(fs),
            0.5,
            2.0,
            &WeightSpec::power(0.5, 1.0),
            &axis_shifts(&g, &[1, 2, 5]),
        )
        .unwrap();
        assert_eq!(r.cell_violations, 0);
        assert_eq!(r.integral_violations, 0);
        assert!(r.worst_cell_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn inequality_examples() {
        // s = 4, t = 1, a = 1/2
        assert!((power_gap(4.0, 1.0, 0.5) - 1.0).abs() < 1e-15);
        let rhs2 = 2.0 * (5.0f64 / 3.0).sqrt();
        assert!((rhs2 - 2.581988897471611).abs() < 1e-12);
        assert!(3f64.sqrt() <= rhs2);
        assert_eq!(power_gap(2.5, 2.5, 0.3), 0.0);
        let r = inequality_selftest(20_000, 5).unwrap();
        assert_eq!(r.violations_first + r.violations_second, 0);
    }

    #[test]
    fn power_gap_matches_direct_difference() {
        for (s, t, a) in [(3.0f64, 1.0f64, 0.5), (0.2, 7.0, 0.9), (1e-3, 2e-3, 0.1)] {
            let direct = s.powf(a) - t.powf(a);
            assert!((power_gap(s, t, a) - direct.abs()).abs() <= 1e-14 * direct.abs());
        }
    }

    #[test]
    fn cauchy_split_cases() {
        let g = grid();
        let f = bump(g, 0.0);
        let same = cauchy_split_check(&f, &f, 0.5, 2.0, &WeightSpec::unit(), 0.1).unwrap();
        assert_eq!(same.inside_lhs + same.outside_lhs, 0.0);
        assert!(same.holds);
        let zero = SampledFunction::zeros(g);
        let r = cauchy_split_check(&f, &zero, 0.5, 2.0, &WeightSpec::unit(), 0.1).unwrap();
        assert_eq!(r.outside_lhs, 0.0);
        assert!(r.holds);
        let mut rng = Stream::new(3);
        for _ in 0..20 {
            let a = SampledFunction::from_values(g, (0..g.len()).map(|_| rng.uniform()).collect())
                .unwrap();
            let b = SampledFunction::from_values(g, (0..g.len()).map(|_| rng.uniform()).collect())
                .unwrap();
            for p in [0.5, 1.5] {
                let r =
                    cauchy_split_check(&a, &b, p, 2.0, &WeightSpec::power(1.0, 1.0), 0.1).unwrap();
                assert!(r.holds, "{r:?}");
            }
        }
    }

    #[test]
    fn nets_for_trivial_families() {
        let g = grid();
        let h = g.spacing();
        let f = bump(g, 0.0);
        let single = family(vec![f.clone()]);
        let c = build_net(&single, 2.0, &WeightSpec::unit(), 0.5, h, 3.0).unwrap();
        assert_eq!(c.selected, vec![0]);
        assert_eq!(c.certified_radius, 0.0);
        let twice = family(vec![f.clone(), f]);
        let c = build_net(&twice, 2.0, &WeightSpec::unit(), 0.5, h, 3.0).unwrap();
        assert_eq!(c.selected.len(), 1);
        assert_eq!(c.certified_radius, 0.0);
        assert!(matches!(
            build_net(&twice, 2.0, &WeightSpec::unit(), 1e-6, h, 3.0),
            Err(Error::MollificationTooCoarse { .. })
        ));
        let wide = family(vec![
            sample_recipe(&Recipe::bump(vec![0.0], 3.5, 1.0), g).unwrap()
        ]);
        assert!(matches!(
            build_net(&wide, 2.0, &WeightSpec::unit(), 0.2, h, 1.0),
            Err(Error::TailTooHeavy { .. })
        ));
    }

    fn perturbed(g: Grid, count: usize) -> FamilyOfFunctions {
        family(
            (0..count)
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
                    .unwrap()
                })
                .collect(),
        )
    }

    #[test]
    fn net_certificates_verify() {
        let g = grid();
        let h = g.spacing();
        let fam = perturbed(g, 8);
        for p in [2.0, 0.5] {
            let w = WeightSpec::power(0.5, 1.0);
            let report =
                fk_report(&fam, p, &w, &[1.0, 2.0, 3.0], &axis_shifts(&g, &[0, 1, 2])).unwrap();
            let eps = epsilon_from_report(&report, 2.0 * h, 3.0).unwrap();
            let c = build_net(&fam, p, &w, eps, 2.0 * h, 3.0).unwrap();
            assert!(c.holds(), "{c:?}");
            assert!(c.selected.len() <= 8);
            assert!(c.verify(&fam).unwrap() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn first_inequality_holds(s in 1e-8f64..1e8, t in 1e-8f64..1e8, a in 0.001f64..0.999) {
            prop_assert!(power_gap(s, t, a) <= (s - t).abs().powf(a) * (1.0 + 1e-12));
        }

        #[test]
        fn second_inequality_holds(s in 1e-8f64..1e8, t in 1e-8f64..1e8, a in 0.001f64..0.999) {
            prop_assume!(s != t);
            let d = (s - t).abs();
            let rhs = ((s + t) / d).powf(1.0 - a) * power_gap(s, t, a) / a;
            prop_assert!(d.powf(a) <= rhs * (1.0 + 1e-12));
        }

        #[test]
        fn enlarging_a_family_never_shrinks_curves(k in 1usize..5, extra in 0.0f64..0.05) {
            let g = Grid::new(1, 3.0, 32).unwrap();
            let small = perturbed(g, k);
            let mut members = small.members().to_vec();
            members.push(
                sample_recipe(&Recipe::PerturbedBump { center: vec![0.3], radius: 1.2, amplitude: 1.0, noise: extra, seed: 9 }, g).unwrap(),
            );
            let big = family(members);
            let shifts = axis_shifts(&g, &[1, 2]);
            let w = WeightSpec::unit();
            let a = fk_report(&small, 2.0, &w, &[0.5, 1.0], &shifts).unwrap();
            let b = fk_report(&big, 2.0, &w, &[0.5, 1.0], &shifts).unwrap();
            prop_assert!(b.uniform_bound >= a.uniform_bound);
            for (x, y) in a.tail_curve.iter().zip(&b.tail_curve) {
                prop_assert!(y.1 >= x.1);
            }
            for (x, y) in a.modulus_curve.iter().zip(&b.modulus_curve) {
                prop_assert!(y.value >= x.value);
            }
        }
    }
}
