use std::path::Path;

use anyhow::{bail, Context, Result};
use czlab::commutators::{IndexSet, SymbolSet};
use czlab::compactness::FkTolerance;
use czlab::funcspace::{sample_recipe, FamilyOfFunctions, Grid, Recipe, SampledFunction};
use czlab::kernels::{KernelSpec, ScaleFamily};
use czlab::operators::{Cutoff, EvalPoints, TruncationPolicy};
use czlab::weights::{WeightSpec, WeightVector};
use serde::Deserialize;
use std::sync::Arc;

/// Whole config file. Only the section of the requested scenario is read.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub verify_kernel: Option<VerifyKernel>,
    pub ap_constant: Option<ApConstant>,
    pub run_operator: Option<RunOperator>,
    pub empirical_ratio: Option<EmpiricalRatio>,
    pub commutator_run: Option<CommutatorRun>,
    pub commutator_convergence: Option<CommutatorConvergence>,
    pub commutator_near_far: Option<CommutatorNearFar>,
    pub commutator_decay: Option<CommutatorDecay>,
    pub translation_modulus: Option<TranslationModulus>,
    pub fk_check: Option<FkCheck>,
    pub net_build: Option<NetBuild>,
    pub acceptance: Option<Acceptance>,
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).context("config is not valid TOML")?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("config field `{path}`: {}", e.into_inner().message())
    })
}

pub fn load(path: &Path) -> Result<(ExperimentConfig, Vec<u8>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
    Ok((parse(text)?, bytes))
}

pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .with_context(|| format!("config has no [{name}] section"))
}

pub fn nonempty<T>(v: &[T], field: &str) -> Result<()> {
    if v.is_empty() {
        bail!("`{field}` must not be empty");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.n, self.half_width, self.points).context("grid")
    }
}

/// Where operators are evaluated: every `stride`-th center, or explicit
/// lattice indices each carrying one cell volume.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsConfig {
    pub stride: Option<usize>,
    pub lattice: Option<Vec<Vec<i64>>>,
}

impl PointsConfig {
    pub fn build(&self, grid: &Grid) -> Result<EvalPoints> {
        match (&self.stride, &self.lattice) {
            (Some(_), Some(_)) => bail!("points: give either `stride` or `lattice`"),
            (Some(0), None) => bail!("points.stride must be positive"),
            (Some(s), None) => Ok(EvalPoints::decimated(grid, *s)),
            (None, Some(l)) => {
                nonempty(l, "points.lattice")?;
                if l.iter().any(|p| p.len() != grid.n) {
                    bail!("points.lattice entries must have {} coordinates", grid.n);
                }
                Ok(EvalPoints::explicit(l.clone(), grid.cell_volume()))
            }
            (None, None) => Ok(EvalPoints::default_for(grid)),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalesConfig {
    pub t_min: f64,
    pub ratio: f64,
    pub count: usize,
}

pub fn scale_family(kernel: &KernelSpec, scales: Option<ScalesConfig>) -> Result<ScaleFamily> {
    kernel.validate().context("kernel")?;
    let base = Arc::new(*kernel);
    match scales {
        Some(s) => ScaleFamily::new(base, s.t_min, s.ratio, s.count).context("scales"),
        None => Ok(ScaleFamily::with_default_grid(base)),
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarConfig {
    pub lambda: f64,
    pub z_grid: GridConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    #[default]
    T,
    G,
    GStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionKind {
    Size,
    HoelderX,
    HoelderY,
    SquareSize,
    SquareX,
    SquareY,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyKernel {
    pub kernel: KernelSpec,
    pub conditions: Vec<ConditionKind>,
    pub samples: usize,
    pub constant: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "two")]
    pub b1: f64,
    /// 1-based slot for the y conditions.
    #[serde(default = "first")]
    pub slot: usize,
    pub spread: Option<f64>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub scales: Option<ScalesConfig>,
    /// Adds the H₂ versions of the requested square conditions.
    pub star: Option<StarConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicCubes {
    pub centers: Vec<Vec<i64>>,
    pub levels: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateCube {
    pub corner: Vec<f64>,
    pub side: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApConstant {
    pub grid: GridConfig,
    pub weight: WeightSpec,
    pub p: f64,
    pub dyadic: Option<DyadicCubes>,
    #[serde(default)]
    pub cubes: Vec<CoordinateCube>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOperator {
    pub grid: GridConfig,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub operator: OperatorKind,
    pub delta: Option<f64>,
    #[serde(default = "sharp")]
    pub cutoff: Cutoff,
    pub scales: Option<ScalesConfig>,
    pub star: Option<StarConfig>,
    #[serde(default)]
    pub points: PointsConfig,
    pub inputs: Vec<Recipe>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub weights: Vec<WeightSpec>,
    pub exponents: Vec<f64>,
}

impl WeightsConfig {
    pub fn build(&self) -> Result<WeightVector> {
        WeightVector::new(self.weights.clone(), self.exponents.clone()).context("weights")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalRatio {
    pub kernel: KernelSpec,
    #[serde(default)]
    pub operator: OperatorKind,
    pub delta: Option<f64>,
    #[serde(default = "sharp")]
    pub cutoff: Cutoff,
    pub scales: Option<ScalesConfig>,
    pub star: Option<StarConfig>,
    pub stride: Option<usize>,
    pub grids: Vec<GridConfig>,
    pub tuples: Vec<Vec<Recipe>>,
    pub weights: WeightsConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolConfig {
    pub index: u32,
    pub recipe: Recipe,
}

pub struct Commutator {
    pub grid: Grid,
    pub kernel: KernelSpec,
    pub symbols: SymbolSet,
    pub set: IndexSet,
    pub inputs: Vec<SampledFunction>,
}

/// Kernel, symbols, S and inputs shared by the commutator scenarios.
pub fn commutator(
    grid: &GridConfig,
    kernel: &KernelSpec,
    symbols: &[SymbolConfig],
    pairs: &[(u32, usize)],
    inputs: &[Recipe],
) -> Result<Commutator> {
    let grid = grid.build()?;
    kernel.validate().context("kernel")?;
    let mut set_of = SymbolSet::new();
    for s in symbols {
        set_of
            .insert_recipe(s.index, &s.recipe, grid)
            .with_context(|| format!("symbol {}", s.index))?;
    }
    let set = IndexSet::from_pairs(pairs, kernel.m).context("pairs")?;
    set_of.check(&set, &grid).context("symbols")?;
    Ok(Commutator {
        grid,
        kernel: *kernel,
        symbols: set_of,
        set,
        inputs: sample_all(inputs, grid, "inputs")?,
    })
}

macro_rules! commutator_of {
    ($t:ty) => {
        impl $t {
            pub fn commutator(&self) -> Result<Commutator> {
                commutator(
                    &self.grid,
                    &self.kernel,
                    &self.symbols,
                    &self.pairs,
                    &self.inputs,
                )
            }
        }
    };
}

commutator_of!(CommutatorRun);
commutator_of!(CommutatorDecay);
commutator_of!(CommutatorConvergence);
commutator_of!(TranslationModulus);

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommutatorRun {
    pub grid: GridConfig,
    pub kernel: KernelSpec,
    pub symbols: Vec<SymbolConfig>,
    /// (symbol index, 1-based slot) pairs.
    pub pairs: Vec<(u32, usize)>,
    pub inputs: Vec<Recipe>,
    #[serde(default)]
    pub operator: OperatorKind,
    pub delta: Option<f64>,
    #[serde(default = "sharp")]
    pub cutoff: Cutoff,
    pub scales: Option<ScalesConfig>,
    pub star: Option<StarConfig>,
    #[serde(default)]
    pub points: PointsConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommutatorConvergence {
    pub grid: GridConfig,
    pub kernel: KernelSpec,
    pub symbols: Vec<SymbolConfig>,
    /// (symbol index, 1-based slot) pairs.
    pub pairs: Vec<(u32, usize)>,
    pub inputs: Vec<Recipe>,
    #[serde(default = "smooth")]
    pub cutoff: Cutoff,
    pub deltas: Vec<f64>,
    pub reference_delta: f64,
    pub weights: WeightsConfig,
    #[serde(default)]
    pub points: PointsConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommutatorNearFar {
    pub grid: GridConfig,
    pub inputs: Vec<Recipe>,
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub points: PointsConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommutatorDecay {
    pub grid: GridConfig,
    pub kernel: KernelSpec,
    pub symbols: Vec<SymbolConfig>,
    /// (symbol index, 1-based slot) pairs.
    pub pairs: Vec<(u32, usize)>,
    pub inputs: Vec<Recipe>,
    pub delta: f64,
    #[serde(default = "sharp")]
    pub cutoff: Cutoff,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationModulus {
    pub grid: GridConfig,
    pub kernel: KernelSpec,
    pub symbols: Vec<SymbolConfig>,
    /// (symbol index, 1-based slot) pairs.
    pub pairs: Vec<(u32, usize)>,
    pub inputs: Vec<Recipe>,
    pub delta: f64,
    #[serde(default = "smooth")]
    pub cutoff: Cutoff,
    pub shifts: Vec<Vec<f64>>,
    pub weights: WeightsConfig,
    #[serde(default)]
    pub points: PointsConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkCheck {
    pub grid: GridConfig,
    pub family: Vec<Recipe>,
    pub p: f64,
    #[serde(default)]
    pub weight: WeightSpec,
    pub tail_radii: Vec<f64>,
    /// Shifts ±k h along the first axis; `shifts` lists explicit vectors.
    #[serde(default)]
    pub shift_steps: Vec<i64>,
    #[serde(default)]
    pub shifts: Vec<Vec<f64>>,
    #[serde(default)]
    pub tolerance: FkTolerance,
}

impl FkCheck {
    pub fn all_shifts(&self, grid: &Grid) -> Result<Vec<Vec<f64>>> {
        let mut out = czlab::compactness::axis_shifts(grid, &self.shift_steps);
        out.extend(self.shifts.iter().cloned());
        nonempty(&out, "shift_steps/shifts")?;
        if out.iter().any(|u| u.len() != grid.n) {
            bail!("shifts must have {} coordinates", grid.n);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetBuild {
    pub grid: GridConfig,
    pub family: Vec<Recipe>,
    pub p: f64,
    #[serde(default)]
    pub weight: WeightSpec,
    /// Derived from the family's modulus and tail when absent.
    pub epsilon: Option<f64>,
    pub mollification_radius: f64,
    pub tail_radius: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acceptance {
    #[serde(default)]
    pub criteria: Vec<u8>,
}

pub fn sample_all(recipes: &[Recipe], grid: Grid, field: &str) -> Result<Vec<SampledFunction>> {
    nonempty(recipes, field)?;
    recipes
        .iter()
        .enumerate()
        .map(|(i, r)| sample_recipe(r, grid).with_context(|| format!("{field}[{i}]")))
        .collect()
}

pub fn family(recipes: &[Recipe], grid: Grid) -> Result<FamilyOfFunctions> {
    FamilyOfFunctions::new(sample_all(recipes, grid, "family")?).context("family")
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn first() -> usize {
    1
}

fn sharp() -> Cutoff {
    Cutoff::Sharp
}

fn smooth() -> Cutoff {
    Cutoff::Smooth
}

/// δ and cutoff as a policy; T needs one, G and G* take it optionally.
pub fn truncation(delta: Option<f64>, cutoff: Cutoff) -> Option<TruncationPolicy> {
    delta.map(|d| TruncationPolicy::new(d, cutoff))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_names_field_path() {
        let err =
            parse("seed = 1\n[net_build]\ngrid = { n = 1, half_width = 2.0, points = \"x\" }\n")
                .unwrap_err()
                .to_string();
        assert!(err.contains("net_build.grid.points"), "{err}");
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(parse("seed = 1\n[fk_chek]\n").is_err());
    }

    #[test]
    fn points_choices() {
        let grid = Grid::new(1, 2.0, 16).unwrap();
        let both = PointsConfig {
            stride: Some(2),
            lattice: Some(vec![vec![0]]),
        };
        assert!(both.build(&grid).is_err());
        assert_eq!(PointsConfig::default().build(&grid).unwrap().len(), 4);
        let explicit = PointsConfig {
            stride: None,
            lattice: Some(vec![vec![3], vec![20]]),
        };
        let p = explicit.build(&grid).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.volume, grid.cell_volume());
    }

    #[test]
    fn pairs_resolve_against_symbols() {
        let cfg = parse(
            r#"
seed = 1
[commutator_decay]
grid = { n = 1, half_width = 4.0, points = 16 }
kernel = { label = "K1", m = 2, n = 1 }
symbols = [{ index = 1, recipe = { kind = "bump", center = [0.0], radius = 1.0 } }]
pairs = [[2, 1]]
inputs = [{ kind = "zero" }, { kind = "zero" }]
delta = 1.0
radii = [2.0]
"#,
        )
        .unwrap();
        let err = cfg.commutator_decay.unwrap().commutator().err().unwrap();
        assert!(format!("{err:#}").contains("symbol 2"), "{err:#}");
    }
}
