//! Versioned JSON run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables,
    DefaultNumericTypes, EvalexprError, Function, HashMapContext, Node, Value,
};
use mfgs_core::carleman::{default_shift, BoundaryMode, CarlemanParams};
use mfgs_core::forward_solver::SolverConfig;
use mfgs_core::grid::{read_slice, CorpusSpec, SpaceTimeGrid, SpatialSlice};
use mfgs_core::mfg_model::{
    normalize_density, ElasticitySpec, InteractionSpec, KernelSpec, MfgProblem, ProblemData,
};
use mfgs_core::stability_lab::PerturbationSpec;
use serde::{Deserialize, Serialize};

type UnaryFn = fn(f64) -> f64;

pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Master seed for every random corpus.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; 0 picks one per core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub carleman: CarlemanSection,
    #[serde(default)]
    pub solver: SolverConfig<f64>,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

fn default_seed() -> u64 {
    7
}

fn default_out() -> PathBuf {
    PathBuf::from("mfgs-out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: VERSION,
            seed: default_seed(),
            jobs: 0,
            out: default_out(),
            grid: GridSection::default(),
            problem: ProblemSection::default(),
            carleman: CarlemanSection::default(),
            solver: SolverConfig::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub lengths: Vec<f64>,
    pub nx: Vec<usize>,
    pub nt: usize,
    pub horizon: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            lengths: vec![1.0],
            nx: vec![201],
            nt: 401,
            horizon: 0.3,
        }
    }
}

/// A spatial profile: an expression in `x`, `y`, `pi`, `lx`, `ly`, or a
/// slice file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Expr(String),
    File { file: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub beta: f64,
    pub elasticity: ElasticitySpec<f64>,
    pub kernel: KernelSpec<f64>,
    pub interaction: InteractionSpec<f64>,
    pub u_terminal: DataSource,
    pub p_initial: DataSource,
    /// Rescale `p_initial` to unit mass before use.
    pub normalize_p_initial: bool,
    pub u_initial: Option<DataSource>,
    pub n3: f64,
    pub n4: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            beta: 0.1,
            elasticity: ElasticitySpec::Smooth { c0: 1.0, c1: 0.2 },
            kernel: KernelSpec::Gaussian {
                amplitude: 1.0,
                width: 0.2,
            },
            interaction: InteractionSpec::Linear {
                gamma1: 0.1,
                gamma2: 0.1,
            },
            u_terminal: DataSource::Expr("0.5 * cos(pi * x) + 0.2 * cos(2.0 * pi * x)".into()),
            p_initial: DataSource::Expr("1.0 + 0.5 * cos(pi * x)".into()),
            normalize_p_initial: true,
            u_initial: None,
            n3: 10.0,
            n4: 10.0,
        }
    }
}

/// Corpus shape; the seed comes from the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub count: usize,
    pub decay: f64,
    pub space_modes: usize,
    pub time_modes: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let d = CorpusSpec::default();
        Self {
            count: d.count,
            decay: d.decay,
            space_modes: d.space_modes,
            time_modes: d.time_modes,
        }
    }
}

impl CorpusSection {
    pub fn spec(&self, seed: u64) -> CorpusSpec {
        CorpusSpec {
            seed,
            count: self.count,
            decay: self.decay,
            space_modes: self.space_modes,
            time_modes: self.time_modes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanSection {
    /// Explicit shift `a`; `None` uses `2 + sqrt(1/4 + T)`.
    pub shift: Option<f64>,
    /// `λ` grid; `None` uses `{2.5, 3, 4, 6, 8, λ₀}`.
    pub lambdas: Option<Vec<f64>>,
    pub mode: BoundaryMode,
    /// Campaign grid (same lengths and horizon as the grid section).
    pub nx: Vec<usize>,
    pub nt: usize,
    pub corpus: CorpusSection,
    /// Members used to measure the quadrature tolerance.
    pub identity_members: usize,
    pub identity_lambda: f64,
    /// Coarsest grid of the identity refinement study.
    pub refinement_nx: Vec<usize>,
    pub refinement_nt: usize,
    pub halvings: usize,
    pub min_order: f64,
    /// Horizons checked by the proof-step audit.
    pub audit_horizons: Vec<f64>,
}

impl Default for CarlemanSection {
    fn default() -> Self {
        Self {
            shift: None,
            lambdas: None,
            mode: BoundaryMode::Corrected,
            nx: vec![65],
            nt: 161,
            corpus: CorpusSection::default(),
            identity_members: 10,
            identity_lambda: 3.0,
            refinement_nx: vec![17],
            refinement_nt: 41,
            halvings: 3,
            min_order: 1.8,
            audit_horizons: vec![0.05, 0.3, 1.0, 2.0, 10.0],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    /// `u` from the corpus with `u(·,0) = 0`, `q` from an independent corpus.
    #[default]
    Corpus,
    /// `u = p̃`, `q = ũ` from solves with perturbed terminal data.
    Stability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasiSection {
    pub pairs: usize,
    pub source: PairSource,
    pub lambdas: Vec<f64>,
    pub max_spread: f64,
    /// Perturbation amplitude for stability pairs.
    pub delta: f64,
    /// Corpus shape for corpus pairs; its count is replaced by `pairs`.
    pub corpus: CorpusSection,
}

impl Default for QuasiSection {
    fn default() -> Self {
        Self {
            pairs: 100,
            source: PairSource::Corpus,
            lambdas: vec![3.0, 4.0, 6.0],
            max_spread: 20.0,
            delta: 1e-2,
            corpus: CorpusSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Shape of every sweep perturbation; `delta` and `seed` are taken from
    /// the lists above.
    pub perturbation: PerturbationSpec,
    pub slope_tolerance: f64,
    pub max_ratio_spread: f64,
    pub quasi: QuasiSection,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            deltas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            seeds: vec![0, 1, 2],
            perturbation: PerturbationSpec::default(),
            slope_tolerance: 0.15,
            max_ratio_spread: 10.0,
            quasi: QuasiSection::default(),
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<mfgs_core::Error> for ConfigError {
    fn from(e: mfgs_core::Error) -> Self {
        Self(e.to_string())
    }
}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Parsed configuration plus the directory relative file references
/// resolve against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn defaults() -> Self {
        Self {
            config: RunConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        let config = parse(&text)?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { config, base_dir })
    }
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig =
        serde_json::from_str(text).map_err(|e| err(format!("invalid config: {e}")))?;
    if config.version != VERSION {
        return Err(err(format!(
            "unsupported config version {}, expected {VERSION}",
            config.version
        )));
    }
    Ok(config)
}

fn math_fn(name: &'static str, f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |arg: &Value<DefaultNumericTypes>| {
        let v = arg
            .as_number()
            .map_err(|_| EvalexprError::CustomMessage(format!("{name} expects one number")))?;
        Ok(Value::Float(f(v)))
    })
}

/// Compiled spatial expression.
pub struct Expression {
    node: Node<DefaultNumericTypes>,
    source: String,
}

impl Expression {
    pub fn compile(source: &str) -> Result<Self, ConfigError> {
        let node = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| err(format!("cannot parse expression {source:?}: {e}")))?;
        Ok(Self {
            node,
            source: source.to_owned(),
        })
    }

    pub fn sample(&self, grid: &Arc<SpaceTimeGrid<f64>>) -> Result<SpatialSlice<f64>, ConfigError> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let fns: [(&str, UnaryFn); 8] = [
            ("cos", f64::cos),
            ("sin", f64::sin),
            ("exp", f64::exp),
            ("ln", f64::ln),
            ("sqrt", f64::sqrt),
            ("abs", f64::abs),
            ("tanh", f64::tanh),
            ("cosh", f64::cosh),
        ];
        let lengths = grid.lengths();
        let consts = [
            ("pi", std::f64::consts::PI),
            ("lx", lengths[0]),
            ("ly", lengths.get(1).copied().unwrap_or(0.0)),
        ];
        let setup = |ctx: &mut HashMapContext<DefaultNumericTypes>| -> Result<(), EvalexprError<DefaultNumericTypes>> {
            for (name, f) in fns {
                ctx.set_function(name.into(), math_fn(name, f))?;
            }
            for (name, v) in consts {
                ctx.set_value(name.into(), Value::Float(v))?;
            }
            Ok(())
        };
        setup(&mut ctx).map_err(|e| err(e.to_string()))?;
        let mut values = Vec::with_capacity(grid.n_space());
        for s in 0..grid.n_space() {
            let [x, y] = grid.point(s);
            ctx.set_value("x".into(), Value::Float(x))
                .map_err(|e| err(e.to_string()))?;
            ctx.set_value("y".into(), Value::Float(y))
                .map_err(|e| err(e.to_string()))?;
            let v = self
                .node
                .eval_number_with_context(&ctx)
                .map_err(|e| err(format!("cannot evaluate {:?}: {e}", self.source)))?;
            values.push(v);
        }
        Ok(SpatialSlice::new(grid.clone(), values)?)
    }
}

impl DataSource {
    pub fn load(
        &self,
        grid: &Arc<SpaceTimeGrid<f64>>,
        base_dir: &Path,
    ) -> Result<SpatialSlice<f64>, ConfigError> {
        match self {
            DataSource::Expr(src) => Expression::compile(src)?.sample(grid),
            DataSource::File { file } => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    base_dir.join(file)
                };
                let mut f = std::fs::File::open(&path)
                    .map_err(|e| err(format!("cannot open {}: {e}", path.display())))?;
                let slice = read_slice::<f64, _>(&mut f)?;
                if slice.grid().nx() != grid.nx() || slice.grid().lengths() != grid.lengths() {
                    return Err(err(format!(
                        "{} does not match the configured grid",
                        path.display()
                    )));
                }
                Ok(SpatialSlice::new(grid.clone(), slice.into_values())?)
            }
        }
    }
}

impl RunConfig {
    fn grid_with(&self, nx: &[usize], nt: usize) -> Result<Arc<SpaceTimeGrid<f64>>, ConfigError> {
        if nx.len() != self.grid.lengths.len() {
            return Err(err("grid nx and lengths must have the same number of axes"));
        }
        Ok(SpaceTimeGrid::new(&self.grid.lengths, nx, nt, self.grid.horizon)?.into_shared())
    }

    pub fn solver_grid(&self) -> Result<Arc<SpaceTimeGrid<f64>>, ConfigError> {
        self.grid_with(&self.grid.nx, self.grid.nt)
    }

    pub fn campaign_grid(&self) -> Result<Arc<SpaceTimeGrid<f64>>, ConfigError> {
        self.grid_with(&self.carleman.nx, self.carleman.nt)
    }

    pub fn refinement_base(&self) -> Result<SpaceTimeGrid<f64>, ConfigError> {
        if self.carleman.refinement_nx.len() != self.grid.lengths.len() {
            return Err(err(
                "refinement_nx and lengths must have the same number of axes",
            ));
        }
        Ok(SpaceTimeGrid::new(
            &self.grid.lengths,
            &self.carleman.refinement_nx,
            self.carleman.refinement_nt,
            self.grid.horizon,
        )?)
    }

    pub fn shift_for(&self, horizon: f64) -> Result<f64, ConfigError> {
        match self.carleman.shift {
            Some(a) if a > 2.0 && a.is_finite() => Ok(a),
            Some(a) => Err(err(format!("shift a must exceed 2, got {a}"))),
            None => Ok(default_shift(horizon)?),
        }
    }

    /// Weight parameters at the identity `λ` on the configured horizon.
    pub fn carleman_params(&self) -> Result<CarlemanParams<f64>, ConfigError> {
        let t = self.grid.horizon;
        Ok(CarlemanParams::new(
            t,
            self.shift_for(t)?,
            self.carleman.identity_lambda,
        )?)
    }

    pub fn lambda_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let params = self.carleman_params()?;
        let grid = match &self.carleman.lambdas {
            Some(l) => l.clone(),
            None => params.default_lambda_grid(),
        };
        if grid.is_empty() || grid.iter().any(|&l| !(l >= 2.0) || !l.is_finite()) {
            return Err(err("every lambda must be finite and at least 2"));
        }
        Ok(grid)
    }

    pub fn problem(&self, base_dir: &Path) -> Result<MfgProblem<f64>, ConfigError> {
        let grid = self.solver_grid()?;
        let p = &self.problem;
        let u_terminal = p.u_terminal.load(&grid, base_dir)?;
        let mut p_initial = p.p_initial.load(&grid, base_dir)?;
        if p.normalize_p_initial {
            p_initial = normalize_density(&p_initial)?;
        }
        let u_initial = p
            .u_initial
            .as_ref()
            .map(|s| s.load(&grid, base_dir))
            .transpose()?;
        Ok(MfgProblem::new(ProblemData {
            beta: p.beta,
            elasticity: p.elasticity,
            kernel: p.kernel,
            interaction: Arc::new(p.interaction),
            u_terminal,
            p_initial,
            u_initial,
            n3: p.n3,
            n4: p.n4,
        })?)
    }

    /// Checks everything that does not require a solve.
    pub fn validate(&self, base_dir: &Path) -> Result<(), ConfigError> {
        self.problem(base_dir)?;
        self.campaign_grid()?;
        self.refinement_base()?;
        self.lambda_grid()?;
        self.solver.validate()?;
        self.experiment.perturbation.validate()?;
        for &t in &self.carleman.audit_horizons {
            if !(t > 0.0) || !t.is_finite() {
                return Err(err(format!("audit horizon must be positive, got {t}")));
            }
            self.shift_for(t)?;
        }
        let q = &self.experiment.quasi;
        if q.pairs == 0 || q.lambdas.is_empty() {
            return Err(err("quasi campaign needs pairs and lambdas"));
        }
        if self.carleman.identity_members == 0 {
            return Err(err("identity_members must be positive"));
        }
        Ok(())
    }
}
