//! Flat `key = value` experiment configuration and the shipped presets.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::field::Basis;
use crate::gradient::{DefectPropagation, GradientStrategy};
use crate::optimizer::{LineSearchKind, Method, OptimizerConfig, TimeQuadrature};
use crate::pfasst::SolverSettings;
use crate::problems::HeatInitial;
use crate::quadrature::{MAX_NODES, MIN_NODES};
use crate::sweeper::{NewtonSettings, SweeperKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemChoice {
    Heat,
    Nagumo,
}

impl ProblemChoice {
    pub fn name(self) -> &'static str {
        match self {
            ProblemChoice::Heat => "heat",
            ProblemChoice::Nagumo => "nagumo",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Full optimization loop.
    Optimize,
    /// One state solve for a given control.
    Solve,
    /// One state and adjoint solve, optionally followed by a finite
    /// difference check of the gradient.
    Gradient,
    /// Sequential first-order IMEX Euler reference optimization.
    Baseline,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Optimize => "optimize",
            RunMode::Solve => "solve",
            RunMode::Gradient => "gradient",
            RunMode::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "optimize" => Some(RunMode::Optimize),
            "solve" => Some(RunMode::Solve),
            "gradient" => Some(RunMode::Gradient),
            "baseline" => Some(RunMode::Baseline),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemChoice,
    pub lambda: f64,
    pub gamma: f64,
    pub sigma: f64,
    /// Heat only; the Nagumo horizon is fixed.
    pub t_end: f64,
    pub heat_initial: HeatInitial,
    /// Nagumo only: cosine for Neumann walls, periodic for a ring.
    pub boundary: Basis,
    /// Points per dimension, coarse to fine.
    pub points: Vec<usize>,
    pub nodes: Vec<usize>,
    pub sweeper: SweeperKind,
    pub sweeps: usize,
    pub num_steps: usize,
    pub num_workers: usize,
    pub atol: f64,
    pub rtol: f64,
    pub max_sweeps: usize,
    pub newton_tol: f64,
    pub strategy: GradientStrategy,
    pub warm: bool,
    pub quadrature: TimeQuadrature,
    pub propagation: DefectPropagation,
    pub optimizer: OptimizerConfig,
    pub mode: RunMode,
    pub require_convergence: bool,
    pub control_file: Option<PathBuf>,
    pub check_directions: usize,
    pub check_step: f64,
    pub baseline_dt: f64,
    pub study_steps: Vec<usize>,
    pub study_floor: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            problem: ProblemChoice::Heat,
            lambda: 0.05,
            gamma: 1.0,
            sigma: 0.0,
            t_end: 2.0,
            heat_initial: HeatInitial::Consistent,
            boundary: Basis::Periodic,
            points: vec![8, 16],
            nodes: vec![3, 5],
            sweeper: SweeperKind::Imex,
            sweeps: 1,
            num_steps: 20,
            num_workers: 1,
            atol: 1e-10,
            rtol: 1e-10,
            max_sweeps: 100,
            newton_tol: 1e-12,
            strategy: GradientStrategy::FirstStateThenAdjoint,
            warm: false,
            quadrature: TimeQuadrature::Collocation,
            propagation: DefectPropagation::Collocation,
            optimizer: OptimizerConfig::default(),
            mode: RunMode::Optimize,
            require_convergence: false,
            control_file: None,
            check_directions: 0,
            check_step: 1e-3,
            baseline_dt: 1e-3,
            study_steps: vec![1, 2, 4, 8],
            study_floor: 1e-10,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::Config(format!("{}: '{}' is not a number", key, v)))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Config(format!("{}: '{}' is not a non-negative integer", key, v)))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{}: '{}' is not a boolean", key, v))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse_usize(key, s.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

fn bad(key: &str, v: &str) -> Error {
    Error::Config(format!("{}: unknown value '{}'", key, v))
}

impl ExperimentConfig {
    /// Reads `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "name" => self.name = v.to_string(),
            "problem" => {
                self.problem = match v {
                    "heat" => ProblemChoice::Heat,
                    "nagumo" => ProblemChoice::Nagumo,
                    _ => return Err(bad(key, v)),
                }
            }
            "problem.lambda" => self.lambda = parse_f64(key, v)?,
            "problem.gamma" => self.gamma = parse_f64(key, v)?,
            "problem.sigma" => self.sigma = parse_f64(key, v)?,
            "problem.t_end" => self.t_end = parse_f64(key, v)?,
            "problem.initial" => {
                self.heat_initial = match v {
                    "consistent" => HeatInitial::Consistent,
                    "published" => HeatInitial::Published,
                    _ => return Err(bad(key, v)),
                }
            }
            "problem.boundary" => {
                self.boundary = match v {
                    "periodic" => Basis::Periodic,
                    "neumann" => Basis::Cosine,
                    _ => return Err(bad(key, v)),
                }
            }
            "levels.points" => self.points = parse_list(key, v)?,
            "levels.nodes" => self.nodes = parse_list(key, v)?,
            "levels.sweeper" => self.sweeper = SweeperKind::parse(v).ok_or_else(|| bad(key, v))?,
            "levels.sweeps" => self.sweeps = parse_usize(key, v)?,
            "time.steps" => self.num_steps = parse_usize(key, v)?,
            "time.workers" => self.num_workers = parse_usize(key, v)?,
            "solver.atol" => self.atol = parse_f64(key, v)?,
            "solver.rtol" => self.rtol = parse_f64(key, v)?,
            "solver.tol" => {
                self.atol = parse_f64(key, v)?;
                self.rtol = self.atol;
            }
            "solver.max_sweeps" => self.max_sweeps = parse_usize(key, v)?,
            "solver.newton_tol" => self.newton_tol = parse_f64(key, v)?,
            "gradient.strategy" => self.strategy = GradientStrategy::parse(v).ok_or_else(|| bad(key, v))?,
            "gradient.warm" => self.warm = parse_bool(key, v)?,
            "gradient.quadrature" => self.quadrature = TimeQuadrature::parse(v).ok_or_else(|| bad(key, v))?,
            "gradient.propagation" => self.propagation = DefectPropagation::parse(v).ok_or_else(|| bad(key, v))?,
            "optimizer.method" => {
                self.optimizer.method = Method::parse(v).ok_or_else(|| bad(key, v))?;
            }
            "optimizer.linesearch" => {
                self.optimizer.linesearch = LineSearchKind::parse(v).ok_or_else(|| bad(key, v))?;
            }
            "optimizer.max_iters" => self.optimizer.max_iters = parse_usize(key, v)?,
            "optimizer.c1" => self.optimizer.c1 = parse_f64(key, v)?,
            "optimizer.c2" => self.optimizer.c2 = parse_f64(key, v)?,
            "optimizer.initial_step" => self.optimizer.initial_step = parse_f64(key, v)?,
            "optimizer.gradient_tol" => self.optimizer.gradient_tol = parse_f64(key, v)?,
            "optimizer.max_trials" => self.optimizer.max_trials = parse_usize(key, v)?,
            "run.mode" => self.mode = RunMode::parse(v).ok_or_else(|| bad(key, v))?,
            "run.require_convergence" => self.require_convergence = parse_bool(key, v)?,
            "run.control" => self.control_file = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "check.directions" => self.check_directions = parse_usize(key, v)?,
            "check.step" => self.check_step = parse_f64(key, v)?,
            "baseline.dt" => self.baseline_dt = parse_f64(key, v)?,
            "study.steps" => self.study_steps = parse_list(key, v)?,
            "study.floor" => self.study_floor = parse_f64(key, v)?,
            "seed" => self.seed = v.parse().map_err(|_| bad(key, v))?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key '{}'", key))),
        }
        Ok(())
    }

    /// Every key with its resolved value; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let o = &self.optimizer;
        let boundary = match self.boundary {
            Basis::Periodic => "periodic",
            Basis::Cosine => "neumann",
        };
        let initial = match self.heat_initial {
            HeatInitial::Consistent => "consistent",
            HeatInitial::Published => "published",
        };
        let control = self.control_file.as_ref().map_or(String::new(), |p| p.display().to_string());
        let lines: Vec<(&str, String)> = vec![
            ("name", self.name.clone()),
            ("problem", self.problem.name().into()),
            ("problem.lambda", format!("{:e}", self.lambda)),
            ("problem.gamma", format!("{:e}", self.gamma)),
            ("problem.sigma", format!("{:e}", self.sigma)),
            ("problem.t_end", format!("{:e}", self.t_end)),
            ("problem.initial", initial.into()),
            ("problem.boundary", boundary.into()),
            ("levels.points", join(&self.points)),
            ("levels.nodes", join(&self.nodes)),
            ("levels.sweeper", self.sweeper.name().into()),
            ("levels.sweeps", self.sweeps.to_string()),
            ("time.steps", self.num_steps.to_string()),
            ("time.workers", self.num_workers.to_string()),
            ("solver.atol", format!("{:e}", self.atol)),
            ("solver.rtol", format!("{:e}", self.rtol)),
            ("solver.max_sweeps", self.max_sweeps.to_string()),
            ("solver.newton_tol", format!("{:e}", self.newton_tol)),
            ("gradient.strategy", self.strategy.name().into()),
            ("gradient.warm", self.warm.to_string()),
            ("gradient.quadrature", self.quadrature.name().into()),
            ("gradient.propagation", self.propagation.name().into()),
            ("optimizer.method", o.method.name().into()),
            ("optimizer.linesearch", o.linesearch.name().into()),
            ("optimizer.max_iters", o.max_iters.to_string()),
            ("optimizer.c1", format!("{:e}", o.c1)),
            ("optimizer.c2", format!("{:e}", o.c2)),
            ("optimizer.initial_step", format!("{:e}", o.initial_step)),
            ("optimizer.gradient_tol", format!("{:e}", o.gradient_tol)),
            ("optimizer.max_trials", o.max_trials.to_string()),
            ("run.mode", self.mode.name().into()),
            ("run.require_convergence", self.require_convergence.to_string()),
            ("run.control", control),
            ("check.directions", self.check_directions.to_string()),
            ("check.step", format!("{:e}", self.check_step)),
            ("baseline.dt", format!("{:e}", self.baseline_dt)),
            ("study.steps", join(&self.study_steps)),
            ("study.floor", format!("{:e}", self.study_floor)),
            ("seed", self.seed.to_string()),
            ("output.dir", self.output_dir.display().to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{} = {}", k, v);
        }
        s
    }

    /// The config as `# key = value` comment lines for CSV headers.
    pub fn as_comment(&self) -> String {
        self.to_text().lines().map(|l| format!("# {}\n", l)).collect()
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            atol: self.atol,
            rtol: self.rtol,
            max_iters: self.max_sweeps,
            newton: NewtonSettings {
                tol: self.newton_tol,
                ..NewtonSettings::default()
            },
            ..SolverSettings::default()
        }
    }

    /// Checks everything that can be checked without building a problem.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.points.is_empty() || self.points.len() != self.nodes.len() {
            return fail("levels.points and levels.nodes need the same, non-zero length".into());
        }
        if self.points.iter().any(|&p| p < 4) {
            return fail("every level needs at least 4 points per dimension".into());
        }
        if self.points.windows(2).any(|w| w[0] > w[1]) || self.nodes.windows(2).any(|w| w[0] > w[1]) {
            return fail("levels must be listed coarse to fine".into());
        }
        if self.nodes.iter().any(|&m| !(MIN_NODES..=MAX_NODES).contains(&m)) {
            return fail(format!("node counts must lie in {}..={}", MIN_NODES, MAX_NODES));
        }
        if self.sweeps == 0 || self.max_sweeps == 0 {
            return fail("levels.sweeps and solver.max_sweeps must be positive".into());
        }
        if !(self.atol > 0.0) || !(self.rtol > 0.0) || !(self.newton_tol > 0.0) {
            return fail("tolerances must be positive".into());
        }
        if self.num_steps == 0 || self.num_workers == 0 {
            return fail("time.steps and time.workers must be positive".into());
        }
        if self.mode != RunMode::Baseline && self.num_steps % self.num_workers != 0 {
            return fail(format!(
                "time.workers = {} must divide time.steps = {}",
                self.num_workers, self.num_steps
            ));
        }
        if !(self.lambda >= 0.0) || !(self.sigma >= 0.0) {
            return fail("problem.lambda and problem.sigma must be non-negative".into());
        }
        match self.problem {
            ProblemChoice::Heat => {
                if !(self.lambda > 0.0) || !(self.t_end > 0.0) {
                    return fail("heat needs problem.lambda > 0 and problem.t_end > 0".into());
                }
                if self.mode == RunMode::Baseline {
                    return fail("the IMEX Euler baseline is defined for the Nagumo problem".into());
                }
            }
            ProblemChoice::Nagumo => {
                if !(self.gamma > 0.0) {
                    return fail("problem.gamma must be positive".into());
                }
                if self.num_steps % 2 != 0 {
                    return fail("Nagumo needs an even step count so that t = 2.5 is a step boundary".into());
                }
                if self.strategy == GradientStrategy::Mixed {
                    return fail("the mixed strategy needs a linear state equation".into());
                }
            }
        }
        if self.strategy == GradientStrategy::Simultaneous && self.num_workers != self.num_steps {
            return fail("the simultaneous strategy needs time.workers = time.steps".into());
        }
        if self.strategy == GradientStrategy::SequentialReference && self.num_workers != 1 {
            return fail("the sequential reference strategy runs on one worker".into());
        }
        if self.mode == RunMode::Baseline {
            let n = crate::problems::NAGUMO_END_TIME / self.baseline_dt;
            let f = crate::problems::NAGUMO_FREEZE_TIME / self.baseline_dt;
            if !(self.baseline_dt > 0.0) || (n - n.round()).abs() > 1e-6 || (f - f.round()).abs() > 1e-6 {
                return fail("baseline.dt must divide 2.5".into());
            }
        }
        if self.check_directions > 0 && !(self.check_step > 0.0) {
            return fail("check.step must be positive".into());
        }
        if self.study_steps.is_empty() || self.study_steps.contains(&0) {
            return fail("study.steps needs positive step counts".into());
        }
        self.optimizer.validate()
    }
}

struct PresetEntry {
    name: String,
    description: String,
    config: ExperimentConfig,
}

fn heat_base() -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemChoice::Heat,
        lambda: 0.05,
        t_end: 2.0,
        points: vec![16, 32, 64],
        nodes: vec![2, 3, 5],
        num_steps: 20,
        atol: 1e-10,
        rtol: 1e-10,
        optimizer: OptimizerConfig::steepest_descent(50),
        ..ExperimentConfig::default()
    }
}

fn nagumo_base() -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemChoice::Nagumo,
        lambda: 1e-6,
        gamma: 1.0,
        boundary: Basis::Periodic,
        points: vec![32, 64, 128],
        nodes: vec![3, 5, 9],
        num_steps: 32,
        atol: 1e-11,
        rtol: 1e-11,
        optimizer: OptimizerConfig::ncg(crate::optimizer::BetaRule::DaiYuan, 200),
        ..ExperimentConfig::default()
    }
}

fn preset_table() -> Vec<PresetEntry> {
    let mut out = Vec::new();
    for (variant, strategy) in [
        ("plain", GradientStrategy::FirstStateThenAdjoint),
        ("mixed", GradientStrategy::Mixed),
    ] {
        for warm in [false, true] {
            let start = if warm { "warm" } else { "cold" };
            let name = format!("heat-scaling-{}-{}", variant, start);
            out.push(PresetEntry {
                description: format!(
                    "heat, 50 steepest descent steps, {} gradients, {} start, (16/32/64)^3",
                    if variant == "plain" { "first state then adjoint" } else { "mixed" },
                    start
                ),
                config: ExperimentConfig {
                    name: name.clone(),
                    strategy,
                    warm,
                    ..heat_base()
                },
                name,
            });
        }
    }
    for e in 4..=10 {
        let name = format!("heat-tolerance-1e-{}", e);
        let tol = 10f64.powi(-e);
        out.push(PresetEntry {
            description: format!("heat, first state then adjoint, residual tolerance 1e-{}", e),
            config: ExperimentConfig {
                name: name.clone(),
                atol: tol,
                rtol: tol,
                ..heat_base()
            },
            name,
        });
    }
    for (gamma, steps) in [(1.0, &[32, 64, 128][..]), (3.0, &[32, 64, 128][..]), (5.0, &[32, 64, 128, 256][..])] {
        for &n in steps {
            for kind in [SweeperKind::Imex, SweeperKind::MisdcLagged, SweeperKind::MisdcNewton] {
                let name = format!("nagumo-gamma{}-n{}-{}", gamma as u32, n, kind.name());
                out.push(PresetEntry {
                    description: format!(
                        "Nagumo state and adjoint at u = 0, gamma = {}, {} steps, {} sweeps, 64/128/256 points",
                        gamma,
                        n,
                        kind.name()
                    ),
                    config: ExperimentConfig {
                        name: name.clone(),
                        gamma,
                        points: vec![64, 128, 256],
                        num_steps: n,
                        sweeper: kind,
                        mode: RunMode::Gradient,
                        require_convergence: true,
                        ..nagumo_base()
                    },
                    name,
                });
            }
        }
    }
    for warm in [false, true] {
        let start = if warm { "warm" } else { "cold" };
        let name = format!("nagumo-scaling-{}", start);
        out.push(PresetEntry {
            description: format!("Nagumo, 200 Dai-Yuan CG steps, IMEX sweeps, {} start", start),
            config: ExperimentConfig {
                name: name.clone(),
                warm,
                ..nagumo_base()
            },
            name,
        });
    }
    out.push(PresetEntry {
        name: "nagumo-imex-euler".into(),
        description: "Nagumo, 200 Dai-Yuan CG steps on a sequential IMEX Euler discretization, dt = 1e-3".into(),
        config: ExperimentConfig {
            name: "nagumo-imex-euler".into(),
            mode: RunMode::Baseline,
            num_workers: 1,
            baseline_dt: 1e-3,
            ..nagumo_base()
        },
    });
    out.push(PresetEntry {
        name: "heat-order".into(),
        description: "heat, temporal order of the state solver with a 5-node finest level".into(),
        config: ExperimentConfig {
            name: "heat-order".into(),
            points: vec![8, 16],
            nodes: vec![3, 5],
            t_end: 0.05,
            num_steps: 1,
            study_steps: vec![2, 4, 8, 16],
            // the state is O(1e-2); an absolute tolerance near 1e-13 already limits the error
            atol: 1e-16,
            rtol: 1e-14,
            study_floor: 1e-12,
            mode: RunMode::Solve,
            ..heat_base()
        },
    });
    out
}

/// `(name, description)` of every shipped preset.
pub fn preset_names() -> Vec<(String, String)> {
    preset_table().into_iter().map(|p| (p.name, p.description)).collect()
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    preset_table().into_iter().find(|p| p.name == name).map(|p| p.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for (name, _) in preset_names() {
            let c = preset(&name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{}: {}", name, e));
            let back = ExperimentConfig::parse(&c.to_text()).unwrap();
            assert_eq!(back, c, "{}", name);
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = ExperimentConfig::parse("# heading\n\nproblem = nagumo # trailing\ntime.steps=32\nproblem.gamma = 3\n").unwrap();
        assert_eq!(c.problem, ProblemChoice::Nagumo);
        assert_eq!(c.num_steps, 32);
        assert_eq!(c.gamma, 3.0);
    }

    #[test]
    fn unknown_keys_and_values_rejected() {
        assert!(matches!(ExperimentConfig::parse("problem.kappa = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("levels.sweeper = rk4"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("time.steps = -3"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("no equals sign"), Err(Error::Config(_))));
    }

    #[test]
    fn validation_catches_bad_combinations() {
        let mut c = ExperimentConfig { num_workers: 3, ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
        c.num_workers = 4;
        c.validate().unwrap();
        c.strategy = GradientStrategy::Simultaneous;
        assert!(c.validate().is_err());
        let mut n = preset("nagumo-scaling-cold").unwrap();
        n.strategy = GradientStrategy::Mixed;
        assert!(n.validate().is_err());
        let mut b = preset("nagumo-imex-euler").unwrap();
        b.baseline_dt = 0.3;
        assert!(b.validate().is_err());
        let levels = ExperimentConfig { points: vec![16, 8], nodes: vec![3, 5], ..ExperimentConfig::default() };
        assert!(levels.validate().is_err());
    }

    #[test]
    fn gamma_table_presets_exist() {
        assert!(preset("nagumo-gamma1-n32-imex").unwrap().require_convergence);
        assert!(preset("nagumo-gamma5-n256-misdc_lagged").is_some());
        assert!(preset("heat-tolerance-1e-4").is_some());
        assert!(preset("nothing").is_none());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn config_text_round_trips(
            lambda in 1e-8f64..1.0,
            steps in 1usize..64,
            workers in 1usize..8,
            tol in 1e-14f64..1e-4,
            warm in any::<bool>(),
        ) {
            let c = ExperimentConfig {
                lambda,
                num_steps: steps,
                num_workers: workers,
                atol: tol,
                warm,
                ..ExperimentConfig::default()
            };
            let back = ExperimentConfig::parse(&c.to_text()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
