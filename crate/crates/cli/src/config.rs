//! Flat `key=value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, keys are dotted:
//!
//! ```text
//! set.kind = ball
//! set.dim = 2
//! policy.kind = adaptive
//! policy.p_hat = 0.0
//! stream.kind = rademacher
//! run.horizon = 1000
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use dynregret::geometry::{ConvexSet, FeasibleSet, Vector};
use dynregret::scheduler::{BudgetShape, PathBudget, RatePolicy};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}, `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

const KEYS: &[&str] = &[
    "set.kind",
    "set.dim",
    "set.radius",
    "set.center",
    "set.lower",
    "set.upper",
    "policy.kind",
    "policy.p_hat",
    "policy.p",
    "policy.g_total",
    "policy.budget.kind",
    "policy.budget.c",
    "policy.reset_decision",
    "stream.kind",
    "stream.L",
    "stream.direction",
    "stream.drift",
    "stream.noise",
    "stream.gradients",
    "stream.zero_prefix",
    "comparator.kind",
    "comparator.p",
    "comparator.resolution",
    "run.horizon",
    "run.reps",
    "run.seed",
    "run.w1",
    "run.out",
];

#[derive(Debug, Clone, PartialEq)]
pub enum SetSpec {
    Ball { dim: usize, radius: f64, center: Option<Vec<f64>> },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Adaptive { p_hat: f64 },
    /// `g_total = None` tunes the rate with the run's own realized `G_T`.
    Constant { p: f64, g_total: Option<f64> },
    PerCoordinate { p_hat: Vec<f64> },
    Doubling { budget: BudgetShape, reset_decision: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamSpec {
    Rademacher { scale: f64, direction: Option<Vec<f64>> },
    Regression { drift: f64, noise: f64 },
    Linear { gradients: Vec<Vec<f64>> },
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComparatorSpec {
    /// Best piecewise-constant comparator; the budget defaults to the policy's.
    Segmented { p: Option<f64> },
    GroundTruth,
    BruteForce { p: f64, resolution: usize },
    /// Respects the doubling policy's budget `P(t)` on every prefix.
    Prefix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub set: SetSpec,
    pub policy: PolicySpec,
    pub stream: StreamSpec,
    pub zero_prefix: usize,
    pub comparator: ComparatorSpec,
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    pub w1: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            set: SetSpec::Ball {
                dim: 2,
                radius: 1.0,
                center: None,
            },
            policy: PolicySpec::Adaptive { p_hat: 0.0 },
            stream: StreamSpec::Rademacher {
                scale: 1.0,
                direction: None,
            },
            zero_prefix: 0,
            comparator: ComparatorSpec::Segmented { p: None },
            horizon: 1000,
            reps: 1,
            seed: 0,
            w1: None,
            out: None,
        }
    }
}

struct Entry {
    line: Option<usize>,
    value: String,
}

/// Raw assignments, checked against the known keys.
pub struct Assignments(BTreeMap<String, Entry>);

impl Assignments {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = Self(BTreeMap::new());
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    line: Some(i + 1),
                    key: line.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            map.insert(key.trim(), value.trim(), Some(i + 1))?;
        }
        Ok(map)
    }

    /// Adds or replaces an assignment (later values win).
    pub fn insert(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError {
                line,
                key: key.to_string(),
                message: "unknown key".into(),
            });
        }
        self.0.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
        Ok(())
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.0.get(key).and_then(|e| e.line),
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|e| e.value.as_str())
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key).map(|v| parse_f64(v).map_err(|m| self.err(key, m))).transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn nonneg(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let x = self.f64_or(key, default)?;
        if x < 0.0 {
            return Err(self.err(key, format!("must be nonnegative, got {x}")));
        }
        Ok(x)
    }

    fn int<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| self.err(key, format!("expected a nonnegative integer, got `{v}`")))
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.raw(key)
            .map(|v| parse_list(v).map_err(|m| self.err(key, m)))
            .transpose()
    }

    fn required_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.list(key)?.ok_or_else(|| self.err(key, "required"))
    }

    fn kind<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn build(&self) -> Result<ExperimentConfig, ConfigError> {
        let set = match self.kind("set.kind", "ball") {
            "ball" => {
                let center = self.list("set.center")?;
                let dim = match (self.int::<usize>("set.dim")?, &center) {
                    (Some(d), _) => d,
                    (None, Some(c)) => c.len(),
                    (None, None) => 2,
                };
                SetSpec::Ball {
                    dim,
                    radius: self.f64_or("set.radius", 1.0)?,
                    center,
                }
            }
            "box" => SetSpec::Box {
                lower: self.required_list("set.lower")?,
                upper: self.required_list("set.upper")?,
            },
            other => return Err(self.err("set.kind", format!("expected ball or box, got `{other}`"))),
        };

        let policy = match self.kind("policy.kind", "adaptive") {
            "adaptive" => PolicySpec::Adaptive {
                p_hat: self.nonneg("policy.p_hat", 0.0)?,
            },
            "constant" => PolicySpec::Constant {
                p: self.nonneg("policy.p", 0.0)?,
                g_total: self.f64("policy.g_total")?,
            },
            "per_coordinate" => PolicySpec::PerCoordinate {
                p_hat: self.required_list("policy.p_hat")?,
            },
            "doubling" => {
                let c = self.nonneg("policy.budget.c", 0.0)?;
                let budget = match self.kind("policy.budget.kind", "sqrt") {
                    "constant" => BudgetShape::Constant(c),
                    "sqrt" => BudgetShape::Sqrt(c),
                    "linear" => BudgetShape::Linear(c),
                    other => {
                        return Err(self.err(
                            "policy.budget.kind",
                            format!("expected constant, sqrt or linear, got `{other}`"),
                        ))
                    }
                };
                let reset_decision = match self.kind("policy.reset_decision", "false") {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(self.err(
                            "policy.reset_decision",
                            format!("expected true or false, got `{other}`"),
                        ))
                    }
                };
                PolicySpec::Doubling {
                    budget,
                    reset_decision,
                }
            }
            other => {
                return Err(self.err(
                    "policy.kind",
                    format!("expected adaptive, constant, per_coordinate or doubling, got `{other}`"),
                ))
            }
        };

        let stream = match self.kind("stream.kind", "rademacher") {
            "rademacher" => StreamSpec::Rademacher {
                scale: self.f64_or("stream.L", 1.0)?,
                direction: self.list("stream.direction")?,
            },
            "regression" => StreamSpec::Regression {
                drift: self.nonneg("stream.drift", 0.0)?,
                noise: self.nonneg("stream.noise", 0.0)?,
            },
            "linear" => {
                let raw = self
                    .raw("stream.gradients")
                    .ok_or_else(|| self.err("stream.gradients", "required"))?;
                let gradients = raw
                    .split(';')
                    .map(parse_list)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|m| self.err("stream.gradients", m))?;
                StreamSpec::Linear { gradients }
            }
            "zero" => StreamSpec::Zero,
            other => {
                return Err(self.err(
                    "stream.kind",
                    format!("expected rademacher, regression, linear or zero, got `{other}`"),
                ))
            }
        };

        let comparator = match self.kind("comparator.kind", "segmented") {
            "segmented" => ComparatorSpec::Segmented {
                p: self.f64("comparator.p")?,
            },
            "ground_truth" => ComparatorSpec::GroundTruth,
            "brute_force" => ComparatorSpec::BruteForce {
                p: self.nonneg("comparator.p", 0.0)?,
                resolution: self.int("comparator.resolution")?.unwrap_or(21),
            },
            "prefix" => ComparatorSpec::Prefix,
            other => {
                return Err(self.err(
                    "comparator.kind",
                    format!("expected segmented, ground_truth, brute_force or prefix, got `{other}`"),
                ))
            }
        };

        let horizon = match &stream {
            StreamSpec::Linear { gradients } if self.raw("run.horizon").is_none() => {
                gradients.len() + self.int::<usize>("stream.zero_prefix")?.unwrap_or(0)
            }
            _ => self.int("run.horizon")?.unwrap_or(1000),
        };
        let cfg = ExperimentConfig {
            set,
            policy,
            stream,
            zero_prefix: self.int("stream.zero_prefix")?.unwrap_or(0),
            comparator,
            horizon,
            reps: self.int("run.reps")?.unwrap_or(1),
            seed: self.int("run.seed")?.unwrap_or(0),
            w1: self.list("run.w1")?,
            out: self.raw("run.out").map(PathBuf::from),
        };
        cfg.validate().map_err(|(key, msg)| self.err(key, msg))?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Assignments::parse(text)?.build()
    }

    pub fn dim(&self) -> usize {
        match &self.set {
            SetSpec::Ball { dim, .. } => *dim,
            SetSpec::Box { lower, .. } => lower.len(),
        }
    }

    pub fn build_set(&self) -> dynregret::Result<FeasibleSet> {
        match &self.set {
            SetSpec::Ball {
                dim,
                radius,
                center,
            } => match center {
                Some(c) => FeasibleSet::ball(Vector::new(c.clone())?, *radius),
                None => FeasibleSet::unit_ball(*dim, *radius),
            },
            SetSpec::Box { lower, upper } => {
                FeasibleSet::hyper_box(Vector::new(lower.clone())?, Vector::new(upper.clone())?)
            }
        }
    }

    /// The rate policy; a constant policy without `g_total` gets `fallback_energy`.
    pub fn build_policy(&self, diameter: f64, fallback_energy: f64) -> dynregret::Result<RatePolicy> {
        Ok(match &self.policy {
            PolicySpec::Adaptive { p_hat } => RatePolicy::Adaptive { p_hat: *p_hat },
            PolicySpec::Constant { p, g_total } => RatePolicy::ConstantOracle {
                path_budget: *p,
                horizon_energy: g_total.unwrap_or(fallback_energy),
            },
            PolicySpec::PerCoordinate { p_hat } => RatePolicy::PerCoordinate {
                p_hat: p_hat.clone(),
            },
            PolicySpec::Doubling {
                budget,
                reset_decision,
            } => RatePolicy::DoublingReset {
                budget: PathBudget::new(*budget, diameter)?,
                reset_decision: *reset_decision,
            },
        })
    }

    /// Checks everything the engine constructors would reject, naming the key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.horizon == 0 {
            return Err(("run.horizon", "must be at least 1".into()));
        }
        if self.reps == 0 {
            return Err(("run.reps", "must be at least 1".into()));
        }
        let set = self.build_set().map_err(|e| ("set", e.to_string()))?;
        let n = set.dim();
        if let Some(w1) = &self.w1 {
            if w1.len() != n {
                return Err(("run.w1", format!("expected {n} coordinates, got {}", w1.len())));
            }
        }
        let policy = self
            .build_policy(set.diameter(), 1.0)
            .map_err(|e| ("policy", e.to_string()))?;
        policy.validate(n).map_err(|e| ("policy", e.to_string()))?;
        if let PolicySpec::PerCoordinate { .. } = self.policy {
            if !matches!(self.set, SetSpec::Box { .. }) {
                return Err(("policy.kind", "per_coordinate needs set.kind = box".into()));
            }
        }
        if let PolicySpec::Constant { g_total: Some(g), .. } = self.policy {
            if g.is_nan() || g <= 0.0 {
                return Err(("policy.g_total", format!("must be positive, got {g}")));
            }
        }
        if self.zero_prefix >= self.horizon && self.stream != StreamSpec::Zero {
            return Err(("stream.zero_prefix", "must leave at least one round of the stream".into()));
        }
        let inner = self.horizon - self.zero_prefix.min(self.horizon);
        match &self.stream {
            StreamSpec::Rademacher { scale, direction } => {
                if scale.is_nan() || *scale <= 0.0 {
                    return Err(("stream.L", format!("must be positive, got {scale}")));
                }
                if let Some(u) = direction {
                    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if u.len() != n || (norm - 1.0).abs() > 1e-12 {
                        return Err(("stream.direction", format!("must be a unit vector of dimension {n}")));
                    }
                }
            }
            StreamSpec::Linear { gradients } => {
                if gradients.len() != inner {
                    return Err((
                        "stream.gradients",
                        format!("{} gradients given for {inner} rounds", gradients.len()),
                    ));
                }
                if gradients.iter().any(|g| g.len() != n) {
                    return Err(("stream.gradients", format!("every gradient needs {n} coordinates")));
                }
            }
            StreamSpec::Regression { .. } | StreamSpec::Zero => {}
        }
        match &self.comparator {
            ComparatorSpec::GroundTruth if !matches!(self.stream, StreamSpec::Regression { .. }) => {
                return Err(("comparator.kind", "ground_truth needs stream.kind = regression".into()));
            }
            ComparatorSpec::Prefix if !matches!(self.policy, PolicySpec::Doubling { .. }) => {
                return Err(("comparator.kind", "prefix needs policy.kind = doubling".into()));
            }
            ComparatorSpec::Segmented { p: Some(p) } if p.is_nan() || *p < 0.0 => {
                return Err(("comparator.p", format!("must be nonnegative, got {p}")));
            }
            _ => {}
        }
        Ok(())
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("expected a number, got `{s}`"))?;
    if !x.is_finite() {
        return Err(format!("must be finite, got `{s}`"));
    }
    Ok(x)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let out = s.split(',').map(parse_f64).collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err("expected a comma-separated list".into());
    }
    Ok(out)
}
