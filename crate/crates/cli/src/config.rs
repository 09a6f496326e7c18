//! Analysis configuration: flat JSON with decimal-string numerics, parsed at
//! full double precision and validated before any computation runs.

use std::fmt;

use serde::{Deserialize, Serialize};
use solenoid_core::foliation::FoliationFrame;
use solenoid_core::forms::DEFAULT_DIVISOR_FLOOR;

pub const DEFAULT_RESIDUAL_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_AGREEMENT_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_DECAY: f64 = 6.0;
pub const DEFAULT_WITNESS_COUNT: usize = 8;
pub const DEFAULT_BOX_COUNT: usize = 4;
pub const DEFAULT_RESOLUTION: usize = 1024;
pub const DEFAULT_RANDOM_FORMS: usize = 10;
pub const DEFAULT_MAX_FREQUENCY: f64 = 8.0;

/// The named analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Harmonic,
    Decompose,
    Cohomology,
    Classify,
    Witnesses,
    RsCurrent,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Harmonic => "harmonic",
            Analysis::Decompose => "decompose",
            Analysis::Cohomology => "cohomology",
            Analysis::Classify => "classify",
            Analysis::Witnesses => "witnesses",
            Analysis::RsCurrent => "rs-current",
        }
    }

    /// Analyses driven by a single direction `α` (the one raw frame vector).
    fn needs_direction(self) -> bool {
        matches!(
            self,
            Analysis::Cohomology | Analysis::Classify | Analysis::Witnesses | Analysis::RsCurrent
        )
    }
}

fn default_true() -> bool {
    true
}

/// Raw configuration as read from disk. Every number is a decimal string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Raw leaf basis vectors; for direction-driven analyses, the single
    /// vector is `α` itself (not normalized).
    pub frame: Vec<Vec<String>>,
    #[serde(default = "default_true")]
    pub minimality_asserted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<String>,
    /// Not echoed into reports, so runs into different directories compare equal.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divisor_floor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tolerance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement_tolerance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_count: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_count: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<String>,
    /// 1-based ambient axes `i` whose coordinate forms `dx_i` are evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate_axes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_forms: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_frequency: Option<String>,
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// One failed precondition, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// A configuration with every numeric field parsed and checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw_frame: Vec<Vec<f64>>,
    pub frame: FoliationFrame,
    pub minimality_asserted: bool,
    pub radius: f64,
    pub seed: u64,
    pub divisor_floor: f64,
    pub residual_tolerance: f64,
    pub agreement_tolerance: f64,
    pub decay: f64,
    pub witness_count: usize,
    pub box_count: usize,
    pub resolution: usize,
    /// 1-based.
    pub coordinate_axes: Vec<usize>,
    pub random_forms: usize,
    pub max_frequency: f64,
}

impl Resolved {
    /// The direction `α` of a one-dimensional frame, as given.
    pub fn alpha(&self) -> &[f64] {
        &self.raw_frame[0]
    }
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn real(&mut self, field: &str, text: &str) -> Option<f64> {
        match text.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Some(x),
            Ok(_) => {
                self.fail(field, format!("'{text}' is not finite"));
                None
            }
            Err(_) => {
                self.fail(field, format!("'{text}' is not a decimal number"));
                None
            }
        }
    }

    fn real_or(&mut self, field: &str, text: &Option<String>, default: f64) -> Option<f64> {
        match text {
            Some(t) => self.real(field, t),
            None => Some(default),
        }
    }

    fn positive_or(&mut self, field: &str, text: &Option<String>, default: f64) -> Option<f64> {
        let x = self.real_or(field, text, default)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.fail(field, format!("must be positive, got {x}"));
            None
        }
    }

    fn count_or(&mut self, field: &str, text: &Option<String>, default: usize) -> Option<usize> {
        match text {
            None => Some(default),
            Some(t) => match t.trim().parse::<usize>() {
                Ok(v) => Some(v),
                Err(_) => {
                    self.fail(field, format!("'{t}' is not a nonnegative integer"));
                    None
                }
            },
        }
    }

    fn at_least(&mut self, field: &str, value: Option<usize>, min: usize) -> Option<usize> {
        let v = value?;
        if v >= min {
            Some(v)
        } else {
            self.fail(field, format!("must be at least {min}, got {v}"));
            None
        }
    }
}

/// Every violated precondition of `analysis` under `config`; empty iff the
/// configuration is runnable.
pub fn validate_config(config: &AnalysisConfig, analysis: Analysis) -> Vec<Violation> {
    match resolve(config, analysis) {
        Ok(_) => Vec::new(),
        Err(v) => v,
    }
}

pub fn resolve(config: &AnalysisConfig, analysis: Analysis) -> Result<Resolved, Vec<Violation>> {
    let mut c = Checker {
        violations: Vec::new(),
    };
    let frame = resolve_frame(&mut c, config, analysis);
    let n = frame.as_ref().map(|(_, f)| f.ambient_dim());

    let radius = match &config.truncation_radius {
        None => {
            c.fail("truncationRadius", "required (or pass --radius)");
            None
        }
        Some(t) => c.real("truncationRadius", t).and_then(|r| {
            if r > 0.0 {
                Some(r)
            } else {
                c.fail("truncationRadius", format!("must be positive, got {r}"));
                None
            }
        }),
    };
    let seed = match &config.seed {
        None => Some(0),
        Some(t) => match t.trim().parse::<u64>() {
            Ok(s) => Some(s),
            Err(_) => {
                c.fail("seed", format!("'{t}' is not an unsigned 64-bit integer"));
                None
            }
        },
    };
    let divisor_floor = c.positive_or("divisorFloor", &config.divisor_floor, DEFAULT_DIVISOR_FLOOR);
    let residual_tolerance = c.positive_or(
        "residualTolerance",
        &config.residual_tolerance,
        DEFAULT_RESIDUAL_TOLERANCE,
    );
    let agreement_tolerance = c.positive_or(
        "agreementTolerance",
        &config.agreement_tolerance,
        DEFAULT_AGREEMENT_TOLERANCE,
    );

    let decay = c.real_or("decay", &config.decay, DEFAULT_DECAY).and_then(|r| {
        match (analysis, n) {
            // The solution of the cohomological equation loses n + τ̂ ≥ n
            // powers; the decay fit needs at least one more.
            (Analysis::Cohomology, Some(n)) if r <= n as f64 + 1.0 => {
                c.fail("decay", format!("must exceed n + 1 = {}, got {r}", n + 1));
                None
            }
            _ if r < 0.0 => {
                c.fail("decay", format!("must be nonnegative, got {r}"));
                None
            }
            _ => Some(r),
        }
    });

    let witness_count = c.count_or("witnessCount", &config.witness_count, DEFAULT_WITNESS_COUNT);
    let witness_count = c.at_least("witnessCount", witness_count, 1);
    let box_count = c.count_or("boxCount", &config.box_count, DEFAULT_BOX_COUNT);
    let box_count = c.at_least("boxCount", box_count, 2);
    let resolution = c
        .count_or("resolution", &config.resolution, DEFAULT_RESOLUTION)
        .and_then(|r| {
            if r >= 16 && r % 16 == 0 {
                Some(r)
            } else {
                c.fail("resolution", format!("must be a positive multiple of 16, got {r}"));
                None
            }
        });
    let random_forms = c.count_or("randomForms", &config.random_forms, DEFAULT_RANDOM_FORMS);
    let max_frequency = c
        .real_or("maxFrequency", &config.max_frequency, DEFAULT_MAX_FREQUENCY)
        .and_then(|f| {
            if f >= 1.0 {
                Some(f)
            } else {
                c.fail("maxFrequency", format!("must be at least 1, got {f}"));
                None
            }
        });

    let coordinate_axes = match (&config.coordinate_axes, n) {
        (_, None) => None,
        (None, Some(n)) => Some((1..=n).collect()),
        (Some(list), Some(n)) => {
            let mut axes = Vec::new();
            let mut ok = true;
            for (i, t) in list.iter().enumerate() {
                let field = format!("coordinateAxes[{i}]");
                match t.trim().parse::<usize>() {
                    Ok(a) if (1..=n).contains(&a) => axes.push(a),
                    _ => {
                        c.fail(&field, format!("'{t}' is not an axis in 1..={n}"));
                        ok = false;
                    }
                }
            }
            ok.then_some(axes)
        }
    };

    if !c.violations.is_empty() {
        return Err(c.violations);
    }
    let (raw_frame, frame) = frame.expect("frame resolved when no violations");
    Ok(Resolved {
        raw_frame,
        frame,
        minimality_asserted: config.minimality_asserted,
        radius: radius.unwrap(),
        seed: seed.unwrap(),
        divisor_floor: divisor_floor.unwrap(),
        residual_tolerance: residual_tolerance.unwrap(),
        agreement_tolerance: agreement_tolerance.unwrap(),
        decay: decay.unwrap(),
        witness_count: witness_count.unwrap(),
        box_count: box_count.unwrap(),
        resolution: resolution.unwrap(),
        coordinate_axes: coordinate_axes.unwrap(),
        random_forms: random_forms.unwrap(),
        max_frequency: max_frequency.unwrap(),
    })
}

fn resolve_frame(
    c: &mut Checker,
    config: &AnalysisConfig,
    analysis: Analysis,
) -> Option<(Vec<Vec<f64>>, FoliationFrame)> {
    if config.frame.is_empty() {
        c.fail("frame", "at least one basis vector is required");
        return None;
    }
    let n = config.frame[0].len();
    let k = config.frame.len();
    let before = c.violations.len();
    let mut raw = Vec::with_capacity(k);
    for (i, v) in config.frame.iter().enumerate() {
        if v.len() != n {
            c.fail(
                &format!("frame[{i}]"),
                format!("has {} entries, expected {n} like frame[0]", v.len()),
            );
            continue;
        }
        let row: Vec<f64> = v
            .iter()
            .enumerate()
            .filter_map(|(j, t)| c.real(&format!("frame[{i}][{j}]"), t))
            .collect();
        raw.push(row);
    }
    if c.violations.len() > before {
        return None;
    }
    if k >= n {
        c.fail(
            "frame",
            format!("leaf dimension k = {k} must satisfy k < n = {n}"),
        );
        return None;
    }
    if analysis.needs_direction() && k != 1 {
        c.fail(
            "frame",
            format!("{} needs a single direction vector α, got k = {k}", analysis.name()),
        );
        return None;
    }
    if analysis == Analysis::RsCurrent && n != 2 {
        c.fail(
            "frame",
            format!("rs-current builds flow boxes on T², got n = {n}"),
        );
        return None;
    }
    match FoliationFrame::build(&raw) {
        Ok(f) => Some((raw, f.with_minimality_asserted(config.minimality_asserted))),
        Err(e) => {
            c.fail("frame", e.to_string());
            None
        }
    }
}
