//! Declarative scorer configuration and its compact string form.
//!
//! The string form is `kind[:key=value]*`, e.g.
//! `contrast:gamma=0.1:weighting=mean:base=10`. `Display` emits the
//! canonical form, which doubles as the scorer id in score tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::{InvariantError, Role};

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_PROB_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Single,
    EnsembleAvg,
    EnsembleWeighted,
    Contrast,
    CdScore,
    Division,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::Single => "single",
            ScorerKind::EnsembleAvg => "ensemble_avg",
            ScorerKind::EnsembleWeighted => "ensemble_weighted",
            ScorerKind::Contrast => "contrast",
            ScorerKind::CdScore => "cd_score",
            ScorerKind::Division => "division",
        }
    }

    /// True for every formula that reads both models.
    pub fn needs_pair(self) -> bool {
        !matches!(self, ScorerKind::Single)
    }
}

impl FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "single" => ScorerKind::Single,
            "ensemble_avg" | "ensemble" => ScorerKind::EnsembleAvg,
            "ensemble_weighted" => ScorerKind::EnsembleWeighted,
            "contrast" => ScorerKind::Contrast,
            "cd_score" | "cd" => ScorerKind::CdScore,
            "division" => ScorerKind::Division,
            other => return Err(format!("unknown scorer kind `{other}`")),
        })
    }
}

/// How per-token log terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    Natural,
    #[default]
    Ten,
}

impl LogBase {
    /// Converts a natural-log quantity into this base.
    pub fn from_natural(self, value: f64) -> f64 {
        match self {
            LogBase::Natural => value,
            LogBase::Ten => value / std::f64::consts::LN_10,
        }
    }
}

/// Which formula to apply, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    /// Contrast scaling factor, or expert weight for the weighted ensemble.
    pub gamma: f64,
    pub weighting: Weighting,
    pub log_base: LogBase,
    pub prob_floor: f64,
    /// Head size for cd_score.
    pub top_k: Option<usize>,
    /// Sequence read by the single-model scorer.
    #[serde(default = "default_role")]
    pub role: Role,
    /// Natural-log penalty for tokens outside the expert head (cd_score);
    /// `None` means `ln(prob_floor)`.
    #[serde(default)]
    pub cd_penalty: Option<f64>,
}

fn default_role() -> Role {
    Role::Expert
}

impl ScorerSpec {
    fn base(kind: ScorerKind, gamma: f64) -> Self {
        Self {
            kind,
            gamma,
            weighting: Weighting::Mean,
            log_base: LogBase::Ten,
            prob_floor: DEFAULT_PROB_FLOOR,
            top_k: None,
            role: Role::Expert,
            cd_penalty: None,
        }
    }

    pub fn single(role: Role) -> Self {
        Self {
            role,
            ..Self::base(ScorerKind::Single, 0.0)
        }
    }

    pub fn contrast(gamma: f64) -> Self {
        Self::base(ScorerKind::Contrast, gamma)
    }

    pub fn ensemble_avg() -> Self {
        Self::base(ScorerKind::EnsembleAvg, 0.5)
    }

    pub fn ensemble_weighted(gamma: f64) -> Self {
        Self::base(ScorerKind::EnsembleWeighted, gamma)
    }

    pub fn cd_score(top_k: usize) -> Self {
        Self {
            top_k: Some(top_k),
            ..Self::base(ScorerKind::CdScore, 0.0)
        }
    }

    pub fn division() -> Self {
        Self::base(ScorerKind::Division, 0.0)
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn with_base(mut self, log_base: LogBase) -> Self {
        self.log_base = log_base;
        self
    }

    pub fn with_floor(mut self, prob_floor: f64) -> Self {
        self.prob_floor = prob_floor;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(InvariantError::Gamma(self.gamma));
        }
        if !(self.prob_floor.is_finite() && self.prob_floor > 0.0) {
            return Err(InvariantError::ProbFloor(self.prob_floor));
        }
        let wants_top_k = self.kind == ScorerKind::CdScore;
        if wants_top_k != matches!(self.top_k, Some(k) if k > 0) {
            return Err(InvariantError::TopK);
        }
        Ok(())
    }

    /// Canonical id used as the score-table column name.
    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Natural-log penalty for tokens outside the expert head.
    pub fn cd_penalty_ln(&self) -> f64 {
        self.cd_penalty.unwrap_or_else(|| self.prob_floor.ln())
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.as_str())?;
        match self.kind {
            ScorerKind::Single => write!(f, ":role={}", self.role)?,
            ScorerKind::Contrast | ScorerKind::EnsembleWeighted => write!(f, ":gamma={}", self.gamma)?,
            ScorerKind::CdScore => {
                write!(f, ":top_k={}", self.top_k.unwrap_or(0))?;
                if let Some(p) = self.cd_penalty {
                    write!(f, ":penalty={p}")?;
                }
            }
            ScorerKind::EnsembleAvg | ScorerKind::Division => {}
        }
        let weighting = match self.weighting {
            Weighting::Mean => "mean",
            Weighting::Sum => "sum",
        };
        let base = match self.log_base {
            LogBase::Ten => "10",
            LogBase::Natural => "e",
        };
        write!(f, ":weighting={weighting}:base={base}:floor={:e}", self.prob_floor)
    }
}

impl FromStr for ScorerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default().trim();
        // `single-expert` / `single-amateur` shorthand.
        let (kind, role) = match head.split_once('-') {
            Some(("single", role)) => (ScorerKind::Single, Some(role.parse::<Role>()?)),
            _ => (head.parse::<ScorerKind>()?, None),
        };
        let mut spec = match kind {
            ScorerKind::Single => ScorerSpec::single(role.unwrap_or(Role::Expert)),
            ScorerKind::Contrast => ScorerSpec::contrast(DEFAULT_GAMMA),
            ScorerKind::EnsembleAvg => ScorerSpec::ensemble_avg(),
            ScorerKind::EnsembleWeighted => ScorerSpec::ensemble_weighted(0.5),
            ScorerKind::CdScore => ScorerSpec::cd_score(10),
            ScorerKind::Division => ScorerSpec::division(),
        };
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
            let v = v.trim();
            let num = |v: &str| -> Result<f64, String> {
                v.parse::<f64>()
                    .map_err(|_| format!("`{k}` expects a number, got `{v}`"))
            };
            match k.trim() {
                "gamma" => spec.gamma = num(v)?,
                "weighting" => {
                    spec.weighting = match v {
                        "mean" => Weighting::Mean,
                        "sum" => Weighting::Sum,
                        _ => return Err(format!("unknown weighting `{v}`")),
                    }
                }
                "base" => {
                    spec.log_base = match v {
                        "10" | "ten" => LogBase::Ten,
                        "e" | "natural" | "ln" => LogBase::Natural,
                        _ => return Err(format!("unknown log base `{v}`")),
                    }
                }
                "floor" => spec.prob_floor = num(v)?,
                "top_k" => {
                    spec.top_k = Some(
                        v.parse::<usize>()
                            .map_err(|_| format!("`top_k` expects an integer, got `{v}`"))?,
                    )
                }
                "role" => spec.role = v.parse()?,
                "penalty" => spec.cd_penalty = Some(num(v)?),
                other => return Err(format!("unknown scorer option `{other}`")),
            }
        }
        if kind == ScorerKind::EnsembleAvg {
            spec.gamma = 0.5;
        }
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}
