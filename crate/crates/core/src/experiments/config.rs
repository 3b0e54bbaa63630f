use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::HVariant;

/// Weights to sweep. `Auto` picks the default grid for the Hessian form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(untagged)]
pub enum BetaGrid {
    #[default]
    #[serde(skip)]
    Auto,
    Uniform {
        start: f64,
        end: f64,
        points: usize,
    },
    Values(Vec<f64>),
}

impl BetaGrid {
    pub fn uniform(start: f64, end: f64, points: usize) -> Self {
        BetaGrid::Uniform { start, end, points }
    }

    pub fn values(&self, preconditioned: bool) -> Vec<f64> {
        match self {
            BetaGrid::Auto if preconditioned => linspace(0.0, 1.0, 51),
            BetaGrid::Auto => linspace(0.0, 0.99, 50),
            BetaGrid::Uniform { start, end, points } => linspace(*start, *end, *points),
            BetaGrid::Values(v) => v.clone(),
        }
    }
}

/// `points` values from `start` to `end`, hitting both ends exactly.
pub fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points)
            .map(|k| {
                if k == points - 1 {
                    end
                } else {
                    start + (end - start) * k as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub ensemble: u64,
    pub placement: u64,
    pub rhs: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            ensemble: 1,
            placement: 2,
            rhs: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Radius of the circle carrying the grid.
    pub radius: f64,
    pub m: usize,
    pub p: usize,
    #[serde(skip_serializing_if = "is_auto")]
    pub beta_grid: BetaGrid,
    pub l0: f64,
    pub lens: f64,
    pub sigma2_b0: f64,
    pub sigma2_pf: f64,
    pub sigma2_r: f64,
    pub h_variant: HVariant,
    /// Observation times after the first, with identity propagators.
    pub window: usize,
    pub seeds: Seeds,
    pub preconditioned: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure_id: Option<String>,
}

fn is_auto(g: &BetaGrid) -> bool {
    *g == BetaGrid::Auto
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 500,
            radius: 1.0,
            m: 100,
            p: 100,
            beta_grid: BetaGrid::Auto,
            l0: 0.1,
            lens: 0.1,
            sigma2_b0: 1.0,
            sigma2_pf: 1.0,
            sigma2_r: 1.0,
            h_variant: HVariant::RandomPlacement,
            window: 0,
            seeds: Seeds::default(),
            preconditioned: false,
            figure_id: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn betas(&self) -> Vec<f64> {
        self.beta_grid.values(self.preconditioned)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad(format!("radius must be positive, got {}", self.radius));
        }
        if self.m < 2 || self.m >= self.n {
            return bad(format!("need 2 <= m < n, got m = {}, n = {}", self.m, self.n));
        }
        if self.p == 0 || self.p > self.n {
            return bad(format!("need 1 <= p <= n, got p = {}, n = {}", self.p, self.n));
        }
        if matches!(self.h_variant, HVariant::EveryNthPoint | HVariant::FivePointAverage)
            && !self.n.is_multiple_of(self.p)
        {
            return bad(format!("{} needs p to divide n, got p = {}, n = {}", self.h_variant, self.p, self.n));
        }
        for (name, v) in [("l0", self.l0), ("lens", self.lens)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("sigma2_b0", self.sigma2_b0),
            ("sigma2_pf", self.sigma2_pf),
            ("sigma2_r", self.sigma2_r),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let betas = self.betas();
        if betas.is_empty() {
            return bad("beta grid is empty".into());
        }
        if let Some(b) = betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return bad(format!("beta grid value {b} outside [0, 1]"));
        }
        if betas.windows(2).any(|w| w[0] > w[1]) {
            return bad("beta grid must be sorted".into());
        }
        Ok(())
    }
}

/// Command-line style overrides applied on top of a config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub p: Option<usize>,
    pub l0: Option<f64>,
    pub lens: Option<f64>,
    pub sigma2_b0: Option<f64>,
    pub sigma2_pf: Option<f64>,
    pub sigma2_r: Option<f64>,
    pub h_variant: Option<HVariant>,
    pub window: Option<usize>,
    pub beta: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub preconditioned: Option<bool>,
}

impl ConfigOverrides {
    /// A single `seed` shifts all three streams together, keeping them distinct.
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { cfg.$f = v; })* };
        }
        set!(n, m, p, l0, lens, sigma2_b0, sigma2_pf, sigma2_r, h_variant, window, preconditioned);
        if let Some(b) = &self.beta {
            cfg.beta_grid = BetaGrid::Values(b.clone());
        }
        if let Some(s) = self.seed {
            cfg.seeds = Seeds {
                ensemble: s,
                placement: s.wrapping_add(1),
                rhs: s.wrapping_add(2),
            };
        }
    }
}
