//! Evaluation across a grid of power budgets.

use serde::{Deserialize, Serialize};

use crate::baselines::NaiveNet;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::harness::episode::Method;
use crate::harness::eval::{monte_carlo_eval, MethodStats};
use crate::nn::hcl::HclNet;

pub const DEFAULT_POWER_GRID: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

pub type SweepRow = MethodStats;

/// Whether learned models are retrained at each power point or one model
/// trained at the configured budget serves the whole grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Reuse,
    Retrain,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reuse" => Ok(SweepMode::Reuse),
            "retrain" => Ok(SweepMode::Retrain),
            _ => Err(Error::InvalidConfig(format!("unknown sweep mode `{s}`"))),
        }
    }
}

/// Learned models available at one power point.
#[derive(Debug, Clone, Default)]
pub struct LearnedModels {
    pub hcl: Option<HclNet>,
    pub naive: Option<NaiveNet>,
}

/// One evaluation per grid point. `models` supplies the learned networks
/// for the configuration of each point (with `power_budget` set); rows are
/// ordered by power, then genie, HCL-Net, naive DL, random.
pub fn power_sweep<F>(
    config: &SimConfig,
    grid: &[f64],
    n_realizations: usize,
    seed: u64,
    project: bool,
    mut models: F,
) -> Result<Vec<SweepRow>>
where
    F: FnMut(&SimConfig) -> Result<LearnedModels>,
{
    let mut rows = Vec::with_capacity(grid.len() * 4);
    for &p in grid {
        let cfg = SimConfig {
            power_budget: p,
            ..config.clone()
        };
        cfg.validate()?;
        let learned = models(&cfg)?;
        let mut methods = vec![Method::Genie];
        if let Some(net) = &learned.hcl {
            methods.push(Method::Hcl { net, project });
        }
        if let Some(net) = &learned.naive {
            methods.push(Method::NaiveDl { net, project });
        }
        methods.push(Method::Random);
        rows.extend(monte_carlo_eval(&cfg, &methods, n_realizations, seed)?.methods);
    }
    Ok(rows)
}
