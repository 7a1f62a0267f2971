//! Monte-Carlo evaluation over independent episodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::harness::episode::{run_episode, EpisodeRngs, Method};
use crate::rng::Purpose;

/// Aggregates for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: String,
    /// Power budget `P` the row was evaluated at (W).
    pub power: f64,
    /// bits/s/Hz
    pub rate_mean: f64,
    /// 95 % normal half-width `1.96 s / √n` over realizations.
    pub rate_ci: f64,
    /// rad²
    pub crlb_theta_mean: f64,
    /// m²
    pub crlb_d_mean: f64,
    pub crlb_theta_sqrt: f64,
    pub crlb_d_sqrt: f64,
    /// Mean `‖W‖_F²` of the applied beams.
    pub power_mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Effective configuration, `key=value` pairs in section order.
    pub config: Vec<(String, String)>,
    pub seed: u64,
    pub methods: Vec<MethodStats>,
}

impl EvalReport {
    pub fn get(&self, method: &str) -> Option<&MethodStats> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Per-episode means for one method.
#[derive(Debug, Clone, Copy)]
struct EpisodeMeans {
    rate: f64,
    crlb_theta: f64,
    crlb_d: f64,
    power: f64,
}

fn mean_and_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Runs `n_realizations` episodes per method. Realization `r` uses the
/// same scenario stream for every method; per-realization means are
/// collected in realization order and summed sequentially, so the report
/// does not depend on scheduling.
pub fn monte_carlo_eval(config: &SimConfig, methods: &[Method<'_>], n_realizations: usize, seed: u64) -> Result<EvalReport> {
    if n_realizations == 0 {
        return Err(Error::InvalidConfig("need at least one realization".into()));
    }
    let per_real: Vec<Vec<EpisodeMeans>> = (0..n_realizations as u64)
        .into_par_iter()
        .map(|r| {
            methods
                .iter()
                .map(|&m| {
                    let t = run_episode(config, m, &mut EpisodeRngs::new(seed, Purpose::Eval, r))?;
                    Ok(EpisodeMeans {
                        rate: t.mean_rate(),
                        crlb_theta: t.mean_crlb_theta(),
                        crlb_d: t.mean_crlb_d(),
                        power: t.mean_power(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let methods = methods
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let col = |f: fn(&EpisodeMeans) -> f64| per_real.iter().map(|r| f(&r[i])).collect::<Vec<_>>();
            let (rate_mean, rate_ci) = mean_and_ci(&col(|e| e.rate));
            let ct = mean_and_ci(&col(|e| e.crlb_theta)).0;
            let cd = mean_and_ci(&col(|e| e.crlb_d)).0;
            MethodStats {
                method: m.name().to_string(),
                power: config.power_budget,
                rate_mean,
                rate_ci,
                crlb_theta_mean: ct,
                crlb_d_mean: cd,
                crlb_theta_sqrt: ct.sqrt(),
                crlb_d_sqrt: cd.sqrt(),
                power_mean: mean_and_ci(&col(|e| e.power)).0,
                n: n_realizations,
            }
        })
        .collect();
    Ok(EvalReport {
        config: config.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        seed,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_realization_equals_episode() {
        let cfg = SimConfig {
            n_slots: 15,
            ..SimConfig::default()
        };
        let rep = monte_carlo_eval(&cfg, &[Method::Random], 1, 3).unwrap();
        let t = run_episode(&cfg, Method::Random, &mut EpisodeRngs::new(3, Purpose::Eval, 0)).unwrap();
        let s = &rep.methods[0];
        assert_eq!(s.rate_mean, t.mean_rate());
        assert_eq!(s.crlb_d_mean, t.mean_crlb_d());
        assert_eq!(s.rate_ci, 0.0);
        assert_eq!(s.n, 1);
    }

    #[test]
    fn random_far_below_genie() {
        let cfg = SimConfig {
            n_slots: 20,
            ..SimConfig::default()
        };
        let rep = monte_carlo_eval(&cfg, &[Method::Random, Method::Genie], 100, 4).unwrap();
        let (r, g) = (rep.get("random").unwrap(), rep.get("genie").unwrap());
        assert!(r.rate_mean > 0.0);
        assert!(r.rate_mean < 0.5 * g.rate_mean, "{} vs {}", r.rate_mean, g.rate_mean);
    }

    #[test]
    fn half_width_shrinks_like_root_n() {
        let cfg = SimConfig {
            n_slots: 10,
            ..SimConfig::default()
        };
        let a = monte_carlo_eval(&cfg, &[Method::Random], 200, 5).unwrap().methods[0].rate_ci;
        let b = monte_carlo_eval(&cfg, &[Method::Random], 400, 5).unwrap().methods[0].rate_ci;
        let ratio = b / a;
        assert!((ratio - 1.0 / 2f64.sqrt()).abs() < 0.2 / 2f64.sqrt(), "{ratio}");
    }
}
