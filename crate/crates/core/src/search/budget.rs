use std::ops::RangeInclusive;
use std::str::FromStr;

use crate::arch::{ArchSpec, EvalConfig};
use crate::cost::{cost_report, propagate_shapes};
use crate::error::{Error, Result};
use crate::scaling::{ScaledConfig, ScalingTransform};

/// Steps per unit of width ratio; width candidates are `i / WIDTH_STEPS`.
const WIDTH_STEPS: u64 = 64;

const MAX_BISECTION_STEPS: u32 = 64;

/// Knobs along which FLOPs are monotone non-decreasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Knob {
    Width,
    Hidden,
    Mlp,
    Depth,
    Resolution,
}

impl FromStr for Knob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "width" => Knob::Width,
            "hidden" => Knob::Hidden,
            "mlp" => Knob::Mlp,
            "depth" => Knob::Depth,
            "resolution" | "res" | "N" => Knob::Resolution,
            other => return Err(Error::InvalidArgument(format!("unknown knob `{other}`"))),
        })
    }
}

impl Knob {
    /// Transform for discrete knob position `i`.
    fn transform(self, spec: &ArchSpec, i: u64) -> ScalingTransform {
        let v = u32::try_from(i).unwrap_or(u32::MAX);
        match self {
            Knob::Width => ScalingTransform::width(i as f64 / WIDTH_STEPS as f64),
            Knob::Hidden => {
                let k = match spec {
                    ArchSpec::Vit(s) => s.num_heads.max(1),
                    ArchSpec::Cnn(_) => 1,
                };
                ScalingTransform::hidden(v.saturating_mul(k))
            }
            Knob::Mlp => ScalingTransform::Mlp { mlp_dim: v },
            Knob::Depth => ScalingTransform::Depth { depth: v },
            Knob::Resolution => ScalingTransform::Resolution { resolution: v },
        }
    }

    /// Knob value in its natural unit for position `x` (possibly fractional).
    fn natural(self, spec: &ArchSpec, x: f64) -> f64 {
        match (self, spec) {
            (Knob::Width, _) => x / WIDTH_STEPS as f64,
            (Knob::Hidden, ArchSpec::Vit(s)) => x * f64::from(s.num_heads.max(1)),
            _ => x,
        }
    }

    /// Default search range of knob positions.
    pub fn default_range(self, spec: &ArchSpec, eval: &EvalConfig) -> RangeInclusive<u64> {
        match (self, spec) {
            (Knob::Width, _) => 1..=4 * WIDTH_STEPS,
            (Knob::Hidden, ArchSpec::Vit(s)) => {
                1..=8 * u64::from(s.hidden_dim / s.num_heads.max(1)).max(1)
            }
            (Knob::Mlp, ArchSpec::Vit(s)) => 1..=16 * u64::from(s.mlp_dim).max(1),
            (Knob::Depth, ArchSpec::Vit(s)) => 1..=256.max(4 * u64::from(s.depth)),
            (Knob::Resolution, _) => {
                let base = eval.resolution_for(spec).unwrap_or(224);
                1..=256.max(4 * u64::from(base))
            }
            _ => 1..=1,
        }
    }
}

/// Outcome of a budget match.
#[derive(Debug, Clone)]
pub struct BudgetMatch {
    pub knob: Knob,
    pub config: ScaledConfig,
    /// Knob value of `config` in natural units (ratio, D, D_MLP, n, N).
    pub value: f64,
    pub flops: u128,
    pub target: u128,
    /// `|flops − target|`.
    pub deviation: u128,
    /// Linear interpolation of the knob between the bracketing configs.
    pub relaxed_value: f64,
    pub within_tolerance: bool,
    /// Present when a tolerance was requested and not met: the configs just
    /// below and just above the target, with their FLOPs.
    pub bracket: Option<[(ScaledConfig, u128); 2]>,
}

pub fn match_flops_budget(
    base: &ArchSpec,
    eval: &EvalConfig,
    knob: Knob,
    target: u128,
    tol: Option<f64>,
) -> Result<BudgetMatch> {
    let range = knob.default_range(base, eval);
    match_flops_budget_in(base, eval, knob, target, tol, range)
}

/// Bisects the monotone knob over `range` for the position whose FLOPs are
/// closest to `target`. `tol` is relative to the target.
pub fn match_flops_budget_in(
    base: &ArchSpec,
    eval: &EvalConfig,
    knob: Knob,
    target: u128,
    tol: Option<f64>,
    range: RangeInclusive<u64>,
) -> Result<BudgetMatch> {
    if let Some(t) = tol {
        if t.is_nan() || t < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be ≥ 0 (got {t})"
            )));
        }
    }
    let probe = ScalingTransform::Hybrid(vec![knob.transform(base, *range.start())]);
    // Surface unsupported knob/architecture pairs before searching.
    if let Err(e @ Error::UnsupportedTransform { .. }) = probe.apply(base, eval) {
        return Err(e);
    }

    let eval_at = |i: u64| -> Result<(ScaledConfig, u128)> {
        let cfg = ScaledConfig::new(base, eval, vec![knob.transform(base, i)])?;
        propagate_shapes(&cfg.spec, &cfg.eval)?;
        let flops = cost_report(&cfg.spec, &cfg.eval)?.flops;
        Ok((cfg, flops))
    };

    let (mut lo, hi) = (*range.start(), *range.end());
    if lo > hi {
        return Err(Error::InvalidArgument("empty knob range".into()));
    }
    // Small CNN resolutions can be infeasible; start at the first feasible one.
    let lo_eval = loop {
        match eval_at(lo) {
            Ok(v) => break v,
            Err(Error::InfeasibleResolution { .. }) if knob == Knob::Resolution && lo < hi => {
                lo += 1
            }
            Err(e) => return Err(e),
        }
    };
    let hi_eval = eval_at(hi)?;
    let within = |flops: u128| match tol {
        Some(t) => (flops.abs_diff(target) as f64) <= t * target as f64,
        None => flops == target,
    };
    if target < lo_eval.1 && !within(lo_eval.1) || target > hi_eval.1 && !within(hi_eval.1) {
        return Err(Error::TargetUnreachable {
            target,
            min: lo_eval.1,
            max: hi_eval.1,
        });
    }

    let flops_at = |i: u64| -> Result<u128> {
        if i == lo {
            Ok(lo_eval.1)
        } else if i == hi {
            Ok(hi_eval.1)
        } else {
            eval_at(i).map(|(_, f)| f)
        }
    };
    // Smallest position in [a, b] whose FLOPs reach `goal`, given f(b) ≥ goal.
    let first_reaching = |goal: u128, mut a: u64, mut b: u64| -> Result<u64> {
        let mut steps = 0;
        while a < b {
            steps += 1;
            debug_assert!(steps <= MAX_BISECTION_STEPS);
            let mid = a + (b - a) / 2;
            if flops_at(mid)? >= goal {
                b = mid;
            } else {
                a = mid + 1;
            }
        }
        Ok(a)
    };

    let upper = if target <= lo_eval.1 {
        lo
    } else if target > hi_eval.1 {
        hi
    } else {
        first_reaching(target, lo, hi)?
    };
    let (upper_cfg, upper_flops) = if upper == lo {
        lo_eval.clone()
    } else if upper == hi {
        hi_eval.clone()
    } else {
        eval_at(upper)?
    };
    let lower = if upper > lo && upper_flops >= target {
        // Canonical representative of the plateau just below the target.
        let below = flops_at(upper - 1)?;
        Some(first_reaching(below, lo, upper - 1)?)
    } else {
        None
    };

    let lower_eval = match lower {
        Some(i) => Some((i, eval_at(i)?)),
        None => None,
    };
    let (pos, (cfg, flops)) = match &lower_eval {
        Some((i, (lcfg, lflops))) if lflops.abs_diff(target) < upper_flops.abs_diff(target) => {
            (*i, (lcfg.clone(), *lflops))
        }
        _ => (upper, (upper_cfg.clone(), upper_flops)),
    };

    let relaxed = match &lower_eval {
        // Interpolate across the single step where FLOPs cross the target.
        Some((_, (_, lf))) if upper_flops > *lf && target >= *lf && target <= upper_flops => {
            (upper - 1) as f64 + (target - lf) as f64 / (upper_flops - lf) as f64
        }
        _ => pos as f64,
    };

    let within_tolerance = within(flops);
    let bracket = match (tol, &lower_eval) {
        (Some(_), Some((_, (lcfg, lf)))) if !within_tolerance => {
            Some([(lcfg.clone(), *lf), (upper_cfg, upper_flops)])
        }
        _ => None,
    };

    Ok(BudgetMatch {
        knob,
        value: knob.natural(base, pos as f64),
        config: cfg,
        flops,
        target,
        deviation: flops.abs_diff(target),
        relaxed_value: knob.natural(base, relaxed),
        within_tolerance,
        bracket,
    })
}
