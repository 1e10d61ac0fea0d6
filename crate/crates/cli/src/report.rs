//! Verdicts and the structured run report.

use msv_core::estimators::{CurvePoint, DivergenceFlag, MomentTable, ScalingCurve};
use msv_core::scalar::fmt17;
use msv_core::theory::{Branch, ScalingValue, TheoryModel};
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, Model};
use crate::pipeline::{Outputs, StationaryTail};

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

/// A JSON number with 17 significant digits; non-finite values become the
/// strings `inf`, `-inf` and `nan`.
pub fn num(x: f64) -> Value {
    let text = fmt17(x);
    match text.parse::<serde_json::Number>() {
        Ok(n) if x.is_finite() => Value::Number(n),
        _ => Value::String(text),
    }
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn scaling_value(v: &ScalingValue<f64>) -> Value {
    match v {
        ScalingValue::Finite { value, .. } => num(*value),
        ScalingValue::NegInfinite => Value::String("-inf".into()),
    }
}

/// Rewrites every float in `v` with 17 significant digits.
fn normalize_floats(v: &mut Value) {
    match v {
        Value::Number(n) if !n.is_i64() && !n.is_u64() => {
            if let Some(x) = n.as_f64() {
                *v = num(x);
            }
        }
        Value::Array(a) => a.iter_mut().for_each(normalize_floats),
        Value::Object(o) => o.values_mut().for_each(normalize_floats),
        _ => {}
    }
}

fn point_verdict(cfg: &ExperimentConfig, p: &CurvePoint<f64>) -> Option<Verdict> {
    let theory = p.theory?;
    let check = format!("A({})", p.q);
    if p.near_threshold {
        return Some(Verdict { check, pass: true, detail: "skipped: order within 0.05 of a threshold".into() });
    }
    let flag = p.flag.map_or("unchecked", |f| f.as_str());
    Some(match theory {
        ScalingValue::NegInfinite => Verdict {
            check,
            pass: p.flag == Some(DivergenceFlag::Divergent),
            detail: format!("theory -inf, divergence flag {flag}"),
        },
        ScalingValue::Finite { value, branch } => {
            let tol = match branch {
                Branch::Multiscaling => cfg.checks.multiscaling_tolerance,
                _ => cfg.checks.diffusive_tolerance,
            };
            match &p.fit {
                None => Verdict { check, pass: false, detail: format!("no fit (flag {flag}), theory {value}") },
                Some(f) => Verdict {
                    check,
                    pass: (f.slope - value).abs() <= tol && f.r_squared >= cfg.checks.min_r2,
                    detail: format!(
                        "A_hat = {:.4} ± {:.4}, theory {value:.4} ({branch}), tolerance {tol}, R² = {:.5} (min {})",
                        f.slope, f.stderr, f.r_squared, cfg.checks.min_r2
                    ),
                },
            }
        }
    })
}

fn tail_verdict(cfg: &ExperimentConfig, tail: &StationaryTail) -> Option<Verdict> {
    let theory = tail.theory?;
    let h = tail.hill.tail_index;
    let tol = cfg.checks.hill_tolerance;
    Some(Verdict {
        check: "stationary_tail".into(),
        pass: (h - theory).abs() <= tol,
        detail: format!(
            "Hill {h:.4} ± {:.4} (k = {}, {} draws), theory {theory}, tolerance {tol}",
            tail.hill.stderr, tail.hill.k, tail.draws
        ),
    })
}

pub fn verdicts(cfg: &ExperimentConfig, curve: &ScalingCurve<f64>, tail: Option<&StationaryTail>) -> Vec<Verdict> {
    let mut out: Vec<Verdict> = curve.points.iter().filter_map(|p| point_verdict(cfg, p)).collect();
    out.extend(tail.and_then(|t| tail_verdict(cfg, t)));
    out
}

fn theory_json(model: &Model) -> Value {
    let mut m = Map::new();
    match &model.theory {
        Some(TheoryModel::Superlinear(p)) => {
            m.insert("regime".into(), json!("superlinear"));
            m.insert("q_star".into(), num(p.q_star()));
            m.insert("blowup_q".into(), p.blowup_q().map_or(Value::String("inf".into()), num));
            m.insert("stationary_tail_exponent".into(), num(p.stationary_tail_exponent()));
            m.insert("multiscaling_slope".into(), num(p.multiscaling_slope()));
        }
        Some(TheoryModel::Linear { alpha }) => {
            m.insert("regime".into(), json!("linear"));
            m.insert("moment_cap".into(), alpha.map_or(Value::String("inf".into()), |a| num(2.0 * a)));
        }
        None => {
            m.insert("regime".into(), Value::Null);
        }
    }
    m.insert("note".into(), model.theory_note.clone().map_or(Value::Null, Value::String));
    m.insert("truncation_residual".into(), opt_num(model.truncation_residual));
    Value::Object(m)
}

fn scaling_rows(curve: &ScalingCurve<f64>) -> Value {
    curve
        .points
        .iter()
        .map(|p| {
            let (a, se, r2) = match &p.fit {
                Some(f) => (num(f.slope), num(f.stderr), num(f.r_squared)),
                None => (Value::Null, Value::Null, Value::Null),
            };
            json!({
                "q": num(p.q),
                "A_hat": a,
                "stderr": se,
                "r2": r2,
                "A_theory": p.theory.as_ref().map_or(Value::Null, scaling_value),
                "flag": p.flag.map_or("unchecked", |f| f.as_str()),
                "near_threshold": p.near_threshold,
            })
        })
        .collect()
}

fn moment_rows(moments: &MomentTable<f64>) -> Value {
    moments
        .entries()
        .iter()
        .map(|e| {
            json!({
                "lag": num(e.lag),
                "q": num(e.q),
                "moment": num(e.moment.estimate),
                "stderr": num(e.moment.stderr),
                "n_eff": num(e.moment.n_eff),
                "flag": e.flag.map_or("unchecked", |f| f.as_str()),
            })
        })
        .collect()
}

/// The full report of one run.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub json: Value,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    pub fn new(cfg: &ExperimentConfig, model: &Model, out: &Outputs) -> Self {
        let verdicts = verdicts(cfg, &out.curve, out.tail.as_ref());
        let mut echo = serde_json::to_value(cfg).expect("config serializes");
        normalize_floats(&mut echo);
        let tail = out.tail.as_ref().map_or(Value::Null, |t| {
            json!({
                "draws": t.draws,
                "k": t.hill.k,
                "hill": num(t.hill.tail_index),
                "stderr": num(t.hill.stderr),
                "theory": opt_num(t.theory),
            })
        });
        let stage_seconds: Map<String, Value> = out.timings.iter().map(|(k, s)| (k.to_string(), num(*s))).collect();
        let json = json!({
            "config_hash": cfg.hash(),
            "seed": cfg.simulation.seed,
            "workers": cfg.simulation.workers,
            "n_paths": cfg.simulation.n_paths,
            "sampler": format!("{:?}", cfg.simulation.sampler).to_lowercase(),
            "config": echo,
            "adjusted_orders": model.adjusted_orders.iter()
                .map(|(a, b)| json!({"requested": num(*a), "used": num(*b)}))
                .collect::<Vec<_>>(),
            "theory": theory_json(model),
            "scaling": scaling_rows(&out.curve),
            "moments": moment_rows(&out.moments),
            "divergence_flags": out.curve.points.iter()
                .map(|p| json!({"q": num(p.q), "flag": p.flag.map_or("unchecked", |f| f.as_str())}))
                .collect::<Vec<_>>(),
            "stationary_tail": tail,
            "runtime": {
                "version": env!("CARGO_PKG_VERSION"),
                "stage_seconds": stage_seconds,
            },
            "verdicts": verdicts.iter()
                .map(|v| json!({"check": v.check, "pass": v.pass, "detail": v.detail}))
                .collect::<Vec<_>>(),
            "pass": verdicts.iter().all(|v| v.pass),
        });
        Self { json, verdicts }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_string_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.json).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_digits() {
        assert_eq!(serde_json::to_string(&num(0.1)).unwrap(), "1.0000000000000001e-1");
        assert_eq!(num(f64::NEG_INFINITY), Value::String("-inf".into()));
        let mut v = json!({"a": [0.5, 3], "b": {"c": 2.25}});
        normalize_floats(&mut v);
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"a":[5.0000000000000000e-1,3],"b":{"c":2.2500000000000000e+0}}"#
        );
    }
}
