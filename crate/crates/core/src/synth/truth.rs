use super::{arm_probabilities, draw_covariates, CompiledLogit, SynthError, SyntheticCohort, SyntheticSpec};
use crate::causal::TREATED_ARMS;
use crate::cohort::{Outcome, Treatment};
use crate::format::real;
use crate::glm::sigmoid;
use crate::rng::Xoshiro256;
use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

/// Offset that separates the truth stream from the cohort stream.
const TRUTH_STREAM: u64 = 0x7472_7574_685F_6D63;

/// A Monte Carlo estimate with its standard error (0 for exact values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub mc_se: f64,
}

struct Draws {
    covariates: Vec<Vec<f64>>,
    arm_probs: Vec<[f64; 3]>,
    arm_uniform: Vec<f64>,
}

fn draw(spec: &SyntheticSpec, n_mc: usize) -> Draws {
    let names = spec.covariate_names();
    let features = spec.features();
    let mut rng = Xoshiro256::seed_from_u64(spec.seed ^ TRUTH_STREAM);
    let mut d = Draws {
        covariates: Vec::with_capacity(n_mc),
        arm_probs: Vec::with_capacity(n_mc),
        arm_uniform: Vec::with_capacity(n_mc),
    };
    for _ in 0..n_mc {
        let x = draw_covariates(spec, &features, &mut rng);
        d.arm_probs.push(arm_probabilities(&spec.treatment, &names, &x));
        d.arm_uniform.push(rng.next_f64());
        d.covariates.push(x);
    }
    d
}

fn outcome_model(spec: &SyntheticSpec, outcome: Outcome) -> Option<CompiledLogit> {
    spec.outcomes
        .get(outcome.as_str())
        .map(|m| CompiledLogit::new(m, &spec.covariate_names()))
}

/// σ(η + shift) − σ(η), exactly 0 for a zero shift.
fn effect(eta_ref: f64, shift: f64) -> f64 {
    if shift == 0.0 {
        0.0
    } else {
        sigmoid(eta_ref + shift) - sigmoid(eta_ref)
    }
}

fn arm_slot(t: Treatment) -> usize {
    match t {
        Treatment::Chemotherapy => 0,
        Treatment::Targeted => 1,
        Treatment::Radiation => 2,
    }
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> McEstimate {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let se = if n > 1 { (ss / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
    McEstimate { value: mean, mc_se: se }
}

/// Population ATE of `treatment` against radiation under the true outcome
/// model, averaged over `n_mc` covariate draws. Exact (zero SE) when no
/// covariate enters the outcome model; 0 when the outcome has no model.
pub fn true_ate(spec: &SyntheticSpec, treatment: Treatment, outcome: Outcome, n_mc: usize) -> McEstimate {
    let Some(m) = outcome_model(spec, outcome) else {
        return McEstimate { value: 0.0, mc_se: 0.0 };
    };
    let shift = m.arm_shift(treatment);
    if m.beta.iter().all(|b| *b == 0.0) {
        return McEstimate {
            value: effect(m.intercept, shift),
            mc_se: 0.0,
        };
    }
    ate_on(&m, shift, &draw(spec, n_mc))
}

fn ate_on(m: &CompiledLogit, shift: f64, d: &Draws) -> McEstimate {
    mean_se(d.covariates.iter().map(|x| effect(m.eta_ref(x), shift)))
}

/// Population ATT: E[π_t(X)·Δ(X)] / E[π_t(X)], with Δ the individual effect
/// and π_t the true assignment probability. Delta-method SE.
pub fn true_att(spec: &SyntheticSpec, treatment: Treatment, outcome: Outcome, n_mc: usize) -> McEstimate {
    let Some(m) = outcome_model(spec, outcome) else {
        return McEstimate { value: 0.0, mc_se: 0.0 };
    };
    let shift = m.arm_shift(treatment);
    if m.beta.iter().all(|b| *b == 0.0) {
        return McEstimate {
            value: effect(m.intercept, shift),
            mc_se: 0.0,
        };
    }
    att_on(&m, shift, arm_slot(treatment), &draw(spec, n_mc))
}

fn att_on(m: &CompiledLogit, shift: f64, slot: usize, d: &Draws) -> McEstimate {
    let n = d.covariates.len() as f64;
    let (mut sw, mut swd) = (0.0, 0.0);
    let deltas: Vec<f64> = d.covariates.iter().map(|x| effect(m.eta_ref(x), shift)).collect();
    for (delta, p) in deltas.iter().zip(&d.arm_probs) {
        sw += p[slot];
        swd += p[slot] * delta;
    }
    let att = swd / sw;
    let mean_w = sw / n;
    let resid = deltas.iter().zip(&d.arm_probs).map(|(delta, p)| p[slot] * (delta - att));
    let r = mean_se(resid);
    McEstimate {
        value: att,
        mc_se: r.mc_se / mean_w,
    }
}

/// AUC of the true linear predictor (covariates and sampled arm) against the
/// outcome it generates. Each draw contributes positive mass p and negative
/// mass 1 − p, ties count one half. SE from the Hanley–McNeil formula at the
/// effective class sizes.
pub fn true_auc(spec: &SyntheticSpec, outcome: Outcome, n_mc: usize) -> McEstimate {
    let Some(m) = outcome_model(spec, outcome) else {
        return McEstimate { value: 0.5, mc_se: 0.0 };
    };
    auc_on(&m, &draw(spec, n_mc))
}

fn auc_on(m: &CompiledLogit, d: &Draws) -> McEstimate {
    let mut scored: Vec<(f64, f64)> = d
        .covariates
        .iter()
        .zip(d.arm_probs.iter().zip(&d.arm_uniform))
        .map(|(x, (p, u))| {
            let arm = if *u < p[0] {
                Treatment::Chemotherapy
            } else if *u < p[0] + p[1] {
                Treatment::Targeted
            } else {
                Treatment::Radiation
            };
            let eta = m.eta_ref(x) + m.arm_shift(arm);
            (eta, sigmoid(eta))
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (mut neg_below, mut num) = (0.0, 0.0);
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0.0, 0.0);
        while j < scored.len() && scored[j].0.total_cmp(&scored[i].0) == Ordering::Equal {
            pos += scored[j].1;
            neg += 1.0 - scored[j].1;
            j += 1;
        }
        num += pos * (neg_below + 0.5 * neg);
        neg_below += neg;
        i = j;
    }
    let total_pos: f64 = scored.iter().map(|s| s.1).sum();
    let total_neg = neg_below;
    let a = num / (total_pos * total_neg);
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let var = (a * (1.0 - a) + (total_pos - 1.0) * (q1 - a * a) + (total_neg - 1.0) * (q2 - a * a))
        / (total_pos * total_neg);
    McEstimate {
        value: a,
        mc_se: var.max(0.0).sqrt(),
    }
}

/// One line of truth.csv. `treatment` is `None` for AUC rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub estimand: &'static str,
    pub treatment: Option<Treatment>,
    pub outcome: Outcome,
    pub value: f64,
    pub mc_se: f64,
}

/// Population ATE/ATT, sample SATE/SATT on the generated covariates and
/// arms, and the model AUC, for every modelled outcome.
pub fn compute_truth(cohort: &SyntheticCohort) -> Vec<TruthRow> {
    let spec = &cohort.spec;
    let n_mc = spec.mc_draws();
    let draws = draw(spec, n_mc);
    let mut rows = Vec::new();
    for (outcome, _) in spec.outcome_models() {
        let m = outcome_model(spec, outcome).expect("modelled outcome");
        let exact = m.beta.iter().all(|b| *b == 0.0);
        for t in TREATED_ARMS {
            let shift = m.arm_shift(t);
            let (ate, att) = if exact {
                let e = McEstimate { value: effect(m.intercept, shift), mc_se: 0.0 };
                (e, e)
            } else {
                (ate_on(&m, shift, &draws), att_on(&m, shift, arm_slot(t), &draws))
            };
            let sample: Vec<(f64, bool)> = cohort
                .patients
                .iter()
                .map(|p| (effect(m.eta_ref(&p.covariates), shift), p.arm == t))
                .collect();
            let sate = sample.iter().map(|s| s.0).sum::<f64>() / sample.len() as f64;
            let treated: Vec<f64> = sample.iter().filter(|s| s.1).map(|s| s.0).collect();
            let satt = if treated.is_empty() {
                f64::NAN
            } else {
                treated.iter().sum::<f64>() / treated.len() as f64
            };
            for (estimand, e) in [
                ("ATE", ate),
                ("ATT", att),
                ("SATE", McEstimate { value: sate, mc_se: 0.0 }),
                ("SATT", McEstimate { value: satt, mc_se: 0.0 }),
            ] {
                rows.push(TruthRow {
                    estimand,
                    treatment: Some(t),
                    outcome,
                    value: e.value,
                    mc_se: e.mc_se,
                });
            }
        }
        let auc = auc_on(&m, &draws);
        rows.push(TruthRow {
            estimand: "AUC",
            treatment: None,
            outcome,
            value: auc.value,
            mc_se: auc.mc_se,
        });
    }
    rows
}

pub fn truth_csv(rows: &[TruthRow]) -> String {
    let mut out = String::from("estimand,treatment,outcome,value,mc_se\n");
    for r in rows {
        let t = r.treatment.map_or("NA", |t| t.as_str());
        writeln!(out, "{},{t},{},{},{}", r.estimand, r.outcome, real(r.value), real(r.mc_se)).unwrap();
    }
    out
}

pub fn write_truth(dir: &Path, rows: &[TruthRow]) -> Result<(), SynthError> {
    let path = dir.join("truth.csv");
    std::fs::write(&path, truth_csv(rows)).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}
