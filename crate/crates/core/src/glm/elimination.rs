use super::{fit_logistic, FitOptions, GlmError, LogisticModel};
use crate::preprocess::{FeatureMatrix, INTERCEPT};

#[derive(Debug, Clone, PartialEq)]
pub struct EliminationStep {
    pub removed: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EliminationTrace {
    pub full_model: LogisticModel,
    pub steps: Vec<EliminationStep>,
    pub final_model: LogisticModel,
}

/// Backward elimination on Wald p-values.
///
/// Starting from every column of `fm`, repeatedly drops the non-protected
/// column with the largest p-value while that p-value exceeds `alpha_stay`.
/// Ties go to the column declared later. The intercept is always protected;
/// `protected` names further columns that may never be dropped.
pub fn backward_eliminate(
    fm: &FeatureMatrix,
    alpha_stay: f64,
    protected: &[&str],
    opts: &FitOptions,
) -> Result<EliminationTrace, GlmError> {
    let full_model = fit_logistic(fm, opts)?;
    let mut columns = fm.column_names.clone();
    let mut model = full_model.clone();
    let mut steps = Vec::new();

    loop {
        let mut candidates = Vec::new();
        for (j, name) in model.column_names.iter().enumerate() {
            if name == INTERCEPT || protected.contains(&name.as_str()) {
                continue;
            }
            candidates.push((j, model.wald(j)?.1));
        }
        let worst = least_significant(&candidates);
        let Some((j, p)) = worst else { break };
        if p <= alpha_stay {
            break;
        }
        let removed = columns.remove(j);
        steps.push(EliminationStep { removed, p_value: p });
        let reduced = fm
            .select_columns(&columns)
            .expect("remaining columns come from the matrix");
        model = fit_logistic(&reduced, opts)?;
    }

    Ok(EliminationTrace {
        full_model,
        steps,
        final_model: model,
    })
}

/// Largest p-value; on a tie the later column wins.
fn least_significant(candidates: &[(usize, f64)]) -> Option<(usize, f64)> {
    candidates
        .iter()
        .copied()
        .fold(None, |worst, (j, p)| match worst {
            Some((_, wp)) if p < wp => worst,
            _ => Some((j, p)),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::sigmoid;
    use crate::rng::Xoshiro256;
    use nalgebra::{DMatrix, DVector};

    fn matrix(n: usize, beta: &[f64], seed: u64) -> FeatureMatrix {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let p = beta.len();
        let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.standard_normal() });
        let y = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
                if rng.bernoulli(sigmoid(eta)) {
                    1.0
                } else {
                    0.0
                }
            }),
        );
        let mut column_names = vec![INTERCEPT.to_string()];
        column_names.extend((1..p).map(|j| format!("x{j}")));
        FeatureMatrix {
            column_names,
            x,
            y,
            row_ids: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    #[test]
    fn strong_predictors_are_all_kept() {
        let fm = matrix(2000, &[-0.5, 1.0, -0.8, 0.6], 3);
        let trace = backward_eliminate(&fm, 0.15, &[], &FitOptions::default()).unwrap();
        assert!(trace.steps.is_empty());
        assert_eq!(trace.final_model, trace.full_model);
    }

    #[test]
    fn noise_is_dropped_and_final_model_is_significant() {
        let fm = matrix(1500, &[-0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 17);
        let trace = backward_eliminate(&fm, 0.15, &[], &FitOptions::default()).unwrap();
        let m = &trace.final_model;
        assert!(m.column_index("x1").is_some());
        for j in 1..m.column_names.len() {
            assert!(m.wald(j).unwrap().1 <= 0.15);
        }
        // Removed p-values exceed the threshold and the columns left + removed
        // account for the full model.
        assert!(trace.steps.iter().all(|s| s.p_value > 0.15));
        assert_eq!(m.column_names.len() + trace.steps.len(), fm.ncols());
    }

    #[test]
    fn intercept_only_end_state() {
        let fm = matrix(400, &[0.0, 0.0, 0.0], 2);
        let trace = backward_eliminate(&fm, 1e-9, &[], &FitOptions::default()).unwrap();
        assert_eq!(trace.final_model.column_names, vec![INTERCEPT.to_string()]);
        assert_eq!(trace.steps.len(), 2);
    }

    #[test]
    fn protected_columns_survive() {
        let fm = matrix(400, &[0.0, 0.0, 0.0], 2);
        let trace = backward_eliminate(&fm, 1e-9, &["x2"], &FitOptions::default()).unwrap();
        assert_eq!(trace.final_model.column_names, vec![INTERCEPT.to_string(), "x2".into()]);
    }

    #[test]
    fn exact_duplicate_column_fails_on_full_model() {
        let mut fm = matrix(300, &[0.1, 0.5, 0.5], 9);
        let dup = fm.x.column(2).into_owned();
        fm.x = fm.x.clone().insert_column(3, 0.0);
        fm.x.set_column(3, &dup);
        fm.column_names.push("x2_copy".into());
        let err = backward_eliminate(&fm, 0.15, &[], &FitOptions::default()).unwrap_err();
        match err {
            GlmError::SingularInformation { columns } => {
                assert_eq!(columns, vec!["x2".to_string(), "x2_copy".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ties_remove_the_later_column() {
        assert_eq!(least_significant(&[(1, 0.4), (2, 0.4), (3, 0.1)]), Some((2, 0.4)));
        assert_eq!(least_significant(&[(1, 0.5), (2, 0.4)]), Some((1, 0.5)));
        assert_eq!(least_significant(&[]), None);
    }
}
