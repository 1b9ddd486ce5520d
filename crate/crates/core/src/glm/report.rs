use super::{GlmError, LogisticModel};
use crate::preprocess::{FeatureMatrix, INTERCEPT};

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_sd<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().copied().collect();
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

/// One line of a coefficient report. `std_dev` and `normalized` are `None`
/// for the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub variable: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub std_dev: Option<f64>,
    pub normalized: Option<f64>,
    pub z: f64,
    pub p_value: f64,
}

fn column_sd(fm: &FeatureMatrix, name: &str) -> Result<f64, GlmError> {
    let j = fm
        .column_index(name)
        .ok_or_else(|| GlmError::UnknownColumn(name.to_string()))?;
    Ok(sample_sd(fm.x.column(j).iter()))
}

/// β_j · sd_j for every non-intercept model column, with sd taken from the
/// matching column of `fm`. Constant columns give 0.
pub fn normalized_coefficients(m: &LogisticModel, fm: &FeatureMatrix) -> Result<Vec<f64>, GlmError> {
    m.column_names
        .iter()
        .zip(m.beta.iter())
        .filter(|(name, _)| name.as_str() != INTERCEPT)
        .map(|(name, b)| {
            let sd = column_sd(fm, name)?;
            Ok(if sd == 0.0 || *b == 0.0 { 0.0 } else { b * sd })
        })
        .collect()
}

/// Coefficient, standard error, column sd, normalized coefficient, Wald z and
/// two-sided p for every model column. A zero standard error reports z = ±inf
/// (or 0 for a zero coefficient) and p from that z.
pub fn coefficient_table(m: &LogisticModel, fm: &FeatureMatrix) -> Result<Vec<CoefficientRow>, GlmError> {
    let mut normalized = normalized_coefficients(m, fm)?.into_iter();
    m.column_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (z, p_value) = match m.wald(j) {
                Ok(zp) => zp,
                Err(GlmError::ZeroSe { .. }) => {
                    let z = if m.beta[j] == 0.0 { 0.0 } else { m.beta[j].signum() * f64::INFINITY };
                    (z, if z == 0.0 { 1.0 } else { 0.0 })
                }
                Err(e) => return Err(e),
            };
            let (std_dev, norm) = if name == INTERCEPT {
                (None, None)
            } else {
                (Some(column_sd(fm, name)?), normalized.next())
            };
            Ok(CoefficientRow {
                variable: name.clone(),
                coefficient: m.beta[j],
                std_error: m.se[j],
                std_dev,
                normalized: norm,
                z,
                p_value,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn setup(beta: &[f64], cols: &[&[f64]]) -> (LogisticModel, FeatureMatrix) {
        let n = cols[0].len();
        let p = cols.len() + 1;
        let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
        let mut names = vec![INTERCEPT.to_string()];
        names.extend((1..p).map(|j| format!("c{j}")));
        let fm = FeatureMatrix {
            column_names: names.clone(),
            x,
            y: DVector::zeros(n),
            row_ids: (0..n).map(|i| i.to_string()).collect(),
        };
        let m = LogisticModel {
            column_names: names,
            beta: DVector::from_column_slice(beta),
            se: DVector::from_element(p, 0.5),
            covariance: DMatrix::identity(p, p) * 0.25,
            log_likelihood: 0.0,
            iterations: 1,
            converged: true,
            n,
            max_score: 0.0,
            ridge: None,
        };
        (m, fm)
    }

    #[test]
    fn sd_uses_n_minus_one() {
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(sample_sd(&[7.0]), 0.0);
    }

    #[test]
    fn normalized_is_beta_times_sd() {
        let (m, fm) = setup(&[0.3, -0.0593, 0.0, 2.0], &[&[1.0, 2.0, 3.0, 4.0], &[5.0, 1.0, 2.0, 0.0], &[3.0; 4]]);
        let v = normalized_coefficients(&m, &fm).unwrap();
        assert!((v[0] - (-0.0593 * (5.0f64 / 3.0).sqrt())).abs() < 1e-15);
        assert_eq!(v[1], 0.0); // zero coefficient
        assert_eq!(v[2], 0.0); // constant column
    }

    #[test]
    fn age_coefficient_times_sd() {
        // Coefficient -0.0593 times sd 12.2547 is -0.7267 (rounded to 4 places).
        let v: f64 = -0.0593 * 12.2547;
        assert_eq!((v * 1e4).round() / 1e4, -0.7267);
    }

    #[test]
    fn table_rows() {
        let (m, fm) = setup(&[0.3, 1.0], &[&[1.0, 2.0, 3.0, 4.0]]);
        let rows = coefficient_table(&m, &fm).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].variable, INTERCEPT);
        assert_eq!(rows[0].std_dev, None);
        assert_eq!(rows[1].z, 2.0);
        assert!((rows[1].p_value - 0.045_500_263_896_358_41).abs() < 1e-12);
    }
}
