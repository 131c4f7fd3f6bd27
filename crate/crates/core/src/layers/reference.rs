//! Exact double-precision layer definitions, the oracles for every error
//! metric in this crate.

use crate::error::{Error, Result};

/// Tanh form of GELU: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
pub fn gelu(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn reference_gelu_map(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| gelu(v)).collect()
}

/// `e^(x_i) / sum_j e^(x_j)`, evaluated with the maximum subtracted first.
pub fn reference_softmax(row: &[f64]) -> Result<Vec<f64>> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `(x_i - mean) / sqrt(var) * gamma_i + beta_i` with the population
/// variance, floored at `eps_floor`.
pub fn reference_layer_norm(
    row: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps_floor: f64,
) -> Result<Vec<f64>> {
    let n = row.len();
    if n == 0 {
        return Err(Error::EmptyRow);
    }
    for len in [gamma.len(), beta.len()] {
        if len != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: len,
            });
        }
    }
    let mean = row.iter().sum::<f64>() / n as f64;
    let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let sigma = var.max(eps_floor).sqrt();
    Ok(row
        .iter()
        .zip(gamma.iter().zip(beta))
        .map(|(x, (g, b))| (x - mean) / sigma * g + b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(reference_softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(gelu(0.0), 0.0);
        assert_eq!(
            reference_layer_norm(&[1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], 1e-12).unwrap(),
            vec![1.0, -1.0]
        );
    }

    #[test]
    fn gelu_shape() {
        assert!((gelu(1.0) - 0.841_191_990_607_477_2).abs() < 1e-12);
        assert!(gelu(-10.0).abs() < 1e-12);
        assert!((gelu(10.0) - 10.0).abs() < 1e-12);
        assert_eq!(reference_gelu_map(&[0.0, 10.0]).len(), 2);
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let y = reference_softmax(&[1000.0, 1000.0, -1000.0]).unwrap();
        assert_eq!(y, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn errors() {
        assert_eq!(reference_softmax(&[]), Err(Error::EmptyRow));
        assert_eq!(
            reference_layer_norm(&[], &[], &[], 1.0),
            Err(Error::EmptyRow)
        );
        assert!(matches!(
            reference_layer_norm(&[1.0, 2.0], &[1.0], &[0.0, 0.0], 1.0),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn constant_row_uses_floor() {
        let y = reference_layer_norm(&[3.0; 4], &[2.0; 4], &[0.5; 4], 1e-6).unwrap();
        assert_eq!(y, vec![0.5; 4]);
    }
}
