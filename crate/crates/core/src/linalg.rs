use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SolveError {
    /// Column `0` has zero (weighted) variance and no ridge penalty holds it.
    ConstantColumn(usize),
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

/// Relative pivot below which the normal matrix is treated as rank deficient.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Weighted ridge regression with an unpenalised intercept.
///
/// `design` is row-major with `n_cols` columns. Features and target are
/// centred on their weighted means, so the penalty `lambda` shrinks the
/// slopes only.
pub(crate) fn weighted_ridge(
    design: &[f64],
    n_cols: usize,
    target: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
) -> Result<LinearFit, SolveError> {
    let n_rows = target.len();
    debug_assert_eq!(design.len(), n_rows * n_cols);
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..n_rows).map(weight).sum();
    if total <= 0.0 || n_rows == 0 {
        return Err(SolveError::Singular);
    }

    let mut x_mean = vec![0.0; n_cols];
    let mut y_mean = 0.0;
    for i in 0..n_rows {
        let w = weight(i);
        let row = &design[i * n_cols..(i + 1) * n_cols];
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += w * v;
        }
        y_mean += w * target[i];
    }
    x_mean.iter_mut().for_each(|m| *m /= total);
    y_mean /= total;

    let mut gram = DMatrix::<f64>::zeros(n_cols, n_cols);
    let mut rhs = DVector::<f64>::zeros(n_cols);
    let mut centred = vec![0.0; n_cols];
    for i in 0..n_rows {
        let w = weight(i);
        if w == 0.0 {
            continue;
        }
        let row = &design[i * n_cols..(i + 1) * n_cols];
        for j in 0..n_cols {
            centred[j] = row[j] - x_mean[j];
        }
        let dy = target[i] - y_mean;
        for a in 0..n_cols {
            let wa = w * centred[a];
            if wa == 0.0 {
                continue;
            }
            rhs[a] += wa * dy;
            for b in a..n_cols {
                gram[(a, b)] += wa * centred[b];
            }
        }
    }
    for a in 0..n_cols {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let scale = (0..n_cols).map(|j| gram[(j, j)]).fold(0.0, f64::max);
    for j in 0..n_cols {
        if lambda == 0.0 && gram[(j, j)] <= PIVOT_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(SolveError::ConstantColumn(j));
        }
        gram[(j, j)] += lambda;
    }

    let diag: Vec<f64> = (0..n_cols).map(|j| gram[(j, j)]).collect();
    let chol = gram.cholesky().ok_or(SolveError::Singular)?;
    let l = chol.l_dirty();
    for j in 0..n_cols {
        if l[(j, j)] * l[(j, j)] <= PIVOT_TOLERANCE * diag[j] {
            return Err(SolveError::Singular);
        }
    }
    let coef = chol.solve(&rhs);
    let coefficients: Vec<f64> = coef.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearFit {
        coefficients,
        intercept,
    })
}
