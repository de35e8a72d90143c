use crate::error::{Error, Result};

/// `arctanh` of `r` after clamping to `[-1 + clamp, 1 - clamp]`.
pub fn fisher_z(r: f64, clamp: f64) -> f64 {
    r.clamp(-1.0 + clamp, 1.0 - clamp).atanh()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean correlation on the Fisher z scale: `tanh(mean(arctanh(r_j)))`.
pub fn fisher_aggregate(rs: &[f64], clamp: f64) -> Result<f64> {
    if rs.is_empty() {
        return Err(Error::EmptyInput("no correlations to aggregate"));
    }
    let zs: Vec<f64> = rs.iter().map(|&r| fisher_z(r, clamp)).collect();
    Ok(mean(&zs).tanh())
}
