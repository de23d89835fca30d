//! Error detection ratio and NMSE.

use num_complex::Complex64;

use crate::netgen::NetworkLayout;
use crate::{Error, Result};

/// Reported NMSE when the estimate is exact.
pub const NMSE_FLOOR_DB: f64 = -200.0;

/// Fraction of users whose decision differs from the truth.
pub fn compute_edr(decisions: &[bool], truth: &[bool]) -> Result<f64> {
    if decisions.len() != truth.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} decisions for {} users",
            decisions.len(),
            truth.len()
        )));
    }
    let errors = decisions.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / truth.len() as f64)
}

/// Squared error and true energy over the cooperation pairs `(u, n in N_u)`
/// and every antenna of `u`. Vectors are indexed `[v * N + n]` with
/// `v = u * M + m`.
pub fn nmse_sums(
    x_hat: &[Complex64],
    x_true: &[Complex64],
    layout: &NetworkLayout,
    antennas: usize,
) -> Result<(f64, f64)> {
    let n = layout.n_users();
    let expected = layout.n_aps() * antennas * n;
    if x_hat.len() != expected || x_true.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "channel vectors of length {} and {}, expected {expected}",
            x_hat.len(),
            x_true.len()
        )));
    }
    let (mut err, mut energy) = (0.0, 0.0);
    for (u, users) in layout.coop_ap_to_users.iter().enumerate() {
        for m in 0..antennas {
            let base = (u * antennas + m) * n;
            for &i in users {
                err += (x_hat[base + i] - x_true[base + i]).norm_sqr();
                energy += x_true[base + i].norm_sqr();
            }
        }
    }
    Ok((err, energy))
}

/// `10 log10(ratio)`, floored at [`NMSE_FLOOR_DB`].
pub fn ratio_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    }
}

/// NMSE in dB over the cooperation pairs. Fails when the true channels of
/// those pairs carry no energy.
pub fn compute_nmse(
    x_hat: &[Complex64],
    x_true: &[Complex64],
    layout: &NetworkLayout,
    antennas: usize,
) -> Result<f64> {
    let (err, energy) = nmse_sums(x_hat, x_true, layout, antennas)?;
    if !(energy > 0.0) {
        return Err(Error::param("x_true", "no energy on the cooperation pairs"));
    }
    Ok(ratio_db(err / energy))
}

/// Sample mean and the half-width of its normal-approximation 95% interval.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> NetworkLayout {
        // Two APs, three users; AP 0 serves users 0 and 1, AP 1 serves 1 and 2.
        NetworkLayout::from_gains(vec![1.0; 6], 3, 2, |n, u| n + 1 >= u && n <= u + 1).unwrap()
    }

    #[test]
    fn edr_counts() {
        let truth = vec![false; 100];
        let mut d = truth.clone();
        assert_eq!(compute_edr(&d, &truth).unwrap(), 0.0);
        d[3] = true;
        d[50] = true;
        d[99] = true;
        assert!((compute_edr(&d, &truth).unwrap() - 0.03).abs() < 1e-15);
        let flipped: Vec<bool> = truth.iter().map(|b| !b).collect();
        assert_eq!(compute_edr(&flipped, &truth).unwrap(), 1.0);
        assert!(compute_edr(&d[..5], &truth).is_err());
    }

    #[test]
    fn nmse_reference_points() {
        let l = layout();
        let x: Vec<Complex64> = (0..6)
            .map(|k| Complex64::new(k as f64 + 1.0, -0.5))
            .collect();
        assert_eq!(compute_nmse(&x, &x, &l, 1).unwrap(), NMSE_FLOOR_DB);
        let zero = vec![Complex64::new(0.0, 0.0); 6];
        assert!(compute_nmse(&zero, &x, &l, 1).unwrap().abs() < 1e-12);
        let half: Vec<Complex64> = x.iter().map(|v| v * 0.5).collect();
        assert!((compute_nmse(&half, &x, &l, 1).unwrap() + 6.0206).abs() < 1e-4);
        assert!(compute_nmse(&x, &zero, &l, 1).is_err());
    }

    #[test]
    fn nmse_ignores_pairs_outside_cooperation() {
        let l = NetworkLayout::from_gains(vec![1.0; 4], 2, 2, |n, u| n == u).unwrap();
        // Entry [v * N + n]: (0,0) and (1,1) cooperate, (0,1) and (1,0) do not.
        let x = vec![Complex64::new(1.0, 0.0); 4];
        let mut xh = x.clone();
        xh[1] = Complex64::new(100.0, 0.0);
        xh[2] = Complex64::new(-7.0, 3.0);
        assert_eq!(compute_nmse(&xh, &x, &l, 1).unwrap(), NMSE_FLOOR_DB);
    }

    #[test]
    fn confidence_interval() {
        let (m, h) = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((h - 1.96 * sd / 2.0).abs() < 1e-12);
        assert!(mean_ci(&[]).0.is_nan());
    }
}
