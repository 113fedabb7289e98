use crate::error::{Error, Result};

/// `|L|` above this flags a significant trend at the 5% level.
pub const LAPLACE_THRESHOLD: f64 = 1.96;

/// Laplace trend factor for grouped monthly counts.
///
/// Events are placed at month midpoints `t_i = i - 0.5`, giving
/// `L = (sum c_i t_i / N - k/2) / (k sqrt(1/(12N)))`. The numerator is
/// accumulated in integers as `sum c_i (2i - 1 - k)`, so reversing the series
/// negates the result exactly.
pub fn laplace_factor(counts: &[u64]) -> Result<f64> {
    let k = counts.len();
    if k < 2 {
        return Err(Error::Analysis(
            "Laplace test needs at least two months".into(),
        ));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Analysis("Laplace test: no events".into()));
    }
    let d: i128 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as i128 * (2 * (i as i128 + 1) - 1 - k as i128))
        .sum();
    let n = n as f64;
    Ok(d as f64 / (2.0 * n * k as f64) * (12.0 * n).sqrt())
}

/// Laplace factor of every prefix `counts[..j]`, `j` from 2, as `(j, L)`;
/// `None` while the prefix holds no event.
pub fn laplace_series(counts: &[u64]) -> Vec<(usize, Option<f64>)> {
    (2..=counts.len())
        .map(|j| (j, laplace_factor(&counts[..j]).ok()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_counts_have_no_trend() {
        assert_eq!(laplace_factor(&[3; 12]).unwrap(), 0.0);
        assert_eq!(laplace_factor(&[1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn late_events_trend_up() {
        let mut c = [0u64; 12];
        c[11] = 20;
        let l = laplace_factor(&c).unwrap();
        let expected = (11.5 - 6.0) / (12.0 * (1.0f64 / 240.0).sqrt());
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 7.1005).abs() < 1e-3);
        c.reverse();
        assert_eq!(laplace_factor(&c).unwrap(), -l);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(laplace_factor(&[0, 0, 0]).is_err());
        assert!(laplace_factor(&[4]).is_err());
        let s = laplace_series(&[0, 0, 2, 1]);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], (2, None));
        assert!(s[1].1.unwrap() > 0.0);
    }
}
