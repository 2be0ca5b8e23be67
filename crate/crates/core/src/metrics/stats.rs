use rayon::prelude::*;

use crate::error::{Error, Result};

/// Incremental mean. Exact for constant inputs, which keeps zero-variance
/// estimates bit-identical to their closed forms.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RunningMean {
    weight: f64,
    mean: f64,
}

impl RunningMean {
    pub(crate) fn push(&mut self, x: f64) {
        self.push_weighted(x, 1.0);
    }

    pub(crate) fn push_weighted(&mut self, x: f64, w: f64) {
        if w == 0.0 {
            return;
        }
        self.weight += w;
        if self.weight == w {
            self.mean = x;
        } else {
            self.mean += (w / self.weight) * (x - self.mean);
        }
    }

    pub(crate) fn weight(&self) -> f64 {
        self.weight
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mut m = RunningMean::default();
    xs.iter().for_each(|&x| m.push(x));
    let ss: f64 = xs.iter().map(|x| (x - m.mean()).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        0.0
    } else {
        sample_std(xs) / (xs.len() as f64).sqrt()
    }
}

/// Product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::param("correlation needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance(
            "correlation is undefined for a constant input".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Runs `f(i)` for `i in 0..n` on `workers` threads, returning results in index order.
pub(crate) fn par_map<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Send + Sync,
{
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_mean_constant_is_exact() {
        let c = 0.143_841_036_225_890_2;
        let mut m = RunningMean::default();
        for _ in 0..2000 {
            m.push(c);
        }
        assert_eq!(m.mean(), c);
        let mut w = RunningMean::default();
        for k in 0..50 {
            w.push_weighted(c, (k % 4) as f64);
        }
        assert_eq!(w.mean(), c);
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&xs, &[1.0; 4]), Err(Error::ZeroVariance(_))));
        assert!(pearson(&xs, &xs[..3]).is_err());
    }

    #[test]
    fn std_error_of_two_points() {
        assert!((std_error(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(std_error(&[5.0]), 0.0);
    }

    #[test]
    fn par_map_matches_serial() {
        let serial = par_map(1, 100, |i| Ok(i * i)).unwrap();
        let parallel = par_map(8, 100, |i| Ok(i * i)).unwrap();
        assert_eq!(serial, parallel);
    }
}
