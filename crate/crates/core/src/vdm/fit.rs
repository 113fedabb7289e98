use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::models::VdmModel;
use crate::error::{Error, Result};
use crate::model::VersionId;
use crate::stats::chi_square_gof;

pub const MAX_ITERATIONS: usize = 500;
pub const RESTARTS: usize = 2;
/// Expected counts are clipped below at this value in the chi-square statistic.
pub const MIN_EXPECTED: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: VdmModel,
    pub version: VersionId,
    /// Last month of the fitted window; months run from 1.
    pub horizon: usize,
    pub params: Vec<f64>,
    /// Residual sum of squares.
    pub objective: f64,
    pub chi2: Option<f64>,
    pub df: usize,
    pub p_value: Option<f64>,
    pub converged: bool,
}

impl FitRecord {
    pub fn well_fit(&self) -> bool {
        self.p_value.is_some_and(|p| p >= 0.05)
    }
}

struct Minimum {
    z: Vec<f64>,
    f: f64,
    converged: bool,
}

/// Nelder-Mead descent from `start`. Stops when the spread of the simplex
/// values drops below `rel * f_best + abs_tol`, or after [`MAX_ITERATIONS`].
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    steps: &[f64],
    rel: f64,
    abs_tol: f64,
) -> Minimum {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += steps[i];
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let (best, worst) = (values[0], values[n]);
        if worst.is_finite() && worst - best <= rel * best.abs() + abs_tol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let toward = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };
        let reflected = toward(1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = toward(2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = toward(0.5);
            let fc = f(&c);
            (c, fc)
        } else {
            let c = toward(-0.5);
            let fc = f(&c);
            (c, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            values[i] = f(&shrunk);
            simplex[i] = shrunk;
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is non-empty");
    Minimum {
        z: simplex[best].clone(),
        f: values[best],
        converged,
    }
}

fn sse(model: VdmModel, params: &[f64], ys: &[f64]) -> f64 {
    let s: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let d = y - model.eval(params, (i + 1) as f64);
            d * d
        })
        .sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

fn admissible(model: VdmModel, params: &[f64], horizon: usize, tol: f64) -> bool {
    let values: Vec<f64> = (1..=horizon)
        .map(|t| model.eval(params, t as f64))
        .collect();
    values.iter().all(|v| v.is_finite() && *v >= -tol)
        && values.windows(2).all(|w| w[1] >= w[0] - tol)
}

/// Least-squares fit of `model` to the cumulative counts of months `1..=horizon`.
///
/// `cumulative[i]` holds the count at the end of month `i + 1`. The search
/// runs from every point of the model's start grid, keeps the best result,
/// and restarts from it up to [`RESTARTS`] times. Fits whose curve is
/// decreasing or negative on the window are rejected.
pub fn fit(
    model: VdmModel,
    version: &VersionId,
    cumulative: &[f64],
    horizon: usize,
) -> Result<FitRecord> {
    let k = model.param_count();
    if horizon > cumulative.len() {
        return Err(Error::Analysis(format!(
            "horizon {horizon} exceeds the {}-month series",
            cumulative.len()
        )));
    }
    if horizon < k + 2 {
        return Err(Error::Analysis(format!(
            "{} needs at least {} months, got {horizon}",
            model.name(),
            k + 2
        )));
    }
    let ys = &cumulative[..horizon];
    let y_max = ys.iter().copied().fold(0.0, f64::max);
    let scale = 1.0 + ys.iter().map(|y| y * y).sum::<f64>();
    let abs_tol = 1e-14 * scale;
    let tol = 1e-6 * (1.0 + y_max);
    let objective = |z: &[f64]| sse(model, &model.params_of(z), ys);
    let steps: Vec<f64> = model
        .positive()
        .iter()
        .map(|&pos| if pos { 0.3 } else { 0.1 * y_max.max(1.0) })
        .collect();

    let mut best: Option<Minimum> = None;
    for start in model.start_grid(y_max, horizon as f64) {
        let z = model.to_search(&start);
        let m = nelder_mead(&objective, &z, &steps, 1e-9, abs_tol);
        if !admissible(model, &model.params_of(&m.z), horizon, tol) {
            continue;
        }
        if best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let Some(mut best) = best else {
        return Ok(FitRecord {
            model,
            version: version.clone(),
            horizon,
            params: Vec::new(),
            objective: f64::INFINITY,
            chi2: None,
            df: horizon - k - 1,
            p_value: None,
            converged: false,
        });
    };
    for _ in 0..RESTARTS {
        let steps: Vec<f64> = steps.iter().map(|s| s * 0.1).collect();
        let m = nelder_mead(&objective, &best.z, &steps, 1e-9, abs_tol);
        let ok = admissible(model, &model.params_of(&m.z), horizon, tol);
        if ok && m.f <= best.f {
            let improved = m.f < best.f;
            best = Minimum {
                converged: best.converged || m.converged,
                ..m
            };
            if !improved {
                break;
            }
        }
    }
    let params = model.params_of(&best.z);
    let raw: Vec<f64> = (1..=horizon)
        .map(|t| model.eval(&params, t as f64))
        .collect();
    let df = horizon - k - 1;
    let (chi2, p_value, converged) = if raw.iter().all(|e| *e <= MIN_EXPECTED) || !best.converged {
        (None, None, false)
    } else {
        let expected: Vec<f64> = raw.iter().map(|e| e.max(MIN_EXPECTED)).collect();
        let test = chi_square_gof(ys, &expected, k)?;
        (Some(test.statistic), Some(test.p_value), true)
    };
    Ok(FitRecord {
        model,
        version: version.clone(),
        horizon,
        params,
        objective: best.f,
        chi2,
        df,
        p_value,
        converged,
    })
}

/// One fit job: a model, a version's cumulative series and a horizon.
#[derive(Debug, Clone)]
pub struct FitJob<'a> {
    pub model: VdmModel,
    pub version: &'a VersionId,
    pub cumulative: &'a [f64],
    pub horizon: usize,
}

/// Runs the jobs in parallel; the output keeps the job order.
pub fn fit_all(jobs: &[FitJob<'_>], pool: &rayon::ThreadPool) -> Result<Vec<FitRecord>> {
    pool.install(|| {
        jobs.par_iter()
            .map(|j| fit(j.model, j.version, j.cumulative, j.horizon))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v() -> VersionId {
        VersionId::parse("1.0").unwrap()
    }

    fn generate(model: VdmModel, p: &[f64], months: usize) -> Vec<f64> {
        (1..=months).map(|t| model.eval(p, t as f64)).collect()
    }

    #[test]
    fn recovers_exponential() {
        let ys = generate(VdmModel::Re, &[80.0, 0.15], 36);
        let r = fit(VdmModel::Re, &v(), &ys, 36).unwrap();
        assert!(r.converged);
        assert!((r.params[0] - 80.0).abs() / 80.0 < 1e-4, "{:?}", r.params);
        assert!((r.params[1] - 0.15).abs() / 0.15 < 1e-4, "{:?}", r.params);
        assert!(r.p_value.unwrap() > 0.99);
    }

    #[test]
    fn zero_series_does_not_converge() {
        let r = fit(VdmModel::Ln, &v(), &[0.0; 12], 12).unwrap();
        assert!(!r.converged);
        assert!(r.p_value.is_none());
        assert!(
            r.params[0] < 1e-3 && r.params[1].abs() < 1e-3,
            "{:?}",
            r.params
        );
    }

    #[test]
    fn short_series_rejected() {
        assert!(fit(VdmModel::Aml, &v(), &[1.0, 2.0, 3.0, 4.0], 4).is_err());
        assert!(fit(VdmModel::Ln, &v(), &[1.0, 2.0, 3.0], 5).is_err());
    }
}
