use super::{OpticsError, RangingModel};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const MAX_FIT_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-10;
const MIN_SAMPLES: usize = 4;
const PROFILE_GRID: usize = 400;

/// Result of a calibration fit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RangingFit {
    pub model: RangingModel,
    pub r_squared: f64,
    pub rmse: f64,
    pub iterations: usize,
}

/// Least-squares fit of `(kappa, f, c)` to `(rho*, u)` calibration samples.
///
/// The start point comes from a profile search: for a fixed asymptote
/// `r = f / kappa` the model is linear, `u = (f + c) + f r / (rho - r)`, so
/// each grid value of `r` is solved in closed form and the best one seeds a
/// Levenberg-Marquardt refinement with the analytic Jacobian.
pub fn fit_ranging_model(samples: &[(f64, f64)]) -> Result<RangingFit, OpticsError> {
    if samples.len() < MIN_SAMPLES {
        return Err(OpticsError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if samples
        .iter()
        .any(|&(rho, u)| !(rho.is_finite() && rho > 0.0 && u.is_finite()))
    {
        return Err(OpticsError::InvalidParameter(
            "samples need positive finite rho and finite depth".into(),
        ));
    }
    let mut rhos: Vec<f64> = samples.iter().map(|s| s.0).collect();
    rhos.sort_by(f64::total_cmp);
    if rhos.windows(2).any(|w| w[0] == w[1]) {
        return Err(OpticsError::DuplicatePositions);
    }
    let rho_min = rhos[0];

    let start = profile_start(samples, rho_min).ok_or(OpticsError::FitFailed {
        best: RangingModel {
            kappa: 1.0,
            focal: f64::NAN,
            offset: f64::NAN,
        },
        sse: f64::INFINITY,
        iterations: 0,
    })?;

    let (model, iterations) = levenberg_marquardt(samples, start, rho_min)?;
    let sse = sse(samples, &model).expect("LM keeps the iterate in the model domain");
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sst: f64 = samples.iter().map(|s| (s.1 - mean).powi(2)).sum();
    Ok(RangingFit {
        model,
        r_squared: 1.0 - sse / sst,
        rmse: (sse / n).sqrt(),
        iterations,
    })
}

fn sse(samples: &[(f64, f64)], model: &RangingModel) -> Option<f64> {
    let mut total = 0.0;
    for &(rho, u) in samples {
        let r = u - model.depth(rho).ok()?;
        total += r * r;
    }
    Some(total)
}

/// Closed-form fit of `u = b + a x`, `x = 1 / (rho - r)`, for each grid `r`.
fn profile_start(samples: &[(f64, f64)], rho_min: f64) -> Option<RangingModel> {
    let mut best: Option<(f64, RangingModel)> = None;
    for k in 0..PROFILE_GRID {
        // Log-spaced gap to the smallest motor position: the curvature lives
        // close to the asymptote.
        let gap = rho_min * 10f64.powf(-7.0 + 7.0 * k as f64 / (PROFILE_GRID - 1) as f64);
        let r = rho_min - gap;
        if r <= 0.0 {
            continue;
        }
        let n = samples.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(rho, u) in samples {
            let x = 1.0 / (rho - r);
            sx += x;
            sy += u;
            sxx += x * x;
            sxy += x * u;
        }
        let det = n * sxx - sx * sx;
        if det.abs() < f64::EPSILON * n * sxx {
            continue;
        }
        let a = (n * sxy - sx * sy) / det;
        let b = (sy - a * sx) / n;
        if !(a > 0.0) {
            continue;
        }
        let focal = a / r;
        let Ok(model) = RangingModel::new(focal / r, focal, b - focal) else {
            continue;
        };
        let Some(s) = sse(samples, &model) else {
            continue;
        };
        if best.is_none_or(|(bs, _)| s < bs) {
            best = Some((s, model));
        }
    }
    best.map(|(_, m)| m)
}

fn levenberg_marquardt(
    samples: &[(f64, f64)],
    start: RangingModel,
    rho_min: f64,
) -> Result<(RangingModel, usize), OpticsError> {
    let mut params = Vector3::new(start.kappa, start.focal, start.offset);
    let mut model = start;
    let mut cost = sse(samples, &model).unwrap_or(f64::INFINITY);
    let mut lambda = 1e-3;

    for iter in 1..=MAX_FIT_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for &(rho, u) in samples {
            let g = Vector3::from(model.gradient(rho));
            let r = u - model.depth(rho).expect("iterate stays in domain");
            jtj += g * g.transpose();
            jtr += g * r;
        }
        loop {
            let mut damped = jtj;
            for d in 0..3 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                if lambda > 1e30 {
                    return Ok((model, iter));
                }
                continue;
            };
            if step.norm() <= STEP_TOLERANCE * (params.norm() + STEP_TOLERANCE) {
                return Ok((model, iter));
            }
            let trial = params + step;
            let in_domain = trial[0] > 0.0 && trial[1] > 0.0 && trial[0] * rho_min > trial[1];
            let trial_cost = if in_domain {
                RangingModel::new(trial[0], trial[1], trial[2])
                    .ok()
                    .and_then(|m| sse(samples, &m).map(|c| (m, c)))
            } else {
                None
            };
            match trial_cost {
                Some((m, c)) if c <= cost => {
                    params = trial;
                    model = m;
                    cost = c;
                    lambda = (lambda * 0.1).max(1e-12);
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e30 {
                        return Ok((model, iter));
                    }
                }
            }
        }
    }
    Err(OpticsError::FitFailed {
        best: model,
        sse: cost,
        iterations: MAX_FIT_ITERATIONS,
    })
}

/// Calibration samples `(rho*, u)` at the given true depths, with Gaussian
/// noise of standard deviation `sigma` added to the recorded depth.
pub fn synthetic_calibration_samples<R: Rng + ?Sized>(
    model: &RangingModel,
    depths: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>, OpticsError> {
    let noise = Normal::new(0.0, sigma)
        .map_err(|e| OpticsError::InvalidParameter(format!("noise sigma: {e}")))?;
    depths
        .iter()
        .map(|&u| Ok((model.motor_position(u)?, u + noise.sample(rng))))
        .collect()
}
