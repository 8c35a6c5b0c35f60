//! Central-difference verification of analytic gradients (64-bit only).

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::rng::{streams, RngStream};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Coordinates sampled per parameter; `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    /// When set, checks this many unit directions inside each parameter
    /// instead of single coordinates. Each direction is the analytic
    /// gradient direction plus an independent random unit vector, so the
    /// directional derivative stays near `|g| / sqrt(2)`, well above the
    /// roundoff floor of the central difference, while a wrong gradient
    /// still disagrees with the numeric slope along it.
    pub directions_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_coords_per_param: None,
            directions_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat coordinate (or direction index) of the worst
    /// disagreement.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at `worst`.
    pub worst_values: (f64, f64),
    pub coords_checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval_loss<F>(store: &ParamStore<f64>, f: &F) -> Result<f64>
where
    F: for<'a> Fn(&mut Graph<'a, f64>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let out = f(&mut g)?;
    let value = g.value(out).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite {
            op: "gradient_check",
        });
    }
    Ok(value)
}

/// Compares the tape gradient of the scalar built by `f` with central
/// differences, over every trainable parameter of `store`.
pub fn gradient_check<F>(store: &mut ParamStore<f64>, f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Graph<'a, f64>) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(&*store);
        let out = f(&mut g)?;
        if !g.value(out).data()[0].is_finite() {
            return Err(Error::NonFinite {
                op: "gradient_check",
            });
        }
        g.backward(out)?.into_params()
    };
    let mut rng = RngStream::new(opts.seed, streams::GRADCHECK);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        coords_checked: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let param = store.get(id);
        if param.frozen {
            continue;
        }
        let width = param.value.last_dim();
        let mut coords: Vec<usize> = match &param.trainable_rows {
            Some(rows) => rows
                .iter()
                .flat_map(|&r| r * width..(r + 1) * width)
                .collect(),
            None => (0..param.numel()).collect(),
        };
        if let Some(limit) = opts.max_coords_per_param {
            if coords.len() > limit {
                rng.shuffle(&mut coords);
                coords.truncate(limit);
                coords.sort_unstable();
            }
        }
        let name = param.name.clone();
        if let Some(k) = opts.directions_per_param {
            let g: Vec<f64> = coords
                .iter()
                .map(|&c| analytic[id.index()].as_ref().map_or(0.0, |t| t.data()[c]))
                .collect();
            let g_hat = unit(g.clone());
            for d in 0..k {
                let r = unit(coords.iter().map(|_| rng.normal()).collect());
                let v = unit(g_hat.iter().zip(&r).map(|(a, b)| a + b).collect());
                let a: f64 = g.iter().zip(&v).map(|(gi, vi)| gi * vi).sum();
                let original: Vec<f64> = coords.iter().map(|&c| store.get(id).value.data()[c]).collect();
                let shift = |sign: f64, store: &mut ParamStore<f64>| {
                    let data = store.get_mut(id).value.data_mut();
                    for ((&c, vi), o) in coords.iter().zip(&v).zip(&original) {
                        data[c] = o + sign * opts.step * vi;
                    }
                };
                shift(1.0, store);
                let plus = eval_loss(store, &f);
                shift(-1.0, store);
                let minus = eval_loss(store, &f);
                shift(0.0, store);
                let numeric = (plus? - minus?) / (2.0 * opts.step);
                record(&mut report, &name, d, a, numeric);
            }
            continue;
        }
        for c in coords {
            let a = analytic[id.index()]
                .as_ref()
                .map_or(0.0, |t| t.data()[c]);
            let original = store.get(id).value.data()[c];
            store.get_mut(id).value.data_mut()[c] = original + opts.step;
            let plus = eval_loss(store, &f);
            store.get_mut(id).value.data_mut()[c] = original - opts.step;
            let minus = eval_loss(store, &f);
            store.get_mut(id).value.data_mut()[c] = original;
            let numeric = (plus? - minus?) / (2.0 * opts.step);
            record(&mut report, &name, c, a, numeric);
        }
    }
    Ok(report)
}

/// `v / |v|`, or `v` unchanged when it is zero.
fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn record(report: &mut GradCheckReport, name: &str, at: usize, analytic: f64, numeric: f64) {
    let err = relative_error(analytic, numeric);
    report.coords_checked += 1;
    if report.worst.is_none() || err > report.max_rel_error {
        report.max_rel_error = err;
        report.worst = Some((name.to_string(), at));
        report.worst_values = (analytic, numeric);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Init;

    #[test]
    fn sum_of_squares_matches_closely() {
        let mut store = ParamStore::<f64>::new();
        store.add("x", &[5], Init::Uniform(-2.0, 2.0), 1).unwrap();
        let id = store.id("x").unwrap();
        let report = gradient_check(
            &mut store,
            |g| {
                let x = g.param(id);
                let sq = g.mul(x, x)?;
                g.sum(sq)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.coords_checked, 5);
    }

    #[test]
    fn directional_mode_catches_a_wrong_gradient() {
        let mut store = ParamStore::<f64>::new();
        store.add("x", &[4], Init::Uniform(-2.0, 2.0), 3).unwrap();
        let id = store.id("x").unwrap();
        let opts = GradCheckOptions {
            directions_per_param: Some(3),
            ..GradCheckOptions::default()
        };
        let good = gradient_check(
            &mut store,
            |g| {
                let x = g.param(id);
                let t = g.tanh(x)?;
                g.sum(t)
            },
            &opts,
        )
        .unwrap();
        assert!(good.max_rel_error < 1e-8, "{good:?}");
        assert_eq!(good.coords_checked, 3);
        // a constant copy of x cuts one gradient path, so the tape sees
        // only half of d(x*x)
        let bad = gradient_check(
            &mut store,
            |g| {
                let x = g.param(id);
                let frozen = g.constant(g.value(x).clone());
                let y = g.mul(x, frozen)?;
                g.sum(y)
            },
            &opts,
        )
        .unwrap();
        assert!(bad.max_rel_error > 0.4, "{bad:?}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut store = ParamStore::<f64>::new();
        store.add("x", &[3], Init::Uniform(-1.0, 1.0), 2).unwrap();
        let id = store.id("x").unwrap();
        let report = gradient_check(
            &mut store,
            |g| {
                let x = g.param(id);
                let zero = g.affine(x, 0.0, 4.0)?;
                g.sum(zero)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut store = ParamStore::<f64>::new();
        store.add("x", &[2], Init::Constant(-1.0), 0).unwrap();
        let id = store.id("x").unwrap();
        let out = gradient_check(
            &mut store,
            |g| {
                let x = g.param(id);
                let big = g.affine(x, 1e308, 0.0)?;
                let bigger = g.affine(big, 10.0, 0.0)?;
                g.sum(bigger)
            },
            &GradCheckOptions::default(),
        );
        assert!(matches!(out, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
