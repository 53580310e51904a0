//! Central finite-difference verification of analytic gradients.
//!
//! Runs in f64; a seeded subset of elements per parameter tensor is probed,
//! since a full sweep over every weight of even a toy network is quadratic
//! in cost.

use crate::error::Result;
use crate::graph::{NodeId, ParamSet, Tape};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_err < self.tolerance)
    }

    pub fn max_error(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Check parameter gradients of a scalar loss. `build` must construct the
/// same graph for the same parameter values (it is re-invoked for every
/// finite-difference probe).
pub fn grad_check_params<F>(
    params: &mut ParamSet<f64>,
    build: F,
    samples_per_tensor: usize,
    h: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet<f64>) -> Result<(Tape<f64>, NodeId)>,
{
    params.zero_grads();
    let (tape, loss) = build(params)?;
    tape.backward(loss, params)?;
    let analytic: Vec<(Vec<f64>, Vec<f64>)> = params
        .iter()
        .map(|(_, e)| (e.grad_w.clone(), e.grad_b.clone()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let n_params = params.len();
    for pi in 0..n_params {
        let id = crate::graph::ParamId(pi);
        let name = params.entry(id).name.clone();
        for weights_side in [true, false] {
            let len = if weights_side {
                params.entry(id).conv.weights.len()
            } else {
                params.entry(id).conv.bias.len()
            };
            if len == 0 {
                continue;
            }
            let mut max_err = 0.0f64;
            let count = samples_per_tensor.min(len);
            for _ in 0..count {
                let i = rng.gen_range(0..len);
                let orig = if weights_side {
                    params.entry(id).conv.weights[i]
                } else {
                    params.entry(id).conv.bias[i]
                };
                let eval = |v: f64, params: &mut ParamSet<f64>| -> Result<f64> {
                    if weights_side {
                        params.entry_mut(id).conv.weights[i] = v;
                    } else {
                        params.entry_mut(id).conv.bias[i] = v;
                    }
                    let (tape, loss) = build(params)?;
                    tape.value(loss).scalar_value()
                };
                let lp = eval(orig + h, params)?;
                let lm = eval(orig - h, params)?;
                eval(orig, params)?;
                let numeric = (lp - lm) / (2.0 * h);
                let a = if weights_side {
                    analytic[pi].0[i]
                } else {
                    analytic[pi].1[i]
                };
                max_err = max_err.max(rel_err(a, numeric));
            }
            entries.push(GradCheckEntry {
                name: format!("{}.{}", name, if weights_side { "w" } else { "b" }),
                max_rel_err: max_err,
                checked: count,
            });
        }
    }
    Ok(GradCheckReport { entries, tolerance })
}

/// Compare an analytic input gradient against central differences of a
/// loss functional, over a seeded element subset. Returns the max relative
/// error observed.
pub fn grad_check_input<F>(
    input: &Tensor<f64>,
    analytic: &Tensor<f64>,
    loss_of: F,
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = input.data().len();
    let mut probe = input.clone();
    let mut max_err = 0.0f64;
    for _ in 0..samples.min(len) {
        let i = rng.gen_range(0..len);
        let orig = input.data()[i];
        probe.data_mut()[i] = orig + h;
        let lp = loss_of(&probe)?;
        probe.data_mut()[i] = orig - h;
        let lm = loss_of(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        max_err = max_err.max(rel_err(analytic.data()[i], numeric));
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::ConvParams;
    use crate::tensor::Shape;

    fn random_tensor(shape: Shape, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn random_conv(kh: usize, kw: usize, ci: usize, co: usize, seed: u64) -> ConvParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ConvParams::zeros(kh, kw, ci, co);
        for w in p.weights.iter_mut() {
            *w = rng.gen_range(-0.5..0.5);
        }
        for b in p.bias.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        p
    }

    #[test]
    fn single_linear_op_near_machine_eps() {
        let mut params = ParamSet::new();
        let p = params.add_conv("lin", random_conv(1, 1, 1, 1, 1));
        let input = random_tensor(Shape::new(1, 1, 3, 3), 2);
        let report = grad_check_params(
            &mut params,
            |params| {
                let mut tape = Tape::new();
                let x = tape.input(input.clone());
                let y = tape.conv2d(params, p, x)?;
                let loss = tape.sum_all(y);
                Ok((tape, loss))
            },
            8,
            1e-6,
            1e-4,
            3,
        )
        .unwrap();
        assert!(report.passed());
        assert!(report.max_error() < 1e-7, "err {}", report.max_error());
    }

    #[test]
    fn conv2d_param_and_input_gradients() {
        let mut params = ParamSet::new();
        let p = params.add_conv("conv", random_conv(3, 3, 2, 4, 10));
        let input = random_tensor(Shape::new(1, 2, 5, 5), 11);
        let target = random_tensor(Shape::new(1, 4, 5, 5), 12);

        let report = grad_check_params(
            &mut params,
            |params| {
                let mut tape = Tape::new();
                let x = tape.input(input.clone());
                let t = tape.input(target.clone());
                let y = tape.conv2d(params, p, x)?;
                let loss = tape.huber_mean(y, t, 1.0)?;
                Ok((tape, loss))
            },
            10,
            1e-6,
            1e-4,
            13,
        )
        .unwrap();
        assert!(report.passed(), "max err {}", report.max_error());

        // input side
        params.zero_grads();
        let mut tape = Tape::new();
        let x = tape.input(input.clone());
        let t = tape.input(target.clone());
        let y = tape.conv2d(&params, p, x).unwrap();
        let loss = tape.huber_mean(y, t, 1.0).unwrap();
        let grads = tape.backward(loss, &mut params).unwrap();
        let err = grad_check_input(
            &input,
            grads.get(x).unwrap(),
            |probe| {
                let mut tape = Tape::new();
                let x = tape.input(probe.clone());
                let t = tape.input(target.clone());
                let y = tape.conv2d(&params, p, x)?;
                let loss = tape.huber_mean(y, t, 1.0)?;
                tape.value(loss).scalar_value()
            },
            20,
            1e-6,
            14,
        )
        .unwrap();
        assert!(err < 1e-4, "input grad err {err}");
    }

    #[test]
    fn resblock_graph_passes() {
        let mut params = ParamSet::new();
        let a = params.add_conv("res.conv_a", random_conv(3, 3, 3, 3, 20));
        let b = params.add_conv("res.conv_b", random_conv(3, 3, 3, 3, 21));
        let input = random_tensor(Shape::new(1, 3, 4, 4), 22);
        // keep pre-activations away from the ReLU kink
        let input = input.map(|v| v + 3.0);
        let target = random_tensor(Shape::new(1, 3, 4, 4), 23);
        let report = grad_check_params(
            &mut params,
            |params| {
                let mut tape = Tape::new();
                let x = tape.input(input.clone());
                let t = tape.input(target.clone());
                let h1 = tape.conv2d(params, a, x)?;
                let r = tape.relu(h1);
                let h2 = tape.conv2d(params, b, r)?;
                let out = tape.add(h2, x)?;
                let loss = tape.huber_mean(out, t, 1.0)?;
                Ok((tape, loss))
            },
            10,
            1e-6,
            1e-4,
            24,
        )
        .unwrap();
        assert!(report.passed(), "max err {}", report.max_error());
    }

    #[test]
    fn relu_away_from_kink_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let shape = Shape::new(1, 2, 4, 4);
        // sample inputs with |x| >= 0.1 so no probe crosses the kink
        let data: Vec<f64> = (0..shape.len())
            .map(|_| {
                let mag = rng.gen_range(0.1..1.0);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let input = Tensor::from_vec(shape, data).unwrap();
        let mut params = ParamSet::new();
        let mut tape = Tape::new();
        let x = tape.input(input.clone());
        let r = tape.relu(x);
        let loss = tape.sum_all(r);
        let grads = tape.backward(loss, &mut params).unwrap();
        let err = grad_check_input(
            &input,
            grads.get(x).unwrap(),
            |probe| {
                let mut tape = Tape::new();
                let x = tape.input(probe.clone());
                let r = tape.relu(x);
                let loss = tape.sum_all(r);
                tape.value(loss).scalar_value()
            },
            32,
            1e-6,
            31,
        )
        .unwrap();
        assert!(err < 1e-4, "relu grad err {err}");
    }
}
