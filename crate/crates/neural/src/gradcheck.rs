//! Central finite-difference verification of back-propagated gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::Graph;
use crate::layers::Dropout;
use crate::model::Trainable;
use crate::params::{Gradients, ParamId};

/// Gradients smaller than this in both estimates are compared absolutely.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

fn batch_loss<M: Trainable>(model: &M, batch: &[M::Example], smoothing: f64) -> f64 {
    batch
        .iter()
        .map(|ex| {
            let mut g = Graph::new(model.params());
            let (l, _) = model.example_loss(&mut g, ex, &mut Dropout::inactive(), smoothing);
            g.scalar(l)
        })
        .sum()
}

fn analytic<M: Trainable>(model: &M, batch: &[M::Example], smoothing: f64) -> Gradients {
    let mut grads = model.params().zero_grads();
    for ex in batch {
        let mut g = Graph::new(model.params());
        let (l, _) = model.example_loss(&mut g, ex, &mut Dropout::inactive(), smoothing);
        g.backward(l, &mut grads);
    }
    grads
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(MAGNITUDE_FLOOR)
}

/// Compares analytic and central-difference gradients of the summed batch
/// loss on `samples` parameter coordinates drawn uniformly at random.
/// Parameters are restored exactly afterwards.
pub fn grad_check<M: Trainable>(
    model: &mut M,
    batch: &[M::Example],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> GradCheckReport {
    let smoothing = 0.0;
    let grads = analytic(model, batch, smoothing);
    let ids: Vec<ParamId> = model.params().ids().collect();
    let sizes: Vec<usize> = ids.iter().map(|&id| model.params().get(id).len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst: None,
    };
    for _ in 0..samples.min(total) {
        let mut flat = rng.gen_range(0..total);
        let mut p = 0;
        while flat >= sizes[p] {
            flat -= sizes[p];
            p += 1;
        }
        let id = ids[p];
        let original = model.params().get(id).data[flat];
        model.params_mut().get_mut(id).data[flat] = original + epsilon;
        let plus = batch_loss(model, batch, smoothing);
        model.params_mut().get_mut(id).data[flat] = original - epsilon;
        let minus = batch_loss(model, batch, smoothing);
        model.params_mut().get_mut(id).data[flat] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(grads.get(id).data[flat], numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some((model.params().name(id).to_owned(), flat));
        }
    }
    report
}
