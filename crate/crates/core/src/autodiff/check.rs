use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{ComputeGraph, Var};
use super::tensor::ParamStore;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

/// Compares backward gradients against central differences.
///
/// `f` must rebuild the forward graph from the current parameter values and
/// return the scalar loss node; it must be deterministic. Up to
/// `max(64, ...)` coordinates are sampled uniformly across all parameters
/// that require gradients (all of them when there are fewer). Returns the
/// largest relative error seen.
pub fn grad_check<F>(store: &mut ParamStore, h: f64, seed: u64, f: F) -> f64
where
    F: Fn(&ParamStore) -> (ComputeGraph, Var),
{
    grad_check_sampled(store, h, seed, 64, f)
}

pub fn grad_check_sampled<F>(store: &mut ParamStore, h: f64, seed: u64, min_samples: usize, f: F) -> f64
where
    F: Fn(&ParamStore) -> (ComputeGraph, Var),
{
    store.zero_grad();
    let (mut graph, loss) = f(store);
    graph
        .backward(loss, store)
        .expect("grad_check: loss must be a scalar node");

    let coords: Vec<(usize, usize)> = store
        .iter()
        .filter(|(_, t)| t.requires_grad())
        .flat_map(|(id, t)| (0..t.values.len()).map(move |k| (id.0, k)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = if coords.len() <= min_samples {
        (0..coords.len()).collect()
    } else {
        sample(&mut rng, coords.len(), min_samples).into_vec()
    };

    let eval = |store: &ParamStore| {
        let (g, loss) = f(store);
        g.scalar(loss)
    };

    let mut worst = 0.0f64;
    for k in picked {
        let (pid, flat) = coords[k];
        let id = super::tensor::ParamId(pid);
        let analytic = store.get(id).grad.as_ref().unwrap().as_slice().unwrap()[flat];
        let original = store.get(id).values.as_slice().unwrap()[flat];
        store.get_mut(id).values.as_slice_mut().unwrap()[flat] = original + h;
        let plus = eval(store);
        store.get_mut(id).values.as_slice_mut().unwrap()[flat] = original - h;
        let minus = eval(store);
        store.get_mut(id).values.as_slice_mut().unwrap()[flat] = original;
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}
