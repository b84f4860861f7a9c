use super::layers::ParamSet;
use super::tensor::Tensor;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    pub fn failures(&self) -> impl Iterator<Item = &Probe> {
        self.probes.iter().filter(|p| p.rel_error >= self.tolerance)
    }
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps vanishing gradients
/// from turning round-off into large relative errors.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares `analytic` against central differences of `loss` with step `h`
/// at `probes` random coordinates: a tensor is drawn uniformly, then an
/// element within it.
pub fn grad_check(
    params: &ParamSet<f64>,
    analytic: &[Tensor<f64>],
    mut loss: impl FnMut(&ParamSet<f64>) -> f64,
    probes: usize,
    h: f64,
    tolerance: f64,
    rng: &mut impl Rng,
) -> GradCheckReport {
    assert_eq!(params.tensors.len(), analytic.len());
    let mut work = params.clone();
    let mut out = Vec::with_capacity(probes);
    let mut max_rel: f64 = 0.0;
    for _ in 0..probes {
        let t = rng.gen_range(0..params.tensors.len());
        let i = rng.gen_range(0..params.tensors[t].len());
        let orig = work.tensors[t].data[i];
        work.tensors[t].data[i] = orig + h;
        let up = loss(&work);
        work.tensors[t].data[i] = orig - h;
        let down = loss(&work);
        work.tensors[t].data[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[t].data[i];
        let rel = relative_error(a, numeric);
        max_rel = max_rel.max(rel);
        out.push(Probe { tensor: t, index: i, analytic: a, numeric, rel_error: rel });
    }
    GradCheckReport { probes: out, max_rel_error: max_rel, tolerance }
}
