//! Sound output enclosures for boxes of inputs.
//!
//! Bounds are propagated symbolically: every neuron carries a lower and an
//! upper linear function of the varying inputs, and unstable ReLUs are
//! relaxed by the usual triangle construction. Concrete intervals come from
//! minimising/maximising those functions over the box and are intersected
//! with plain interval arithmetic.

use crate::nn::{Affine, Layer};

/// Activation phase assumed for a ReLU during branch-and-bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Unfixed,
    Active,
    Inactive,
}

/// Interval enclosure of every neuron after one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LayerBounds {
    pub fn contains(&self, values: &[f64], tol: f64) -> bool {
        values.len() == self.lo.len()
            && values
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| l - tol <= v && v <= h + tol)
    }
}

/// Interval enclosures after every layer of `layers` for inputs in the box
/// `[lo, hi]`.
///
/// # Panics
///
/// If the box dimension does not match the first layer.
pub fn propagate_bounds(layers: &[Layer], lo: &[f64], hi: &[f64]) -> Vec<LayerBounds> {
    assert_eq!(lo.len(), hi.len(), "box bounds differ in length");
    let varying: Vec<usize> = (0..lo.len()).collect();
    let mut phases: Vec<Vec<Phase>> = relu_widths(layers, lo.len())
        .into_iter()
        .map(|w| vec![Phase::Unfixed; w])
        .collect();
    let pass = symbolic_pass(layers, lo, hi, &varying, &mut phases);
    pass.layers
}

/// Widths of the inputs to each ReLU layer, in order.
pub(crate) fn relu_widths(layers: &[Layer], input_dim: usize) -> Vec<usize> {
    let mut width = input_dim;
    let mut out = Vec::new();
    for layer in layers {
        match layer {
            Layer::Affine(a) => width = a.out_dim(),
            Layer::Relu => out.push(width),
        }
    }
    out
}

/// Linear function `coef · x[varying] + constant`.
#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub coef: Vec<f64>,
    pub constant: f64,
}

impl Linear {
    fn zero(dim: usize) -> Self {
        Self {
            coef: vec![0.0; dim],
            constant: 0.0,
        }
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            coef: self.coef.iter().map(|c| c * s).collect(),
            constant: self.constant * s,
        }
    }

    fn add_scaled(&mut self, other: &Linear, s: f64) {
        for (a, b) in self.coef.iter_mut().zip(&other.coef) {
            *a += s * b;
        }
        self.constant += s * other.constant;
    }

    /// Minimum and maximum over the box `[vlo, vhi]` of the varying inputs.
    pub fn range(&self, vlo: &[f64], vhi: &[f64]) -> (f64, f64) {
        let mut min = self.constant;
        let mut max = self.constant;
        for ((&c, &l), &h) in self.coef.iter().zip(vlo).zip(vhi) {
            if c >= 0.0 {
                min += c * l;
                max += c * h;
            } else {
                min += c * h;
                max += c * l;
            }
        }
        (min, max)
    }

    /// For each varying input, whether the upper end of its range maximises
    /// the function.
    pub fn maximising_corner(&self) -> Vec<bool> {
        self.coef.iter().map(|&c| c >= 0.0).collect()
    }
}

/// Upper bound on `obj` over the points of the box that satisfy every
/// `cut >= 0`, from `max_box(obj + Σ λ_i cut_i)` with `λ >= 0` improved by
/// projected subgradient steps. Stops early once the bound drops below
/// `target`. Also returns the box corner maximising the best relaxation.
pub(crate) fn lagrangian_max(
    obj: &Linear,
    cuts: &[Linear],
    vlo: &[f64],
    vhi: &[f64],
    target: f64,
    iterations: usize,
) -> (f64, Vec<bool>) {
    let mut lambda = vec![0.0; cuts.len()];
    let mut best = (f64::INFINITY, obj.maximising_corner());
    for _ in 0..iterations {
        let mut f = obj.clone();
        for (cut, &l) in cuts.iter().zip(&lambda) {
            if l > 0.0 {
                f.add_scaled(cut, l);
            }
        }
        let corner = f.maximising_corner();
        let value = f.range(vlo, vhi).1;
        if value < best.0 {
            best = (value, corner.clone());
        }
        if best.0 < target {
            break;
        }
        // Subgradient: each cut evaluated at the maximising corner.
        let grad: Vec<f64> = cuts
            .iter()
            .map(|cut| {
                cut.constant
                    + cut
                        .coef
                        .iter()
                        .zip(&corner)
                        .zip(vlo.iter().zip(vhi))
                        .map(|((c, &up), (&l, &h))| c * if up { h } else { l })
                        .sum::<f64>()
            })
            .collect();
        let norm: f64 = grad
            .iter()
            .zip(&lambda)
            .filter(|&(&g, &l)| g < 0.0 || l > 0.0)
            .map(|(g, _)| g * g)
            .sum();
        if norm <= 0.0 {
            // Every cut holds at the maximiser: the bound cannot improve.
            break;
        }
        // Over-relaxed Polyak step, so the bound can pass the target
        // rather than approach it.
        let step = 1.5 * (value - target) / norm;
        for (l, g) in lambda.iter_mut().zip(&grad) {
            *l = (*l - step * g).max(0.0);
        }
    }
    best
}

pub(crate) struct SymbolicPass {
    pub layers: Vec<LayerBounds>,
    /// Pre-activation bounds feeding each ReLU layer.
    pub pre_relu: Vec<LayerBounds>,
    pub out_lower: Vec<Linear>,
    pub out_upper: Vec<Linear>,
    /// Necessary conditions `cut(x) >= 0` implied by phases that were
    /// assumed rather than forced by the bounds.
    pub cuts: Vec<Linear>,
    /// Some assumed phase contradicts the bounds: the region is empty.
    pub infeasible: bool,
}

/// Runs the symbolic propagation. `lo`/`hi` is the full input box; only
/// features listed in `varying` get symbolic coordinates, the others must
/// satisfy `lo == hi` and are folded into constants. Phases are read from
/// `phases`; ReLUs whose bounds are already stable are left untouched.
pub(crate) fn symbolic_pass(
    layers: &[Layer],
    lo: &[f64],
    hi: &[f64],
    varying: &[usize],
    phases: &mut [Vec<Phase>],
) -> SymbolicPass {
    let dim = varying.len();
    let vlo: Vec<f64> = varying.iter().map(|&j| lo[j]).collect();
    let vhi: Vec<f64> = varying.iter().map(|&j| hi[j]).collect();

    let mut lower: Vec<Linear> = Vec::with_capacity(lo.len());
    let mut slot = 0;
    for (j, &l) in lo.iter().enumerate() {
        let mut f = Linear::zero(dim);
        if slot < dim && varying[slot] == j {
            f.coef[slot] = 1.0;
            slot += 1;
        } else {
            f.constant = l;
        }
        lower.push(f);
    }
    let mut upper = lower.clone();
    let mut cur_lo = lo.to_vec();
    let mut cur_hi = hi.to_vec();

    let mut out_layers = Vec::with_capacity(layers.len());
    let mut pre_relu = Vec::new();
    let mut relu_index = 0;
    let mut infeasible = false;
    let mut cuts = Vec::new();

    for layer in layers {
        match layer {
            Layer::Affine(a) => {
                let (nl, nu) = affine_symbolic(a, &lower, &upper, dim);
                let (il, ih) = affine_interval(a, &cur_lo, &cur_hi);
                let mut next_lo = Vec::with_capacity(nl.len());
                let mut next_hi = Vec::with_capacity(nl.len());
                for k in 0..nl.len() {
                    let (l, _) = nl[k].range(&vlo, &vhi);
                    let (_, h) = nu[k].range(&vlo, &vhi);
                    next_lo.push(l.max(il[k]));
                    next_hi.push(h.min(ih[k]));
                }
                lower = nl;
                upper = nu;
                cur_lo = next_lo;
                cur_hi = next_hi;
            }
            Layer::Relu => {
                let phase = &mut phases[relu_index];
                relu_index += 1;
                pre_relu.push(LayerBounds {
                    lo: cur_lo.clone(),
                    hi: cur_hi.clone(),
                });
                for k in 0..cur_lo.len() {
                    let (l, h) = (cur_lo[k], cur_hi[k]);
                    let effective = match phase[k] {
                        Phase::Active => {
                            if h < 0.0 {
                                infeasible = true;
                            } else if l < 0.0 {
                                cuts.push(upper[k].clone());
                            }
                            Phase::Active
                        }
                        Phase::Inactive => {
                            if l > 0.0 {
                                infeasible = true;
                            } else if h > 0.0 {
                                cuts.push(lower[k].scaled(-1.0));
                            }
                            Phase::Inactive
                        }
                        Phase::Unfixed if l >= 0.0 => Phase::Active,
                        Phase::Unfixed if h <= 0.0 => Phase::Inactive,
                        Phase::Unfixed => Phase::Unfixed,
                    };
                    match effective {
                        Phase::Active => {
                            cur_lo[k] = l.max(0.0);
                        }
                        Phase::Inactive => {
                            lower[k] = Linear::zero(dim);
                            upper[k] = Linear::zero(dim);
                            cur_lo[k] = 0.0;
                            cur_hi[k] = 0.0;
                        }
                        Phase::Unfixed => {
                            let slope = h / (h - l);
                            let mut u = upper[k].scaled(slope);
                            u.constant -= slope * l;
                            upper[k] = u;
                            lower[k] = if h >= -l {
                                lower[k].clone()
                            } else {
                                Linear::zero(dim)
                            };
                            cur_lo[k] = 0.0;
                        }
                    }
                }
            }
        }
        if infeasible {
            break;
        }
        out_layers.push(LayerBounds {
            lo: cur_lo.clone(),
            hi: cur_hi.clone(),
        });
    }

    SymbolicPass {
        layers: out_layers,
        pre_relu,
        out_lower: lower,
        out_upper: upper,
        cuts,
        infeasible,
    }
}

fn affine_symbolic(
    a: &Affine,
    lower: &[Linear],
    upper: &[Linear],
    dim: usize,
) -> (Vec<Linear>, Vec<Linear>) {
    let mut nl = Vec::with_capacity(a.out_dim());
    let mut nu = Vec::with_capacity(a.out_dim());
    for (row, &b) in a.weights.iter().zip(&a.bias) {
        let mut l = Linear::zero(dim);
        let mut u = Linear::zero(dim);
        l.constant = b;
        u.constant = b;
        for (j, &w) in row.iter().enumerate() {
            if w > 0.0 {
                l.add_scaled(&lower[j], w);
                u.add_scaled(&upper[j], w);
            } else if w < 0.0 {
                l.add_scaled(&upper[j], w);
                u.add_scaled(&lower[j], w);
            }
        }
        nl.push(l);
        nu.push(u);
    }
    (nl, nu)
}

fn affine_interval(a: &Affine, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    a.weights
        .iter()
        .zip(&a.bias)
        .map(|(row, &b)| {
            row.iter()
                .zip(lo.iter().zip(hi))
                .fold((b, b), |(l, h), (&w, (&x_lo, &x_hi))| {
                    if w >= 0.0 {
                        (l + w * x_lo, h + w * x_hi)
                    } else {
                        (l + w * x_hi, h + w * x_lo)
                    }
                })
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_affine_interval() {
        let layers = vec![Layer::affine(vec![vec![1.0, -1.0]], vec![0.0])];
        let out = propagate_bounds(&layers, &[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(out[0].lo, vec![-1.0]);
        assert_eq!(out[0].hi, vec![1.0]);
    }

    #[test]
    fn point_box_is_exact() {
        let net = fixtures::running_example();
        let out = propagate_bounds(net.layers(), &[1.0; 3], &[1.0; 3]);
        assert_eq!(out[0].lo, vec![6.0, 9.0, 11.0]);
        assert_eq!(out[0].hi, vec![6.0, 9.0, 11.0]);
        assert_eq!(out[2].lo, vec![15.0, -4.0]);
        assert_eq!(out[2].hi, vec![15.0, -4.0]);
    }

    #[test]
    fn symbolic_beats_plain_intervals_on_cancellation() {
        // x - x is exactly zero; interval arithmetic would give [-1, 1].
        let layers = vec![
            Layer::affine(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0]),
            Layer::Relu,
            Layer::affine(vec![vec![1.0, -1.0]], vec![0.0]),
        ];
        let out = propagate_bounds(&layers, &[0.0], &[1.0]);
        assert_eq!(out[2].lo, vec![0.0]);
        assert_eq!(out[2].hi, vec![0.0]);
    }

    #[test]
    fn monte_carlo_enclosure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let net = fixtures::random_network(&fixtures::NetSpec::interval(2..=5), &mut rng);
            let m = net.input_dim();
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for _ in 0..m {
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                lo.push(a.min(b));
                hi.push(a.max(b));
            }
            let bounds = propagate_bounds(net.layers(), &lo, &hi);
            for _ in 0..250 {
                let x: Vec<f64> = (0..m).map(|j| rng.gen_range(lo[j]..=hi[j])).collect();
                let trace = net.trace(&x).unwrap();
                for (layer, b) in bounds.iter().enumerate() {
                    assert!(b.contains(&trace[layer + 1], 1e-9), "layer {layer}");
                }
            }
        }
    }

    #[test]
    fn dual_bound_uses_cuts() {
        let lin = |coef: Vec<f64>, constant| Linear { coef, constant };
        let (lo, hi) = ([0.0, 0.0], [1.0, 1.0]);
        // x0 + x1 with x0 <= 0.5: never below the true maximum 1.5.
        let (b, _) = lagrangian_max(
            &lin(vec![1.0, 1.0], 0.0),
            &[lin(vec![-1.0, 0.0], 0.5)],
            &lo,
            &hi,
            1.4,
            30,
        );
        assert!((1.5 - 1e-12..=2.0).contains(&b));
        // x0 - 1 with x0 <= 0: refuted below -0.5.
        let (b, _) = lagrangian_max(
            &lin(vec![1.0, 0.0], -1.0),
            &[lin(vec![-1.0, 0.0], 0.0)],
            &lo,
            &hi,
            -0.5,
            30,
        );
        assert!(b < -0.5);
    }
}
