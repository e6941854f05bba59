use std::time::Instant;

use super::bounds::{lagrangian_max, relu_widths, symbolic_pass, Linear, Phase};
use super::{
    margin, tie_eps, BudgetKind, Engine, FeatureConstraint, Query, SearchStats, Verdict,
    VerifierConfig, VerifyError,
};
use crate::nn::{Affine, FeatureDomain, Layer, Network};

/// Ranges narrower than this are not bisected further.
const MIN_SPLIT_WIDTH: f64 = 1e-9;
/// Float slack on pruning so rounding never hides an exact tie.
const PRUNE_SLACK: f64 = 1e-9;
/// Relative slack when tightening boxes by phase conditions.
const CUT_SLACK: f64 = 1e-9;
/// Tightening passes per node before branching anyway.
const MAX_TIGHTEN_ROUNDS: usize = 8;
/// Subgradient steps per dual bound.
const DUAL_ITERATIONS: usize = 30;

/// The set of values a feature may still take inside a search node.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Span {
    /// Indices `start..end` into the feature's admissible value list.
    Points {
        start: usize,
        end: usize,
    },
    Range {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    spans: Vec<Span>,
    phases: Vec<Vec<Phase>>,
}

pub(super) struct Problem<'a> {
    net: &'a Network,
    class: usize,
    eps: f64,
    /// Admissible values per discrete feature (empty for ranges).
    values: Vec<Vec<f64>>,
    root: Vec<Span>,
    /// Layers with the logits replaced by `logit(c') - logit(c)`.
    margin_layers: Vec<Layer>,
    empty: bool,
}

impl<'a> Problem<'a> {
    pub fn new(net: &'a Network, query: &Query) -> Self {
        let class = query.excluded_class;
        let eps = tie_eps(net, query);
        let mut values = Vec::with_capacity(net.input_dim());
        let mut root = Vec::with_capacity(net.input_dim());
        let mut empty = false;
        for (c, d) in query.constraints.iter().zip(net.input_space().domains()) {
            let (vals, span) = match (*c, d) {
                (FeatureConstraint::Fixed(v), _) => (vec![v], None),
                (FeatureConstraint::Free, FeatureDomain::Discrete(vs)) => (vs.clone(), None),
                (FeatureConstraint::Box(lo, hi), FeatureDomain::Discrete(vs)) => (
                    vs.iter()
                        .copied()
                        .filter(|v| lo <= *v && *v <= hi)
                        .collect(),
                    None,
                ),
                (FeatureConstraint::Free, &FeatureDomain::Interval(lo, hi))
                | (FeatureConstraint::Box(lo, hi), &FeatureDomain::Interval(..)) => {
                    if lo == hi {
                        (vec![lo], None)
                    } else {
                        (Vec::new(), Some(Span::Range { lo, hi }))
                    }
                }
            };
            let span = span.unwrap_or(Span::Points {
                start: 0,
                end: vals.len(),
            });
            if matches!(span, Span::Points { end: 0, .. }) {
                empty = true;
            }
            values.push(vals);
            root.push(span);
        }

        let mut margin_layers = net.layers().to_vec();
        if let Some(Layer::Affine(last)) = margin_layers.last_mut() {
            *last = difference_layer(last, class);
        }

        Self {
            net,
            class,
            eps,
            values,
            root,
            margin_layers,
            empty,
        }
    }

    pub fn solve(&self, cfg: &VerifierConfig) -> Result<(Verdict, SearchStats), VerifyError> {
        check_deadline(cfg, 0)?;
        let points = self.point_count();
        if self.empty {
            return Ok((
                Verdict::Unsat,
                SearchStats {
                    engine: Engine::Enumeration,
                    nodes: 0,
                },
            ));
        }
        match points {
            Some(n) if n <= cfg.enumeration_cap => self.enumerate(cfg),
            _ => self.branch_and_bound(cfg),
        }
    }

    /// Size of the constrained space when every feature is discrete.
    fn point_count(&self) -> Option<u64> {
        self.root.iter().try_fold(1u64, |acc, s| match s {
            Span::Points { start, end } => Some(acc.saturating_mul((end - start) as u64)),
            Span::Range { .. } => None,
        })
    }

    fn check(&self, x: &[f64]) -> Option<Verdict> {
        let (gap, winner) = margin(&self.net.forward_unchecked(x), self.class);
        (gap >= -self.eps).then(|| Verdict::Sat {
            counterexample: x.to_vec(),
            winning_class: winner,
        })
    }

    fn enumerate(&self, cfg: &VerifierConfig) -> Result<(Verdict, SearchStats), VerifyError> {
        let varying: Vec<usize> = (0..self.values.len())
            .filter(|&j| self.values[j].len() > 1)
            .collect();
        let mut idx = vec![0usize; varying.len()];
        let mut x: Vec<f64> = self.values.iter().map(|v| v[0]).collect();
        let mut nodes = 0u64;
        loop {
            nodes += 1;
            if nodes > cfg.node_limit {
                return Err(VerifyError::Budget {
                    kind: BudgetKind::NodeLimit,
                    nodes,
                });
            }
            if nodes.is_multiple_of(4096) {
                check_deadline(cfg, nodes)?;
            }
            if let Some(v) = self.check(&x) {
                return Ok((
                    v,
                    SearchStats {
                        engine: Engine::Enumeration,
                        nodes,
                    },
                ));
            }
            // odometer step
            let mut k = 0;
            loop {
                if k == varying.len() {
                    return Ok((
                        Verdict::Unsat,
                        SearchStats {
                            engine: Engine::Enumeration,
                            nodes,
                        },
                    ));
                }
                let j = varying[k];
                idx[k] += 1;
                if idx[k] < self.values[j].len() {
                    x[j] = self.values[j][idx[k]];
                    break;
                }
                idx[k] = 0;
                x[j] = self.values[j][0];
                k += 1;
            }
        }
    }

    fn hull(&self, j: usize, span: Span) -> (f64, f64) {
        match span {
            Span::Points { start, end } => (self.values[j][start], self.values[j][end - 1]),
            Span::Range { lo, hi } => (lo, hi),
        }
    }

    fn pick(&self, j: usize, span: Span, upper: bool) -> f64 {
        let (lo, hi) = self.hull(j, span);
        if upper {
            hi
        } else {
            lo
        }
    }

    fn midpoint(&self, j: usize, span: Span) -> f64 {
        match span {
            Span::Points { start, end } => self.values[j][(start + end - 1) / 2],
            Span::Range { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// Narrows `spans` so every remaining point can satisfy each `cut >= 0`
    /// (coordinates as in `varying`). Returns `None` when some cut cannot be
    /// met, otherwise whether anything changed.
    fn tighten(
        &self,
        spans: &mut [Span],
        varying: &[usize],
        lo: &[f64],
        hi: &[f64],
        cuts: &[Linear],
    ) -> Option<bool> {
        let mut changed = false;
        for cut in cuts {
            let contrib: Vec<f64> = varying
                .iter()
                .zip(&cut.coef)
                .map(|(&j, &c)| (c * lo[j]).max(c * hi[j]))
                .collect();
            let max = cut.constant + contrib.iter().sum::<f64>();
            let tol = CUT_SLACK
                * (1.0 + cut.constant.abs() + contrib.iter().map(|c| c.abs()).sum::<f64>());
            if max < -tol {
                return None;
            }
            for (slot, &j) in varying.iter().enumerate() {
                let c = cut.coef[slot];
                if c == 0.0 {
                    continue;
                }
                // c * x_j >= -(rest of the maximum) - tol
                let bound = (-(max - contrib[slot]) - tol) / c;
                let keep_above = c > 0.0;
                match &mut spans[j] {
                    Span::Points { start, end } => {
                        let vals = &self.values[j];
                        if keep_above {
                            while *start < *end && vals[*start] < bound {
                                *start += 1;
                                changed = true;
                            }
                        } else {
                            while *start < *end && vals[*end - 1] > bound {
                                *end -= 1;
                                changed = true;
                            }
                        }
                        if start == end {
                            return None;
                        }
                    }
                    Span::Range { lo: a, hi: b } => {
                        if keep_above && bound > *a {
                            *a = bound;
                            changed = true;
                        } else if !keep_above && bound < *b {
                            *b = bound;
                            changed = true;
                        }
                        if *a > *b {
                            return None;
                        }
                    }
                }
            }
        }
        Some(changed)
    }

    fn branch_and_bound(
        &self,
        cfg: &VerifierConfig,
    ) -> Result<(Verdict, SearchStats), VerifyError> {
        let phases = relu_widths(&self.margin_layers, self.net.input_dim())
            .into_iter()
            .map(|w| vec![Phase::Unfixed; w])
            .collect();
        let mut stack = vec![Node {
            spans: self.root.clone(),
            phases,
        }];
        let mut nodes = 0u64;
        let m = self.root.len();

        while let Some(mut node) = stack.pop() {
            nodes += 1;
            if nodes > cfg.node_limit {
                return Err(VerifyError::Budget {
                    kind: BudgetKind::NodeLimit,
                    nodes,
                });
            }
            if nodes.is_multiple_of(256) {
                check_deadline(cfg, nodes)?;
            }

            // Bound the node, shrinking its box by the phase conditions until
            // nothing changes. If the round cap stops this early, the bounds
            // computed for the larger box remain sound for the smaller one.
            let mut rounds = 0;
            let bounded = loop {
                let (lo, hi): (Vec<f64>, Vec<f64>) =
                    (0..m).map(|j| self.hull(j, node.spans[j])).unzip();
                let varying: Vec<usize> = (0..m).filter(|&j| lo[j] < hi[j]).collect();
                let pass = symbolic_pass(&self.margin_layers, &lo, &hi, &varying, &mut node.phases);
                if pass.infeasible {
                    break None;
                }
                rounds += 1;
                match self.tighten(&mut node.spans, &varying, &lo, &hi, &pass.cuts) {
                    None => break None,
                    Some(true) if rounds < MAX_TIGHTEN_ROUNDS => continue,
                    Some(_) => break Some((lo, hi, varying, pass)),
                }
            };
            let Some((lo, hi, varying, pass)) = bounded else {
                continue;
            };
            let out = pass.layers.last().expect("network has layers");
            let (worst, ub) =
                out.hi
                    .iter()
                    .copied()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (k, h)| if h > acc.1 { (k, h) } else { acc },
                    );
            if ub < -(self.eps + PRUNE_SLACK * (1.0 + ub.abs())) {
                continue;
            }

            // Concrete probes: midpoint, the corners suggested by each margin's
            // linear bounds, then the two extreme corners.
            let mid: Vec<f64> = (0..m).map(|j| self.midpoint(j, node.spans[j])).collect();
            if let Some(v) = self.check(&mid) {
                return Ok(found(v, nodes));
            }
            if varying.is_empty() {
                continue;
            }
            let mut corners: Vec<Vec<bool>> = Vec::new();
            corners.push(pass.out_upper[worst].maximising_corner());
            for f in &pass.out_lower {
                corners.push(f.maximising_corner());
            }
            corners.push(vec![false; varying.len()]);
            corners.push(vec![true; varying.len()]);
            for corner in corners {
                let mut x = mid.clone();
                for (slot, &j) in varying.iter().enumerate() {
                    x[j] = self.pick(j, node.spans[j], corner[slot]);
                }
                if let Some(v) = self.check(&x) {
                    return Ok(found(v, nodes));
                }
            }

            // Split the most unstable free ReLU, if any.
            let mut best: Option<(usize, usize, f64)> = None;
            for (layer, bounds) in pass.pre_relu.iter().enumerate() {
                for k in 0..bounds.lo.len() {
                    let (l, h) = (bounds.lo[k], bounds.hi[k]);
                    if node.phases[layer][k] == Phase::Unfixed && l < 0.0 && h > 0.0 {
                        let width = h - l;
                        if best.is_none_or(|b| width > b.2) {
                            best = Some((layer, k, width));
                        }
                    }
                }
            }
            if let Some((layer, k, _)) = best {
                let (l, h) = (pass.pre_relu[layer].lo[k], pass.pre_relu[layer].hi[k]);
                let mut inactive = node.clone();
                inactive.phases[layer][k] = Phase::Inactive;
                node.phases[layer][k] = Phase::Active;
                // The child popped first is the one more likely to hold the max.
                if h >= -l {
                    stack.push(inactive);
                    stack.push(node);
                } else {
                    stack.push(node);
                    stack.push(inactive);
                }
                continue;
            }

            // All ReLUs settled. Tighten each margin bound with the phase
            // conditions before resorting to input bisection.
            if !pass.cuts.is_empty() {
                let vlo: Vec<f64> = varying.iter().map(|&j| lo[j]).collect();
                let vhi: Vec<f64> = varying.iter().map(|&j| hi[j]).collect();
                let mut refuted = true;
                for (k, f) in pass.out_upper.iter().enumerate() {
                    if out.hi[k] < -(self.eps + PRUNE_SLACK * (1.0 + out.hi[k].abs())) {
                        continue;
                    }
                    let target = -(self.eps + PRUNE_SLACK * (1.0 + out.hi[k].abs()));
                    let (bound, corner) =
                        lagrangian_max(f, &pass.cuts, &vlo, &vhi, target, DUAL_ITERATIONS);
                    let mut x = mid.clone();
                    for (slot, &j) in varying.iter().enumerate() {
                        x[j] = self.pick(j, node.spans[j], corner[slot]);
                    }
                    if let Some(v) = self.check(&x) {
                        return Ok(found(v, nodes));
                    }
                    if bound >= target {
                        refuted = false;
                        break;
                    }
                }
                if refuted {
                    continue;
                }
            }

            // Still inconclusive: bisect an input.
            let coef = &pass.out_upper[worst].coef;
            let mut split: Option<(usize, f64)> = None;
            for (slot, &j) in varying.iter().enumerate() {
                let splittable = match node.spans[j] {
                    Span::Points { start, end } => end - start >= 2,
                    Span::Range { lo, hi } => {
                        hi - lo > MIN_SPLIT_WIDTH * (1.0 + lo.abs().max(hi.abs()))
                    }
                };
                if !splittable {
                    continue;
                }
                let width = hi[j] - lo[j];
                let score = coef[slot].abs() * width + 1e-12 * width;
                if split.is_none_or(|s| score > s.1) {
                    split = Some((j, score));
                }
            }
            let Some((j, _)) = split else {
                // Indivisible and every probe failed.
                continue;
            };
            let (left, right) = match node.spans[j] {
                Span::Points { start, end } => {
                    let cut = start + (end - start) / 2;
                    (
                        Span::Points { start, end: cut },
                        Span::Points { start: cut, end },
                    )
                }
                Span::Range { lo, hi } => {
                    let cut = 0.5 * (lo + hi);
                    (Span::Range { lo, hi: cut }, Span::Range { lo: cut, hi })
                }
            };
            let mut other = node.clone();
            node.spans[j] = left;
            other.spans[j] = right;
            if coef[varying.iter().position(|&v| v == j).unwrap()] >= 0.0 {
                stack.push(node);
                stack.push(other);
            } else {
                stack.push(other);
                stack.push(node);
            }
        }

        Ok((
            Verdict::Unsat,
            SearchStats {
                engine: Engine::BranchAndBound,
                nodes,
            },
        ))
    }
}

fn found(v: Verdict, nodes: u64) -> (Verdict, SearchStats) {
    (
        v,
        SearchStats {
            engine: Engine::BranchAndBound,
            nodes,
        },
    )
}

fn check_deadline(cfg: &VerifierConfig, nodes: u64) -> Result<(), VerifyError> {
    match cfg.deadline {
        Some(d) if Instant::now() >= d => Err(VerifyError::Budget {
            kind: BudgetKind::Deadline,
            nodes,
        }),
        _ => Ok(()),
    }
}

/// Rows `W[c'] - W[c]` for every `c' != c`.
fn difference_layer(last: &Affine, class: usize) -> Affine {
    let mut weights = Vec::with_capacity(last.out_dim() - 1);
    let mut bias = Vec::with_capacity(last.out_dim() - 1);
    for k in (0..last.out_dim()).filter(|&k| k != class) {
        weights.push(
            last.weights[k]
                .iter()
                .zip(&last.weights[class])
                .map(|(a, b)| a - b)
                .collect(),
        );
        bias.push(last.bias[k] - last.bias[class]);
    }
    Affine { weights, bias }
}
