//! Reference networks and seeded random corpora.
//!
//! The hand-built networks reproduce small worked examples exactly; the
//! random generators produce desk-scale problems small enough for
//! brute-force cross-checking.

use std::ops::RangeInclusive;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{ClassificationInstance, FeatureDomain, InputSpace, Layer, Network};

/// Three binary inputs, one hidden layer of three ReLUs, two classes.
///
/// For input `[1, 1, 1]` the hidden pre-activations are `[6, 9, 11]` and the
/// logits `[15, -4]`. Class 0 wins exactly when `x3 = 1` or `x1 = x2 = 1`,
/// so `{x1, x2}` is a minimal explanation, `{x3}` a minimum one and
/// `{x2, x3}` a contrastive example.
pub fn running_example() -> Network {
    Network::new(
        InputSpace::binary(3).unwrap(),
        vec![
            Layer::affine(
                vec![
                    vec![1.0, 2.0, 3.0],
                    vec![2.0, 3.0, 4.0],
                    vec![3.0, 3.0, 5.0],
                ],
                vec![0.0, 0.0, 0.0],
            ),
            Layer::Relu,
            Layer::affine(
                vec![vec![-2.0, -1.0, 3.0], vec![-3.0, 0.0, 0.0]],
                vec![3.0, 14.0],
            ),
        ],
    )
    .unwrap()
}

/// Binary features with logits `[x1 + ... + xm, threshold]`.
pub fn sum_threshold(m: usize, threshold: f64) -> Network {
    Network::new(
        InputSpace::binary(m).unwrap(),
        vec![Layer::affine(
            vec![vec![1.0; m], vec![0.0; m]],
            vec![0.0, threshold],
        )],
    )
    .unwrap()
}

/// `[x1 + x2, 1.5]` at `(1, 1)`: both features are contrastive singletons.
pub fn singleton_pair() -> (Network, ClassificationInstance) {
    let net = sum_threshold(2, 1.5);
    let inst = ClassificationInstance::new(&net, vec![1.0, 1.0]).unwrap();
    (net, inst)
}

/// `[x1 + x2 + x3, 1.5]` at `(1, 1, 1)`: no singletons, every pair contrastive.
pub fn triangle() -> (Network, ClassificationInstance) {
    let net = sum_threshold(3, 1.5);
    let inst = ClassificationInstance::new(&net, vec![1.0, 1.0, 1.0]).unwrap();
    (net, inst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    /// `{0, 1, ..., k-1}` with `k` drawn from the range.
    Discrete {
        values: (usize, usize),
    },
    Interval {
        lo: f64,
        hi: f64,
    },
}

/// Shape of a randomly generated network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub features: RangeInclusive<usize>,
    pub hidden_layers: RangeInclusive<usize>,
    pub width: RangeInclusive<usize>,
    pub classes: RangeInclusive<usize>,
    pub domain: DomainKind,
}

impl NetSpec {
    /// 3 to 6 features over at most three values, one or two hidden layers
    /// of at most eight neurons.
    pub fn small() -> Self {
        Self {
            features: 3..=6,
            hidden_layers: 1..=2,
            width: 2..=8,
            classes: 2..=3,
            domain: DomainKind::Discrete { values: (2, 3) },
        }
    }

    /// Binary features only, for bundle experiments and tiny checks.
    pub fn binary(features: RangeInclusive<usize>) -> Self {
        Self {
            features,
            hidden_layers: 1..=2,
            width: 2..=8,
            classes: 2..=3,
            domain: DomainKind::Discrete { values: (2, 2) },
        }
    }

    /// 16 to 36 binary features with one hidden layer.
    pub fn medium() -> Self {
        Self {
            features: 16..=36,
            hidden_layers: 1..=1,
            width: 6..=10,
            classes: 2..=3,
            domain: DomainKind::Discrete { values: (2, 2) },
        }
    }

    pub fn interval(features: RangeInclusive<usize>) -> Self {
        Self {
            features,
            hidden_layers: 1..=2,
            width: 2..=6,
            classes: 2..=3,
            domain: DomainKind::Interval { lo: -1.0, hi: 1.0 },
        }
    }
}

pub fn random_network(spec: &NetSpec, rng: &mut impl Rng) -> Network {
    let m = rng.gen_range(spec.features.clone());
    let domains = (0..m)
        .map(|_| match spec.domain {
            DomainKind::Discrete { values: (lo, hi) } => {
                let k = rng.gen_range(lo..=hi);
                FeatureDomain::Discrete((0..k).map(|v| v as f64).collect())
            }
            DomainKind::Interval { lo, hi } => FeatureDomain::Interval(lo, hi),
        })
        .collect();
    let depth = rng.gen_range(spec.hidden_layers.clone());
    let classes = rng.gen_range(spec.classes.clone());
    let mut layers = Vec::new();
    let mut width = m;
    for _ in 0..depth {
        let out = rng.gen_range(spec.width.clone());
        layers.push(random_affine(rng, width, out));
        layers.push(Layer::Relu);
        width = out;
    }
    layers.push(random_affine(rng, width, classes));
    Network::new(InputSpace::new(domains).unwrap(), layers).unwrap()
}

fn random_affine(rng: &mut impl Rng, inputs: usize, outputs: usize) -> Layer {
    let scale = 1.0 / (inputs as f64).sqrt();
    let weights = (0..outputs)
        .map(|_| {
            (0..inputs)
                .map(|_| rng.gen_range(-1.0..1.0) * 2.0 * scale)
                .collect()
        })
        .collect();
    let bias = (0..outputs).map(|_| rng.gen_range(-0.5..0.5)).collect();
    Layer::affine(weights, bias)
}

/// A uniformly drawn point of the feature space, classified by `net`.
pub fn random_instance(net: &Network, rng: &mut impl Rng) -> ClassificationInstance {
    let input = net
        .input_space()
        .domains()
        .iter()
        .map(|d| match d {
            FeatureDomain::Discrete(values) => values[rng.gen_range(0..values.len())],
            FeatureDomain::Interval(lo, hi) => rng.gen_range(*lo..=*hi),
        })
        .collect();
    ClassificationInstance::new(net, input).unwrap()
}

/// `count` seeded (network, instance) pairs. Entry `i` depends only on
/// `seed` and `i`.
pub fn corpus(spec: &NetSpec, seed: u64, count: usize) -> Vec<(Network, ClassificationInstance)> {
    (0..count)
        .map(|i| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ i as u64);
            let net = random_network(spec, &mut rng);
            let inst = random_instance(&net, &mut rng);
            (net, inst)
        })
        .collect()
}

/// Every point of a fully discrete feature space, in lexicographic order of
/// value indices. Returns `None` if any domain is an interval.
pub fn all_points(space: &InputSpace) -> Option<Vec<Vec<f64>>> {
    let domains: Vec<&[f64]> = space
        .domains()
        .iter()
        .map(|d| match d {
            FeatureDomain::Discrete(v) => Some(v.as_slice()),
            FeatureDomain::Interval(..) => None,
        })
        .collect::<Option<_>>()?;
    let mut out = vec![Vec::with_capacity(domains.len())];
    for values in domains {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    Some(out)
}
