//! Feedforward ReLU classifiers over typed feature spaces.
//!
//! A [`Network`] is an ordered list of affine and ReLU layers ending in an
//! affine layer whose outputs are the class logits. Each input feature has a
//! [`FeatureDomain`]: either a finite sorted list of values or a closed
//! interval.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The values a single feature may take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureDomain {
    Discrete(Vec<f64>),
    Interval(f64, f64),
}

impl FeatureDomain {
    /// `{0, 1}`.
    pub fn binary() -> Self {
        FeatureDomain::Discrete(vec![0.0, 1.0])
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            FeatureDomain::Discrete(values) => {
                if values.is_empty() {
                    return Err("discrete domain is empty".into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err("discrete domain holds a non-finite value".into());
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err("discrete domain must be sorted and duplicate-free".into());
                }
                Ok(())
            }
            FeatureDomain::Interval(lo, hi) => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err("interval bounds must be finite".into());
                }
                if lo > hi {
                    return Err(format!("interval [{lo}, {hi}] has lo > hi"));
                }
                Ok(())
            }
        }
    }

    /// Smallest closed interval containing the domain.
    pub fn hull(&self) -> (f64, f64) {
        match self {
            FeatureDomain::Discrete(values) => (values[0], values[values.len() - 1]),
            FeatureDomain::Interval(lo, hi) => (*lo, *hi),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            FeatureDomain::Discrete(values) => values.contains(&x),
            FeatureDomain::Interval(lo, hi) => *lo <= x && x <= *hi,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, FeatureDomain::Discrete(_))
    }

    /// Number of values for discrete domains, `None` for intervals.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            FeatureDomain::Discrete(values) => Some(values.len()),
            FeatureDomain::Interval(..) => None,
        }
    }

    /// Representative values: every value of a discrete domain, or the
    /// endpoints and midpoint of an interval.
    pub fn probe_values(&self) -> Vec<f64> {
        match self {
            FeatureDomain::Discrete(values) => values.clone(),
            FeatureDomain::Interval(lo, hi) if lo == hi => vec![*lo],
            FeatureDomain::Interval(lo, hi) => vec![*lo, 0.5 * (lo + hi), *hi],
        }
    }
}

/// The ordered feature domains of a classification problem.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpace {
    domains: Vec<FeatureDomain>,
}

impl InputSpace {
    pub fn new(domains: Vec<FeatureDomain>) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::InvalidNetwork("input space has no features".into()));
        }
        for (i, d) in domains.iter().enumerate() {
            d.validate()
                .map_err(|e| Error::InvalidNetwork(format!("feature {i}: {e}")))?;
        }
        Ok(Self { domains })
    }

    /// `m` binary features.
    pub fn binary(m: usize) -> Result<Self> {
        Self::new(vec![FeatureDomain::binary(); m])
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn domains(&self) -> &[FeatureDomain] {
        &self.domains
    }

    pub fn domain(&self, feature: usize) -> &FeatureDomain {
        &self.domains[feature]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.domains.len() && self.domains.iter().zip(x).all(|(d, &v)| d.contains(v))
    }
}

/// Weights and bias of a fully connected layer. `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Self {
        Self { weights, bias }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Affine(Affine),
    Relu,
}

impl Layer {
    pub fn affine(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Self {
        Layer::Affine(Affine::new(weights, bias))
    }
}

pub fn relu(x: &mut [f64]) {
    for v in x {
        *v = v.max(0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkFile {
    input_domains: Vec<FeatureDomain>,
    layers: Vec<Layer>,
}

/// A feedforward classifier. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    space: InputSpace,
    layers: Vec<Layer>,
    num_classes: usize,
}

impl Network {
    pub fn new(space: InputSpace, layers: Vec<Layer>) -> Result<Self> {
        let mut width = space.len();
        let mut last_affine = None;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Affine(a) => {
                    if a.weights.len() != a.bias.len() {
                        return Err(Error::InvalidNetwork(format!(
                            "layer {i}: {} weight rows but bias of length {}",
                            a.weights.len(),
                            a.bias.len()
                        )));
                    }
                    if a.bias.is_empty() {
                        return Err(Error::InvalidNetwork(format!("layer {i}: no outputs")));
                    }
                    if let Some(row) = a.weights.iter().find(|row| row.len() != width) {
                        return Err(Error::Dimension {
                            layer: i,
                            expected: width,
                            got: row.len(),
                        });
                    }
                    if a.weights
                        .iter()
                        .flatten()
                        .chain(&a.bias)
                        .any(|w| !w.is_finite())
                    {
                        return Err(Error::InvalidNetwork(format!(
                            "layer {i}: non-finite parameter"
                        )));
                    }
                    width = a.out_dim();
                    last_affine = Some(i);
                }
                Layer::Relu => {}
            }
        }
        match last_affine {
            Some(i) if i + 1 == layers.len() => {}
            _ => {
                return Err(Error::InvalidNetwork(
                    "the final layer must be affine (it produces the logits)".into(),
                ))
            }
        }
        if width < 2 {
            return Err(Error::InvalidNetwork(format!(
                "a classifier needs at least two classes, got {width}"
            )));
        }
        Ok(Self {
            space,
            layers,
            num_classes: width,
        })
    }

    pub fn input_space(&self) -> &InputSpace {
        &self.space
    }

    pub fn input_dim(&self) -> usize {
        self.space.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Evaluates the logits for `x`. No softmax is applied.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                layer: 0,
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut values = x.to_vec();
        for layer in &self.layers {
            match layer {
                Layer::Affine(a) => values = a.apply(&values),
                Layer::Relu => relu(&mut values),
            }
        }
        values
    }

    /// Values after every layer, starting with the input itself.
    pub fn trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.forward(x)?;
        let mut out = vec![x.to_vec()];
        for layer in &self.layers {
            let mut next = out.last().unwrap().clone();
            match layer {
                Layer::Affine(a) => next = a.apply(&next),
                Layer::Relu => relu(&mut next),
            }
            out.push(next);
        }
        Ok(out)
    }

    /// Argmax of the logits, ties going to the lowest class index.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| Error::parse("network JSON", e))?;
        Self::new(InputSpace::new(file.input_domains)?, file.layers)
    }

    pub fn to_json_string(&self) -> String {
        let file = NetworkFile {
            input_domains: self.space.domains.clone(),
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&file).expect("network serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Parse { source, .. } => Error::parse(path.display().to_string(), source),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// An input together with the class the network assigns to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationInstance {
    pub input: Vec<f64>,
    pub class: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceFile {
    input: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<usize>,
}

impl ClassificationInstance {
    /// Classifies `input` with `net`, checking it lies in the feature space.
    pub fn new(net: &Network, input: Vec<f64>) -> Result<Self> {
        if input.len() != net.input_dim() {
            return Err(Error::InvalidInstance(format!(
                "input has {} features, network expects {}",
                input.len(),
                net.input_dim()
            )));
        }
        for (i, (&x, d)) in input.iter().zip(net.input_space().domains()).enumerate() {
            if !d.contains(x) {
                return Err(Error::InvalidInstance(format!(
                    "feature {i} value {x} lies outside its domain"
                )));
            }
        }
        let class = net.classify(&input)?;
        Ok(Self { input, class })
    }

    /// Like [`ClassificationInstance::new`] but rejects a declared class that
    /// disagrees with the network.
    pub fn with_declared_class(net: &Network, input: Vec<f64>, declared: usize) -> Result<Self> {
        let inst = Self::new(net, input)?;
        if inst.class != declared {
            return Err(Error::ClassMismatch {
                declared,
                actual: inst.class,
            });
        }
        Ok(inst)
    }

    pub fn from_json_str(text: &str, net: &Network) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::parse("instance JSON", e))?;
        match file.class {
            Some(c) => Self::with_declared_class(net, file.input, c),
            None => Self::new(net, file.input),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile {
            input: self.input.clone(),
            class: Some(self.class),
        })
        .expect("instance serializes")
    }

    pub fn load(path: impl AsRef<Path>, net: &Network) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, net).map_err(|e| match e {
            Error::Parse { source, .. } => Error::parse(path.display().to_string(), source),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn num_features(&self) -> usize {
        self.input.len()
    }
}
