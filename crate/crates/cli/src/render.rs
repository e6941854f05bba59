//! Explanation masks as PGM images and ASCII grids.

use std::collections::BTreeSet;
use std::fmt::Write;

use abdux::{ClassificationInstance, InputSpace};

use crate::exit::{CliError, CliResult};

/// Largest gray level, reserved for pixels outside the explanation.
pub const MAX_GRAY: u8 = 255;
/// Brightest level an explanation pixel can take.
const TOP: f64 = 254.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    /// Row-major gray levels.
    pub pixels: Vec<u8>,
    pub in_explanation: Vec<bool>,
}

/// Gray level of `v` scaled from the hull of its domain onto `0..=254`.
fn gray(space: &InputSpace, feature: usize, v: f64) -> u8 {
    let (lo, hi) = space.domain(feature).hull();
    if hi <= lo {
        return 0;
    }
    ((v - lo) / (hi - lo) * TOP).round().clamp(0.0, TOP) as u8
}

/// Explanation pixels keep the instance's value; the rest are white, so
/// an explanation pixel at the top of its domain stays one level darker.
pub fn render_mask(
    space: &InputSpace,
    inst: &ClassificationInstance,
    explanation: &BTreeSet<usize>,
    width: usize,
    height: usize,
) -> CliResult<Mask> {
    let m = inst.num_features();
    if width * height != m {
        return Err(CliError::invariant(format!(
            "shape {width}x{height} does not match {m} features"
        )));
    }
    if let Some(f) = explanation.iter().find(|&&f| f >= m) {
        return Err(CliError::invariant(format!(
            "explanation feature {f} out of range 0..{m}"
        )));
    }
    let in_explanation: Vec<bool> = (0..m).map(|f| explanation.contains(&f)).collect();
    let pixels = (0..m)
        .map(|f| {
            if in_explanation[f] {
                gray(space, f, inst.input[f])
            } else {
                MAX_GRAY
            }
        })
        .collect();
    Ok(Mask {
        width,
        height,
        pixels,
        in_explanation,
    })
}

impl Mask {
    /// Plain (P2) PGM.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n{MAX_GRAY}\n", self.width, self.height);
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    /// One character per pixel: `.` outside the explanation, otherwise the
    /// gray level scaled to a digit `0..=9`.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for (row, flags) in self
            .pixels
            .chunks(self.width)
            .zip(self.in_explanation.chunks(self.width))
        {
            for (&p, &kept) in row.iter().zip(flags) {
                out.push(if kept {
                    char::from_digit((u32::from(p) * 9 + 127) / 254, 10).unwrap()
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use abdux::{FeatureDomain, Layer, Network};

    fn image() -> (Network, ClassificationInstance) {
        let space = InputSpace::new(vec![FeatureDomain::Interval(0.0, 1.0); 4]).unwrap();
        let net = Network::new(
            space,
            vec![Layer::affine(
                vec![vec![1.0; 4], vec![0.0; 4]],
                vec![0.0, 0.0],
            )],
        )
        .unwrap();
        let inst = ClassificationInstance::new(&net, vec![0.0, 0.5, 1.0, 0.2]).unwrap();
        (net, inst)
    }

    #[test]
    fn full_explanation_is_the_image() {
        let (net, inst) = image();
        let all = (0..4).collect();
        let m = render_mask(net.input_space(), &inst, &all, 2, 2).unwrap();
        assert_eq!(m.pixels, vec![0, 127, 254, 51]);
        assert_eq!(m.to_ascii(), "05\n92\n");
    }

    #[test]
    fn empty_explanation_is_white() {
        let (net, inst) = image();
        let m = render_mask(net.input_space(), &inst, &BTreeSet::new(), 4, 1).unwrap();
        assert!(m.pixels.iter().all(|&p| p == MAX_GRAY));
        assert_eq!(m.to_pgm(), "P2\n4 1\n255\n255 255 255 255\n");
        assert_eq!(m.to_ascii(), "....\n");
    }

    #[test]
    fn shape_must_match() {
        let (net, inst) = image();
        assert!(render_mask(net.input_space(), &inst, &BTreeSet::new(), 3, 1).is_err());
        assert!(render_mask(net.input_space(), &inst, &[9].into(), 2, 2).is_err());
    }
}
