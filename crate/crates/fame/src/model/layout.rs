//! Flat parameter-vector layout per variant.
//!
//! Each variant's learnables live in one `Vec<f64>` split into named,
//! shaped segments. The layout is the single source of truth for which
//! flat index holds which parameter; initialization, gradients, Adam,
//! and serialization all walk it.

use super::{ModelSpec, Topology};

/// Segment names whose values are deviations stored in raw (signed)
/// form and realized through `max(|raw|, SIGMA_MIN)`.
const DEVIATION_NAMES: [&str; 4] = ["sigma", "sigma_l1", "sigma_r", "ant_sigma"];

/// A named, row-major block of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    name: &'static str,
    rows: usize,
    cols: usize,
    offset: usize,
}

impl Segment {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether this segment stores raw deviations.
    pub fn is_deviation(&self) -> bool {
        DEVIATION_NAMES.contains(&self.name)
    }
}

/// Human-readable address of one flat parameter index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef {
    pub segment: &'static str,
    pub row: usize,
    pub col: usize,
}

impl std::fmt::Display for ParamRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{},{}]", self.segment, self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    pub fn of(spec: &ModelSpec) -> Layout {
        let (p, d, m) = (spec.p, spec.d, spec.m);
        let d_a = spec.antecedent_dim();
        let d_c = spec.consequent_dim();
        let mut segments = Vec::new();
        let mut offset = 0usize;
        let mut push = |name: &'static str, rows: usize, cols: usize| {
            segments.push(Segment { name, rows, cols, offset });
            offset += rows * cols;
        };

        if spec.variant.has_projection() {
            push("W", d, m);
            push("b", d, 1);
        }
        match spec.variant.topology() {
            Topology::Additive { sculpted: false } => {
                push("c", d, p);
                push("sigma", d, p);
                push("a", d, p);
                push("a0", d, p);
            }
            Topology::Additive { sculpted: true } => {
                push("c1", d, 1);
                push("sigma_l1", d, 1);
                push("sigma_r", d, p);
                push("a", d, p);
                push("a0", d, p);
            }
            Topology::Mfls { sculpted: false, .. } => {
                push("ant_c", p, d_a);
                push("ant_sigma", p, d_a);
                push("cons_w", p, d_c);
                push("cons_w0", p, 1);
            }
            Topology::Mfls { sculpted: true, .. } => {
                push("c1", d_a, 1);
                push("sigma_l1", d_a, 1);
                push("sigma_r", d_a, p);
                push("cons_w", p, d_c);
                push("cons_w0", p, 1);
            }
        }
        Layout { segments, total: offset }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn seg(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Maps a flat index back to its segment and matrix position.
    pub fn describe(&self, flat: usize) -> Option<ParamRef> {
        let seg = self
            .segments
            .iter()
            .find(|s| flat >= s.offset && flat < s.offset + s.len())?;
        let local = flat - seg.offset;
        Some(ParamRef { segment: seg.name, row: local / seg.cols, col: local % seg.cols })
    }

    /// Whether the flat index holds a raw deviation.
    pub fn is_deviation_index(&self, flat: usize) -> bool {
        self.describe(flat)
            .map(|r| DEVIATION_NAMES.contains(&r.segment))
            .unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ModelSpec, Variant};
    use super::*;

    #[test]
    fn layout_is_a_bijection() {
        let spec = ModelSpec::new(Variant::Fame, 5, Some(3), 7).unwrap();
        let layout = spec.layout();
        // every flat index maps to exactly one address, offsets are contiguous
        let mut seen = vec![false; layout.total()];
        for seg in layout.segments() {
            for i in 0..seg.len() {
                let flat = seg.offset() + i;
                assert!(!seen[flat], "index {flat} covered twice");
                seen[flat] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
        for flat in 0..layout.total() {
            let r = layout.describe(flat).unwrap();
            let seg = layout.seg(r.segment).unwrap();
            assert_eq!(seg.offset() + r.row * seg.cols() + r.col, flat);
        }
        assert!(layout.describe(layout.total()).is_none());
    }

    #[test]
    fn deviation_indices_are_flagged() {
        let spec = ModelSpec::new(Variant::Fam, 2, Some(2), 3).unwrap();
        let layout = spec.layout();
        let sigma = layout.seg("sigma").unwrap();
        assert!(layout.is_deviation_index(sigma.offset()));
        let c = layout.seg("c").unwrap();
        assert!(!layout.is_deviation_index(c.offset()));
        assert!(sigma.is_deviation());
        assert!(!c.is_deviation());
    }

    #[test]
    fn mfls_layout_shapes() {
        let spec = ModelSpec::new(Variant::DrMfls, 5, Some(2), 8).unwrap();
        let layout = spec.layout();
        let ant = layout.seg("ant_c").unwrap();
        assert_eq!((ant.rows(), ant.cols()), (5, 2));
        let cons = layout.seg("cons_w").unwrap();
        assert_eq!((cons.rows(), cons.cols()), (5, 8));
        assert_eq!(layout.total(), 5 * (2 * 2 + 8 + 1) + 9 * 2);
    }
}
