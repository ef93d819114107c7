//! Self-describing JSON model files.
//!
//! The file stores the spec plus every layout segment with its raw
//! values. Doubles round-trip bit-exactly: serde_json emits the shortest
//! decimal that parses back to the identical bits, and non-finite values
//! are rejected before writing.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelError, ModelParams, ModelSpec, Variant};

const FORMAT: &str = "fame-model";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    spec: SpecFile,
    params: Vec<SegmentFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    variant: String,
    p: usize,
    d: usize,
    m: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentFile {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn to_json(&self) -> String {
        let spec = self.spec();
        let params = self
            .layout()
            .segments()
            .iter()
            .map(|seg| SegmentFile {
                name: seg.name().to_owned(),
                rows: seg.rows(),
                cols: seg.cols(),
                values: self.raw()[seg.offset()..seg.offset() + seg.len()].to_vec(),
            })
            .collect();
        let file = ModelFile {
            format: FORMAT.to_owned(),
            version: VERSION,
            spec: SpecFile {
                variant: spec.variant.name().to_owned(),
                p: spec.p,
                d: spec.d,
                m: spec.m,
            },
            params,
        };
        serde_json::to_string_pretty(&file).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<ModelParams, ModelIoError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(ModelIoError::Format(format!(
                "unknown format {:?}, expected {FORMAT:?}",
                file.format
            )));
        }
        if file.version != VERSION {
            return Err(ModelIoError::Format(format!(
                "unsupported version {}, expected {VERSION}",
                file.version
            )));
        }
        let variant = Variant::parse(&file.spec.variant)?;
        let spec = ModelSpec::new(variant, file.spec.p, Some(file.spec.d), file.spec.m)?;
        let layout = spec.layout();
        if file.params.len() != layout.segments().len() {
            return Err(ModelIoError::Format(format!(
                "expected {} parameter segments, found {}",
                layout.segments().len(),
                file.params.len()
            )));
        }
        let mut raw = Vec::with_capacity(layout.total());
        for (seg, stored) in layout.segments().iter().zip(&file.params) {
            if stored.name != seg.name() || stored.rows != seg.rows() || stored.cols != seg.cols()
            {
                return Err(ModelIoError::Format(format!(
                    "segment mismatch: expected {} ({}x{}), found {} ({}x{})",
                    seg.name(),
                    seg.rows(),
                    seg.cols(),
                    stored.name,
                    stored.rows,
                    stored.cols
                )));
            }
            if stored.values.len() != seg.len() {
                return Err(ModelIoError::Format(format!(
                    "segment {} holds {} values, expected {}",
                    stored.name,
                    stored.values.len(),
                    seg.len()
                )));
            }
            if let Some(bad) = stored.values.iter().find(|v| !v.is_finite()) {
                return Err(ModelIoError::Format(format!(
                    "segment {} holds non-finite value {bad}",
                    stored.name
                )));
            }
            raw.extend_from_slice(&stored.values);
        }
        Ok(ModelParams::new(spec, raw)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|source| ModelIoError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelParams, ModelIoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::super::count_params;
    use super::*;

    fn model_with_pattern(variant: Variant, p: usize, d: Option<usize>, m: usize) -> ModelParams {
        let spec = ModelSpec::new(variant, p, d, m).unwrap();
        let n = count_params(&spec);
        // awkward doubles: negative, subnormal-ish, and irrational-looking
        let raw: Vec<f64> = (0..n)
            .map(|i| ((i as f64) * 0.123456789 - 3.21).sin() * 10f64.powi((i % 7) as i32 - 3))
            .collect();
        ModelParams::new(spec, raw).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_for_every_variant() {
        for variant in Variant::ALL {
            let d = variant.has_projection().then_some(3);
            let model = model_with_pattern(variant, 4, d, 5);
            let restored = ModelParams::from_json(&model.to_json()).unwrap();
            assert_eq!(restored.spec(), model.spec());
            for (a, b) in model.raw().iter().zip(restored.raw()) {
                assert_eq!(a.to_bits(), b.to_bits(), "{variant}");
            }
        }
    }

    #[test]
    fn rejects_foreign_format_and_version() {
        let model = model_with_pattern(Variant::Fam, 2, Some(2), 3);
        let json = model.to_json();
        let wrong_format = json.replace("fame-model", "other-model");
        assert!(matches!(
            ModelParams::from_json(&wrong_format),
            Err(ModelIoError::Format(_))
        ));
        let wrong_version = json.replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(
            ModelParams::from_json(&wrong_version),
            Err(ModelIoError::Format(_))
        ));
    }

    #[test]
    fn rejects_mismatched_segments() {
        let model = model_with_pattern(Variant::VFam, 2, None, 3);
        let json = model.to_json().replace("\"sigma\"", "\"sigmo\"");
        assert!(matches!(ModelParams::from_json(&json), Err(ModelIoError::Format(_))));
    }

    #[test]
    fn rejects_unknown_keys() {
        let model = model_with_pattern(Variant::VFam, 2, None, 3);
        let json = model.to_json().replacen("\"format\"", "\"extra\": 1, \"format\"", 1);
        assert!(matches!(ModelParams::from_json(&json), Err(ModelIoError::Json(_))));
    }

    #[test]
    fn save_and_load_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = model_with_pattern(Variant::CdrMflse, 3, Some(2), 4);
        model.save(&path).unwrap();
        let loaded = ModelParams::load(&path).unwrap();
        assert_eq!(loaded, model);
    }
}
