//! Object detections attached to images.
//!
//! Detections are supplied by a [`DetectionProvider`]. The shipped provider
//! reads precomputed boxes and concept tokens from the corpus manifest and
//! derives feature vectors deterministically from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Normalized `(x1, y1, x2, y2)` box in `[0, 1]`.
pub type BBox = [f64; 4];

/// Detection as stored in a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSpec {
    pub bbox: BBox,
    pub concept: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDetection {
    pub image_id: String,
    pub bbox: BBox,
    pub feature: Vec<f64>,
    /// Attribute token(s) followed by the head noun, e.g. `["red", "bus"]`.
    pub concept: Vec<String>,
}

impl ObjectDetection {
    /// The four box coordinates followed by the box area.
    pub fn bbox_feature(&self) -> [f64; 5] {
        let [x1, y1, x2, y2] = self.bbox;
        [x1, y1, x2, y2, (x2 - x1) * (y2 - y1)]
    }

    pub fn validate(&self) -> Result<(), String> {
        validate_box(&self.bbox)?;
        if self.concept.is_empty() || self.concept.len() > 3 {
            return Err(format!("concept must have 1-3 tokens, got {}", self.concept.len()));
        }
        Ok(())
    }
}

pub fn validate_box(bbox: &BBox) -> Result<(), String> {
    let [x1, y1, x2, y2] = *bbox;
    let in_unit = bbox.iter().all(|v| (0.0..=1.0).contains(v));
    if !in_unit || x1 >= x2 || y1 >= y2 {
        return Err(format!("invalid bbox {bbox:?}"));
    }
    Ok(())
}

pub trait DetectionProvider {
    fn detections(&self, image_id: &str) -> Vec<ObjectDetection>;
}

/// Deterministic pseudo-feature for a detection.
///
/// Each concept token contributes a fixed unit-scale random direction, so
/// objects sharing a concept token share feature structure. A small
/// component keyed on the full `(concept, bbox)` pair keeps instances distinct.
pub fn hashed_feature(concept: &[String], bbox: &BBox, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    let scale = 1.0 / (dim.max(1) as f64).sqrt();
    for token in concept {
        let mut rng = rng_for(&[token.as_bytes()]);
        for v in out.iter_mut() {
            *v += rng.gen_range(-1.0..1.0) * scale * 3f64.sqrt();
        }
    }
    let box_bytes: Vec<u8> = bbox.iter().flat_map(|v| v.to_le_bytes()).collect();
    let joined = concept.join(" ");
    let mut rng = rng_for(&[joined.as_bytes(), &box_bytes]);
    for v in out.iter_mut() {
        *v += rng.gen_range(-0.1..0.1) * scale;
    }
    out
}

fn rng_for(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

impl DetectionSpec {
    pub fn materialize(&self, image_id: &str, dim: usize) -> ObjectDetection {
        let feature = match &self.feature {
            Some(f) => f.clone(),
            None => hashed_feature(&self.concept, &self.bbox, dim),
        };
        ObjectDetection {
            image_id: image_id.to_string(),
            bbox: self.bbox,
            feature,
            concept: self.concept.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_are_deterministic_and_concept_driven() {
        let red_bus = vec!["red".to_string(), "bus".to_string()];
        let blue_bus = vec!["blue".to_string(), "bus".to_string()];
        let b = [0.1, 0.1, 0.5, 0.5];
        let a1 = hashed_feature(&red_bus, &b, 256);
        let a2 = hashed_feature(&red_bus, &b, 256);
        assert_eq!(a1, a2);
        let other = hashed_feature(&blue_bus, &[0.2, 0.2, 0.6, 0.9], 256);
        assert_ne!(a1, other);
        let dot: f64 = a1.iter().zip(&other).map(|(x, y)| x * y).sum();
        let norm: f64 = a1.iter().map(|x| x * x).sum();
        // Shared "bus" token gives a clearly positive overlap.
        assert!(dot > 0.2 * norm);
    }

    #[test]
    fn bbox_validation() {
        assert!(validate_box(&[0.0, 0.0, 1.0, 1.0]).is_ok());
        assert!(validate_box(&[0.5, 0.0, 0.5, 1.0]).is_err());
        assert!(validate_box(&[0.0, 0.0, 1.2, 1.0]).is_err());
    }
}
