//! Fixed-length motion descriptors for atomic action clips.

use thiserror::Error;

use crate::bvh::{resample_clip, BvhClip, BvhError};
use crate::pca::{PcaError, PcaModel};

/// Dimension of an action feature vector.
pub const ACTION_DIM: usize = 750;
/// Frames every clip is resampled to before flattening.
pub const DEFAULT_RESAMPLE_FRAMES: usize = 30;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Bvh(#[from] BvhError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error("PCA model produces {0}-d output, action features are {ACTION_DIM}-d")]
    WrongOutputDim(usize),
    #[error("non-finite action feature")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionFeature {
    pub values: Vec<f32>,
    pub source_duration: f64,
}

/// Resamples to `resample_frames` frames and flattens row-major.
pub fn flatten_clip(clip: &BvhClip, resample_frames: usize) -> Result<Vec<f64>, BvhError> {
    Ok(resample_clip(clip, resample_frames)?.frames)
}

pub fn extract_action_feature(
    clip: &BvhClip,
    model: &PcaModel,
    resample_frames: usize,
) -> Result<ActionFeature, FeatureError> {
    if model.output_dim != ACTION_DIM {
        return Err(FeatureError::WrongOutputDim(model.output_dim));
    }
    let flat = flatten_clip(clip, resample_frames)?;
    let values: Vec<f32> = model.project(&flat)?.into_iter().map(|v| v as f32).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite);
    }
    Ok(ActionFeature {
        values,
        source_duration: clip.duration(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::parse_bvh;

    const CLIP: &str = "HIERARCHY
ROOT Hips
{
\tOFFSET 0 0 0
\tCHANNELS 3 Zrotation Xrotation Yrotation
\tEnd Site
\t{
\t\tOFFSET 0 10 0
\t}
}
MOTION
Frames: 2
Frame Time: 0.5
10 10 10
10 10 10
";

    #[test]
    fn flatten_sizes() {
        let clip = parse_bvh(CLIP).unwrap();
        assert_eq!(flatten_clip(&clip, 2).unwrap().len(), 6);
        assert_eq!(flatten_clip(&clip, 30).unwrap().len(), 90);
    }

    #[test]
    fn constant_pose_stays_constant() {
        let clip = parse_bvh(CLIP).unwrap();
        let flat = flatten_clip(&clip, 7).unwrap();
        for v in flat {
            assert!((v - 10.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn mean_pose_maps_to_zero() {
        let clip = parse_bvh(CLIP).unwrap();
        let flat = flatten_clip(&clip, 4).unwrap();
        let mut components = vec![0.0; ACTION_DIM * flat.len()];
        components[0] = 1.0;
        let model = PcaModel {
            input_dim: flat.len(),
            output_dim: ACTION_DIM,
            mean: flat,
            components,
            explained_variance: vec![0.0; ACTION_DIM],
            valid_components: 1,
        };
        let f = extract_action_feature(&clip, &model, 4).unwrap();
        assert_eq!(f.values.len(), ACTION_DIM);
        assert!(f.values.iter().all(|v| *v == 0.0));
        assert_eq!(f.source_duration, 1.0);
    }
}
