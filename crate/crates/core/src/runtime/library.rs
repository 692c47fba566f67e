use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::RuntimeError;
use crate::bvh::{parse_bvh, BvhClip, BvhJoint};

/// Motion clips addressed by graph node id.
#[derive(Debug, Clone)]
pub struct ActionLibrary {
    pub clips: Vec<Arc<BvhClip>>,
}

/// File name of clip `id` inside a library directory.
pub fn clip_file_name(id: usize) -> String {
    format!("{id:06}.bvh")
}

pub fn clip_path(dir: &Path, id: usize) -> PathBuf {
    dir.join(clip_file_name(id))
}

impl ActionLibrary {
    pub fn new(clips: Vec<BvhClip>) -> Result<ActionLibrary, RuntimeError> {
        ActionLibrary::from_shared(clips.into_iter().map(Arc::new).collect())
    }

    /// Builds a library from already shared clips (ids may repeat a clip).
    pub fn from_shared(clips: Vec<Arc<BvhClip>>) -> Result<ActionLibrary, RuntimeError> {
        let first = clips
            .first()
            .ok_or_else(|| RuntimeError::Library("library is empty".into()))?;
        if let Some(i) = clips.iter().position(|c| !c.same_skeleton(first)) {
            return Err(RuntimeError::Library(format!("clip {i} has a different skeleton")));
        }
        Ok(ActionLibrary { clips })
    }

    /// Loads `000000.bvh`, `000001.bvh`, ... for ids `0..count`.
    pub fn load_dir(dir: &Path, count: usize) -> Result<ActionLibrary, RuntimeError> {
        let clips = (0..count)
            .map(|id| {
                let p = clip_path(dir, id);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| RuntimeError::Library(format!("{}: {e}", p.display())))?;
                parse_bvh(&text).map_err(|e| RuntimeError::Library(format!("{}: {e}", p.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ActionLibrary::new(clips)
    }

    pub fn skeleton(&self) -> &[BvhJoint] {
        &self.clips[0].joints
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}
