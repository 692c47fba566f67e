use super::tensor::Mat;
use super::ModelError;

/// The last `N` sentence-level text and audio features, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    /// `[N × d_text]`
    pub text: Mat<f32>,
    /// `[N × d_audio]`
    pub audio: Mat<f32>,
}

impl FeatureWindow {
    /// Cold-start window: every slot zero.
    pub fn zeros(len: usize, d_text: usize, d_audio: usize) -> FeatureWindow {
        FeatureWindow {
            text: Mat::zeros(len, d_text),
            audio: Mat::zeros(len, d_audio),
        }
    }

    /// Builds a window from row slices; both slices must have the same length.
    pub fn from_rows(text: &[&[f32]], audio: &[&[f32]]) -> Result<FeatureWindow, ModelError> {
        if text.len() != audio.len() || text.is_empty() {
            return Err(ModelError::DimensionMismatch(format!(
                "window needs equal, non-zero row counts (text {}, audio {})",
                text.len(),
                audio.len()
            )));
        }
        let stack = |rows: &[&[f32]], what: &str| -> Result<Mat<f32>, ModelError> {
            let d = rows[0].len();
            let mut m = Mat::zeros(rows.len(), d);
            for (i, r) in rows.iter().enumerate() {
                if r.len() != d {
                    return Err(ModelError::DimensionMismatch(format!(
                        "{what} row {i} has {} values, expected {d}",
                        r.len()
                    )));
                }
                m.row_mut(i).copy_from_slice(r);
            }
            Ok(m)
        };
        Ok(FeatureWindow {
            text: stack(text, "text")?,
            audio: stack(audio, "audio")?,
        })
    }

    pub fn len(&self) -> usize {
        self.text.rows
    }

    pub fn is_empty(&self) -> bool {
        self.text.rows == 0
    }

    /// Drops the oldest entry and appends `(text, audio)` at the end.
    pub fn push(&mut self, text: &[f32], audio: &[f32]) -> Result<(), ModelError> {
        if text.len() != self.text.cols || audio.len() != self.audio.cols {
            return Err(ModelError::DimensionMismatch(format!(
                "expected text {} / audio {}, got {} / {}",
                self.text.cols,
                self.audio.cols,
                text.len(),
                audio.len()
            )));
        }
        if self.is_empty() {
            return Ok(());
        }
        shift_in(&mut self.text, text);
        shift_in(&mut self.audio, audio);
        Ok(())
    }

    /// Returns a new window with `(text, audio)` appended and the oldest entry dropped.
    pub fn slide(&self, text: &[f32], audio: &[f32]) -> Result<FeatureWindow, ModelError> {
        let mut next = self.clone();
        next.push(text, audio)?;
        Ok(next)
    }
}

/// Free-function form of [`FeatureWindow::slide`].
pub fn slide_window(window: &FeatureWindow, text: &[f32], audio: &[f32]) -> Result<FeatureWindow, ModelError> {
    window.slide(text, audio)
}

fn shift_in(m: &mut Mat<f32>, row: &[f32]) {
    let cols = m.cols;
    m.data.copy_within(cols.., 0);
    let last = m.rows - 1;
    m.row_mut(last).copy_from_slice(row);
}
