use std::time::Duration;

use crate::imaging::{decode_image, encode_image, Image};
use crate::subprocess::run_shell;

use super::AugmentError;

/// A user-supplied image transform run as `sh -c <command>`.
///
/// The current image is written to the command's stdin as an 8-bit RGB PNG;
/// the command must print a PNG of the same size on stdout and exit 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalHook {
    pub command: String,
    pub probability: f64,
    pub timeout: Duration,
}

impl ExternalHook {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            probability: super::DEFAULT_PROBABILITY,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Image, AugmentError> {
        let input = encode_image(img)?;
        let out = run_shell(&self.command, input, self.timeout).map_err(|e| AugmentError::Hook(e.to_string()))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(AugmentError::Hook(format!("{} ({})", out.status, stderr.trim())));
        }
        let result = decode_image(&out.stdout).map_err(|e| AugmentError::Hook(format!("bad output image: {e}")))?;
        if result.dims() != img.dims() {
            return Err(AugmentError::Hook(format!(
                "output is {:?}, expected {:?}",
                result.dims(),
                img.dims()
            )));
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_round_trips_quantized_image() {
        let img = Image::from_fn(5, 4, |x, y| [x as f32 / 4.0, y as f32 / 3.0, 0.0]);
        let out = ExternalHook::new("cat").apply(&img).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn failure_and_garbage_are_hook_errors() {
        let img = Image::new(2, 2);
        assert!(matches!(ExternalHook::new("exit 1").apply(&img), Err(AugmentError::Hook(_))));
        assert!(matches!(ExternalHook::new("echo nope").apply(&img), Err(AugmentError::Hook(_))));
    }
}
