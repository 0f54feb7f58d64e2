//! On-disk datasets: `images/<id>.png`, optional `masks/<id>.png`,
//! optional `backgrounds/*.png` and `ground_truth.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::augment::{apply_chain_with, BackgroundPool, ChainConfig, ChainKey, ChainResources, ExternalHook};
use crate::eval::{GroundTruth, GtImage};
use crate::imaging::{load_image, load_mask, save_image, save_mask, Sample};

use super::HarnessError;

pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";
pub const BACKGROUNDS_DIR: &str = "backgrounds";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Samples augmented in memory at once.
const BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub images_dir: PathBuf,
    pub masks_dir: Option<PathBuf>,
    pub backgrounds_dir: Option<PathBuf>,
    pub ground_truth_path: PathBuf,
    pub ground_truth: GroundTruth,
}

fn png_dims(path: &Path) -> Result<(u32, u32), String> {
    let file = fs::File::open(path).map_err(|e| e.to_string())?;
    let info = png::Decoder::new(std::io::BufReader::new(file))
        .read_info()
        .map_err(|e| e.to_string())?;
    let i = info.info();
    Ok((i.width, i.height))
}

impl DatasetManifest {
    /// Reads the ground truth and checks every referenced file. All problems
    /// are collected into one validation error.
    pub fn load(root: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let root = root.as_ref().to_path_buf();
        let images_dir = root.join(IMAGES_DIR);
        let masks_dir = Some(root.join(MASKS_DIR)).filter(|p| p.is_dir());
        let backgrounds_dir = Some(root.join(BACKGROUNDS_DIR)).filter(|p| p.is_dir());
        let ground_truth_path = root.join(GROUND_TRUTH_FILE);
        let ground_truth = GroundTruth::load(&ground_truth_path).map_err(|e| HarnessError::Validation(e.to_string()))?;

        let mut problems = Vec::new();
        if !images_dir.is_dir() {
            problems.push(format!("missing directory {}", images_dir.display()));
        }
        for img in &ground_truth.images {
            let mut check = |path: PathBuf, what: &str| match png_dims(&path) {
                Ok(dims) if dims != (img.width, img.height) => problems.push(format!(
                    "{what} {} is {}x{}, ground truth says {}x{}",
                    path.display(),
                    dims.0,
                    dims.1,
                    img.width,
                    img.height
                )),
                Ok(_) => {}
                Err(e) => problems.push(format!("{what} {}: {e}", path.display())),
            };
            check(images_dir.join(format!("{}.png", img.id)), "image");
            if let Some(m) = &masks_dir {
                check(m.join(format!("{}.png", img.id)), "mask");
            }
        }
        if !problems.is_empty() {
            return Err(HarnessError::Validation(format!(
                "dataset {}: {}",
                root.display(),
                problems.join("; ")
            )));
        }
        Ok(Self {
            root,
            images_dir,
            masks_dir,
            backgrounds_dir,
            ground_truth_path,
            ground_truth,
        })
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        self.images_dir.join(format!("{id}.png"))
    }

    pub fn mask_path(&self, id: &str) -> Option<PathBuf> {
        self.masks_dir.as_ref().map(|m| m.join(format!("{id}.png")))
    }

    pub fn load_sample(&self, rec: &GtImage) -> Result<Sample, HarnessError> {
        let mut s = Sample::new(rec.id.clone(), load_image(self.image_path(&rec.id))?).with_boxes(rec.boxes.clone());
        if let Some(p) = self.mask_path(&rec.id) {
            s = s.with_mask(load_mask(p)?);
        }
        Ok(s)
    }
}

/// Extra inputs for [`augment_dataset`].
#[derive(Debug, Clone, Default)]
pub struct AugmentOptions {
    pub hook: Option<ExternalHook>,
}

fn copy(from: &Path, to: &Path) -> Result<(), HarnessError> {
    fs::copy(from, to).map(drop).map_err(|source| HarnessError::Io {
        path: to.to_path_buf(),
        source,
    })
}

/// Writes an augmented copy of the dataset to `out` with the same layout.
///
/// Sample `id` draws augmentation `k` from stream `(seed, 0, sample_key(id), k)`.
/// Samples the chain leaves unchanged are copied byte for byte.
pub fn augment_dataset(
    manifest: &DatasetManifest,
    cfg: &ChainConfig,
    out: &Path,
    seed: u64,
    opts: &AugmentOptions,
) -> Result<(), HarnessError> {
    let pool = match &manifest.backgrounds_dir {
        Some(dir) => Some(BackgroundPool::from_dir(dir)?),
        None => None,
    };
    let res = ChainResources {
        backgrounds: pool.as_ref(),
        hook: opts.hook.as_ref(),
    };
    let key = ChainKey::new(seed, 0);

    let mkdir = |p: &Path| {
        fs::create_dir_all(p).map_err(|source| HarnessError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let out_images = out.join(IMAGES_DIR);
    mkdir(&out_images)?;
    let out_masks = manifest.masks_dir.as_ref().map(|_| out.join(MASKS_DIR));
    if let Some(m) = &out_masks {
        mkdir(m)?;
    }

    let mut gt_out = GroundTruth::default();
    for batch in manifest.ground_truth.images.chunks(BATCH) {
        let done: Vec<(Sample, Sample)> = batch
            .par_iter()
            .map(|rec| {
                let input = manifest.load_sample(rec)?;
                let output = apply_chain_with(cfg, &res, &input, key)?;
                Ok((input, output))
            })
            .collect::<Result<_, HarnessError>>()?;
        for (rec, (input, output)) in batch.iter().zip(done) {
            let img_to = out_images.join(format!("{}.png", rec.id));
            if output.image == input.image {
                copy(&manifest.image_path(&rec.id), &img_to)?;
            } else {
                save_image(&output.image, &img_to)?;
            }
            if let (Some(dir), Some(mask)) = (&out_masks, &output.mask) {
                let to = dir.join(format!("{}.png", rec.id));
                if Some(mask) == input.mask.as_ref() {
                    copy(&manifest.mask_path(&rec.id).expect("mask dir exists"), &to)?;
                } else {
                    save_mask(mask, &to)?;
                }
            }
            gt_out.images.push(GtImage {
                boxes: output.boxes,
                ..rec.clone()
            });
        }
    }

    let gt_to = out.join(GROUND_TRUTH_FILE);
    if gt_out == manifest.ground_truth {
        copy(&manifest.ground_truth_path, &gt_to)
    } else {
        let text = serde_json::to_string_pretty(&gt_out).expect("ground truth serializes");
        fs::write(&gt_to, text + "\n").map_err(|source| HarnessError::Io { path: gt_to, source })
    }
}
