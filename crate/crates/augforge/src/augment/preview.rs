use std::path::Path;

use crate::imaging::{derive_stream, sample_key, save_image, Image, Sample};

use super::{apply_augmentation, AugParams, AugmentError, AugmentationKind, ChainResources};

/// Seed of every preview stream; previews are reproducible by construction.
pub const PREVIEW_SEED: u64 = 0x5eed;
const COLUMNS: usize = 8;
const GAP: usize = 2;
const MARKER: [f32; 3] = [1.0, 0.0, 0.0];
const MARKER_WIDTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreviewSummary {
    /// Source tile plus one tile per catalog kind.
    pub tiles: usize,
    /// Kinds that could not run and show the unmodified source inside a red frame.
    pub degraded: Vec<AugmentationKind>,
}

fn mark(img: &Image) -> Image {
    let (w, h) = img.dims();
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let edge = x.min(y).min(w - 1 - x).min(h - 1 - y);
            if edge < MARKER_WIDTH {
                out.set_pixel(x, y, MARKER);
            }
        }
    }
    out
}

/// Renders the source followed by every catalog kind at probability 1 with
/// default parameters, tiled row-major in 8 columns on a white canvas.
///
/// Mask-dependent kinds need a non-empty mask (and `background` a pool);
/// without them the tile is the source with a red border.
pub fn render_preview(s: &Sample, res: &ChainResources<'_>) -> Result<(Image, PreviewSummary), AugmentError> {
    s.validate()?;
    let mut tiles = vec![s.image.clone()];
    let mut degraded = Vec::new();
    for kind in AugmentationKind::ALL {
        let has_fg = s.mask.as_ref().is_some_and(|m| m.count() > 0);
        let missing = match kind {
            AugmentationKind::Background => !has_fg || res.backgrounds.is_none(),
            k if k.needs_mask() => !has_fg,
            _ => false,
        };
        if missing {
            degraded.push(kind);
            tiles.push(mark(&s.image));
            continue;
        }
        let mut rng = derive_stream(PREVIEW_SEED, 0, sample_key(&s.id), kind.index() as u64);
        let out = apply_augmentation(kind, &AugParams::default_for(kind), s, &mut rng, res)?;
        tiles.push(out.image);
    }

    let (w, h) = s.image.dims();
    let rows = tiles.len().div_ceil(COLUMNS);
    let cw = COLUMNS * w + (COLUMNS - 1) * GAP;
    let ch = rows * h + (rows - 1) * GAP;
    let mut canvas = Image::filled(cw, ch, [1.0; 3]);
    for (i, tile) in tiles.iter().enumerate() {
        let (ox, oy) = ((i % COLUMNS) * (w + GAP), (i / COLUMNS) * (h + GAP));
        for y in 0..h {
            for x in 0..w {
                canvas.set_pixel(ox + x, oy + y, tile.pixel(x, y));
            }
        }
    }
    let summary = PreviewSummary {
        tiles: tiles.len(),
        degraded,
    };
    Ok((canvas, summary))
}

/// [`render_preview`] written to `out` as PNG.
pub fn preview_grid(s: &Sample, res: &ChainResources<'_>, out: impl AsRef<Path>) -> Result<PreviewSummary, AugmentError> {
    let (canvas, summary) = render_preview(s, res)?;
    save_image(&canvas, out)?;
    Ok(summary)
}
