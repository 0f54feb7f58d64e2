//! Detection metrics: IoU and COCO-style mean average precision.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::BBox;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("detection references unknown image {0:?}")]
    UnknownImage(String),
    #[error("class {0} does not occur in the ground truth")]
    UnknownClass(u32),
    #[error("{path}: {reason}")]
    Read { path: String, reason: String },
}

/// `10` IoU thresholds `0.50, 0.55, ..., 0.95`, each computed as `k / 100` so
/// that e.g. an IoU of exactly `60 / 100` meets the `0.60` threshold.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (50 + 5 * k) as f64 / 100.0)
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtImage {
    pub id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    #[serde(default)]
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub images: Vec<GtImage>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<(), EvalError> {
        let mut seen = BTreeSet::new();
        for img in &self.images {
            if !seen.insert(img.id.as_str()) {
                return Err(EvalError::Invalid(format!("duplicate image id {:?}", img.id)));
            }
            if let Some(b) = img.boxes.iter().find(|b| !b.is_valid()) {
                return Err(EvalError::Invalid(format!("image {:?} has degenerate box {b:?}", img.id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let gt: Self = serde_json::from_str(text).map_err(|e| EvalError::Invalid(format!("ground truth: {e}")))?;
        gt.validate()?;
        Ok(gt)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Self::from_json(&read(path.as_ref())?)
    }

    /// Classes with at least one box.
    pub fn classes(&self) -> BTreeSet<u32> {
        self.images.iter().flat_map(|i| i.boxes.iter().map(|b| b.class_id)).collect()
    }

    fn image(&self, id: &str) -> Option<&GtImage> {
        self.images.iter().find(|i| i.id == id)
    }
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|e| EvalError::Read {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// One scored box. Serialized flat: `{"image_id", "x_min", ..., "class_id", "score"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    #[serde(flatten)]
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn validate(&self) -> Result<(), EvalError> {
        for (i, d) in self.detections.iter().enumerate() {
            if !d.bbox.is_valid() {
                return Err(EvalError::Invalid(format!("detection {i} has a degenerate box")));
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(EvalError::Invalid(format!("detection {i} has score {} outside [0, 1]", d.score)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let det: Self = serde_json::from_str(text).map_err(|e| EvalError::Invalid(format!("detections: {e}")))?;
        det.validate()?;
        Ok(det)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Self::from_json(&read(path.as_ref())?)
    }
}

fn check_images(gt: &GroundTruth, det: &DetectionSet) -> Result<(), EvalError> {
    let ids: BTreeSet<&str> = gt.images.iter().map(|i| i.id.as_str()).collect();
    match det.detections.iter().find(|d| !ids.contains(d.image_id.as_str())) {
        Some(d) => Err(EvalError::UnknownImage(d.image_id.clone())),
        None => Ok(()),
    }
}

/// Outcome of greedy matching for one class at one threshold.
struct Matching {
    /// TP flag per detection, in ranking order.
    tp: Vec<bool>,
    /// IoU of every true positive.
    ious: Vec<f64>,
    n_gt: usize,
}

/// Ranks detections by descending score (ties: image id, then input order)
/// and lets each take the unmatched ground truth of its image with the
/// highest IoU, if that IoU reaches `threshold`.
fn match_class(gt: &GroundTruth, det: &DetectionSet, class_id: u32, threshold: f64) -> Matching {
    let gt_boxes: HashMap<&str, Vec<&BBox>> = gt
        .images
        .iter()
        .map(|i| (i.id.as_str(), i.boxes.iter().filter(|b| b.class_id == class_id).collect()))
        .collect();
    let n_gt = gt_boxes.values().map(Vec::len).sum();
    let mut ranked: Vec<(usize, &Detection)> = det
        .detections
        .iter()
        .enumerate()
        .filter(|(_, d)| d.bbox.class_id == class_id)
        .collect();
    ranked.sort_by(|(ia, a), (ib, b)| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.image_id.cmp(&b.image_id))
            .then(ia.cmp(ib))
    });
    let mut used: HashMap<&str, Vec<bool>> = gt_boxes.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
    let mut tp = Vec::with_capacity(ranked.len());
    let mut ious = Vec::new();
    for (_, d) in ranked {
        let boxes = &gt_boxes[d.image_id.as_str()];
        let taken = used.get_mut(d.image_id.as_str()).expect("image checked");
        let best = boxes
            .iter()
            .enumerate()
            .filter(|(k, _)| !taken[*k])
            .map(|(k, g)| (k, iou(&d.bbox, g)))
            .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            });
        match best {
            Some((k, v)) if v >= threshold => {
                taken[k] = true;
                tp.push(true);
                ious.push(v);
            }
            _ => tp.push(false),
        }
    }
    Matching { tp, ious, n_gt }
}

/// 101-point interpolated area under the precision/recall curve of a ranked TP list.
pub fn interpolated_ap(tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, t) in tp.iter().enumerate() {
        hits += *t as usize;
        recall.push(hits as f64 / n_gt as f64);
        precision.push(hits as f64 / (i + 1) as f64);
    }
    // precision envelope: max precision at any recall >= r
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut k = 0;
    for r in 0..=100 {
        let r = r as f64 / 100.0;
        while k < recall.len() && recall[k] < r {
            k += 1;
        }
        if k < recall.len() {
            sum += precision[k];
        }
    }
    sum / 101.0
}

/// AP of one class at one IoU threshold.
pub fn average_precision(gt: &GroundTruth, det: &DetectionSet, class_id: u32, threshold: f64) -> Result<f64, EvalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::Invalid(format!("IoU threshold {threshold} outside (0, 1]")));
    }
    check_images(gt, det)?;
    if !gt.classes().contains(&class_id) {
        return Err(EvalError::UnknownClass(class_id));
    }
    let m = match_class(gt, det, class_id, threshold);
    Ok(interpolated_ap(&m.tp, m.n_gt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(rename = "mAP@50")]
    pub map50: f64,
    #[serde(rename = "mAP@75")]
    pub map75: f64,
    /// Mean IoU of the true positives at threshold 0.50; 0 without any.
    #[serde(rename = "mean_IoU")]
    pub mean_iou: f64,
    #[serde(rename = "subset_mAP")]
    pub subset_map: BTreeMap<String, f64>,
}

struct Core {
    map: f64,
    map50: f64,
    map75: f64,
    mean_iou: f64,
}

fn core(gt: &GroundTruth, det: &DetectionSet) -> Option<Core> {
    let classes = gt.classes();
    if classes.is_empty() {
        return None;
    }
    let thresholds = iou_thresholds();
    let mut per_t = [0.0; 10];
    let mut ious = Vec::new();
    for &c in &classes {
        for (t, &thr) in thresholds.iter().enumerate() {
            let m = match_class(gt, det, c, thr);
            per_t[t] += interpolated_ap(&m.tp, m.n_gt);
            if t == 0 {
                ious.extend(m.ious);
            }
        }
    }
    let nc = classes.len() as f64;
    Some(Core {
        map: per_t.iter().sum::<f64>() / (10.0 * nc),
        map50: per_t[0] / nc,
        map75: per_t[5] / nc,
        mean_iou: if ious.is_empty() {
            0.0
        } else {
            ious.iter().sum::<f64>() / ious.len() as f64
        },
    })
}

/// Full report. mAP averages over the classes present in the ground truth
/// and the ten thresholds; each subset tag gets the mAP of its images alone.
pub fn evaluate(gt: &GroundTruth, det: &DetectionSet) -> Result<MetricsReport, EvalError> {
    gt.validate()?;
    det.validate()?;
    check_images(gt, det)?;
    let known = gt.classes();
    if let Some(d) = det.detections.iter().find(|d| !known.contains(&d.bbox.class_id)) {
        return Err(EvalError::UnknownClass(d.bbox.class_id));
    }
    let Some(all) = core(gt, det) else {
        return Err(EvalError::Invalid("ground truth has no boxes".into()));
    };
    let tags: BTreeSet<&str> = gt.images.iter().filter_map(|i| i.subset.as_deref()).collect();
    let mut subset_map = BTreeMap::new();
    for tag in tags {
        let sub_gt = GroundTruth {
            images: gt
                .images
                .iter()
                .filter(|i| i.subset.as_deref() == Some(tag))
                .cloned()
                .collect(),
        };
        let sub_det = DetectionSet {
            detections: det
                .detections
                .iter()
                .filter(|d| gt.image(&d.image_id).and_then(|i| i.subset.as_deref()) == Some(tag))
                .cloned()
                .collect(),
        };
        subset_map.insert(tag.to_string(), core(&sub_gt, &sub_det).map_or(0.0, |c| c.map));
    }
    Ok(MetricsReport {
        map: all.map,
        map50: all.map50,
        map75: all.map75,
        mean_iou: all.mean_iou,
        subset_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1, 0).unwrap()
    }

    fn gt1(boxes: Vec<BBox>) -> GroundTruth {
        GroundTruth {
            images: vec![GtImage {
                id: "a".into(),
                width: 100,
                height: 100,
                subset: None,
                boxes,
            }],
        }
    }

    fn det(d: &[(BBox, f64)]) -> DetectionSet {
        DetectionSet {
            detections: d
                .iter()
                .map(|(bbox, score)| Detection {
                    image_id: "a".into(),
                    bbox: *bbox,
                    score: *score,
                })
                .collect(),
        }
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert!((iou(&a, &b(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_of_point_six_gives_three_tenths() {
        let g = gt1(vec![b(0.0, 0.0, 10.0, 10.0)]);
        let d = det(&[(b(0.0, 0.0, 6.0, 10.0), 0.9)]);
        let r = evaluate(&g, &d).unwrap();
        assert_eq!(r.map, 0.3);
        assert_eq!(r.map50, 1.0);
        assert_eq!(r.map75, 0.0);
        assert_eq!(r.mean_iou, 0.6);
    }

    #[test]
    fn perfect_detector() {
        let g = gt1(vec![b(0.0, 0.0, 10.0, 10.0), b(30.0, 30.0, 50.0, 60.0)]);
        let d = det(&[(b(0.0, 0.0, 10.0, 10.0), 0.5), (b(30.0, 30.0, 50.0, 60.0), 0.7)]);
        let r = evaluate(&g, &d).unwrap();
        assert_eq!((r.map, r.map50, r.map75, r.mean_iou), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn no_detections_is_zero() {
        let g = gt1(vec![b(0.0, 0.0, 10.0, 10.0)]);
        assert_eq!(average_precision(&g, &det(&[]), 0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn trailing_false_positive_keeps_ap_one() {
        let g = gt1(vec![b(0.0, 0.0, 10.0, 10.0)]);
        let d = det(&[(b(0.0, 0.0, 10.0, 10.0), 0.9), (b(50.0, 50.0, 60.0, 60.0), 0.8)]);
        assert_eq!(average_precision(&g, &d, 0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn leading_false_positive_halves_precision() {
        let g = gt1(vec![b(0.0, 0.0, 10.0, 10.0)]);
        let d = det(&[(b(0.0, 0.0, 10.0, 10.0), 0.8), (b(50.0, 50.0, 60.0, 60.0), 0.9)]);
        assert_eq!(average_precision(&g, &d, 0, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn unknown_image_and_class_are_errors() {
        let g = gt1(vec![b(0.0, 0.0, 10.0, 10.0)]);
        let mut d = det(&[(b(0.0, 0.0, 10.0, 10.0), 0.9)]);
        d.detections[0].image_id = "zzz".into();
        assert!(matches!(evaluate(&g, &d), Err(EvalError::UnknownImage(id)) if id == "zzz"));
        let mut d = det(&[(b(0.0, 0.0, 10.0, 10.0), 0.9)]);
        d.detections[0].bbox.class_id = 7;
        assert!(matches!(evaluate(&g, &d), Err(EvalError::UnknownClass(7))));
        assert!(matches!(average_precision(&g, &det(&[]), 3, 0.5), Err(EvalError::UnknownClass(3))));
    }

    #[test]
    fn subsets_are_scored_separately() {
        let mut g = gt1(vec![b(0.0, 0.0, 10.0, 10.0)]);
        g.images[0].subset = Some("lightbox".into());
        g.images.push(GtImage {
            id: "b".into(),
            width: 100,
            height: 100,
            subset: Some("sunlamp".into()),
            boxes: vec![b(0.0, 0.0, 10.0, 10.0)],
        });
        let d = det(&[(b(0.0, 0.0, 10.0, 10.0), 0.9)]);
        let r = evaluate(&g, &d).unwrap();
        assert_eq!(r.subset_map["lightbox"], 1.0);
        assert_eq!(r.subset_map["sunlamp"], 0.0);
    }

    #[test]
    fn detection_json_is_flat() {
        let d = DetectionSet::from_json(
            r#"{"detections":[{"image_id":"a","x_min":1,"y_min":2,"x_max":3,"y_max":4,"class_id":0,"score":0.5}]}"#,
        )
        .unwrap();
        assert_eq!(d.detections[0].bbox, BBox::new(1.0, 2.0, 3.0, 4.0, 0).unwrap());
        let r = evaluate(&gt1(vec![b(0.0, 0.0, 1.0, 1.0)]), &DetectionSet::default()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["mAP", "mAP@50", "mAP@75", "mean_IoU", "subset_mAP"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
