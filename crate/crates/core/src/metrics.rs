//! Pixel-level IoU in both evaluation modes and per-object
//! correct/partial/false-negative/false-positive accounting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ClassMap, InstanceMap, CLASS_INTERIOR};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// Per-pixel confusion counts with "vehicle" = 1 as the positive class.
pub fn pixel_confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionMatrix> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::validation(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &g) in pred.grid().as_slice().iter().zip(gt.grid().as_slice()) {
        match (p, g) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fp += 1,
            (0, 1) => cm.fn_ += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// IoU = TP / (TP + FP + FN). Two empty masks score 1.0 by convention.
pub fn iou(cm: &ConfusionMatrix) -> f64 {
    let denom = cm.tp + cm.fp + cm.fn_;
    if denom == 0 {
        1.0
    } else {
        cm.tp as f64 / denom as f64
    }
}

/// The two pixel-IoU evaluation modes: interior-only prediction against the
/// full ground-truth mask, and the border-restored instances against it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModeIoU {
    pub iou_no_border: f64,
    pub iou_exp_border: f64,
    pub confusion_no_border: ConfusionMatrix,
    pub confusion_exp_border: ConfusionMatrix,
}

pub fn evaluate_modes(
    pred_cm: &ClassMap,
    pred_inst: &InstanceMap,
    gt_inst: &InstanceMap,
) -> Result<ModeIoU> {
    let dims = (gt_inst.width(), gt_inst.height());
    if (pred_cm.width(), pred_cm.height()) != dims
        || (pred_inst.width(), pred_inst.height()) != dims
    {
        return Err(Error::validation(
            "evaluation inputs must share dimensions".to_string(),
        ));
    }
    let gt_mask = mask_nonzero(gt_inst);
    let interior = BinaryMask::new(crate::grid::Grid::from_vec(
        pred_cm.width(),
        pred_cm.height(),
        pred_cm
            .grid()
            .as_slice()
            .iter()
            .map(|&v| u8::from(v == CLASS_INTERIOR))
            .collect(),
    ))
    .expect("values 0/1");
    let restored = mask_nonzero(pred_inst);
    let confusion_no_border = pixel_confusion(&interior, &gt_mask)?;
    let confusion_exp_border = pixel_confusion(&restored, &gt_mask)?;
    Ok(ModeIoU {
        iou_no_border: iou(&confusion_no_border),
        iou_exp_border: iou(&confusion_exp_border),
        confusion_no_border,
        confusion_exp_border,
    })
}

fn mask_nonzero(im: &InstanceMap) -> BinaryMask {
    BinaryMask::new(crate::grid::Grid::from_vec(
        im.width(),
        im.height(),
        im.grid()
            .as_slice()
            .iter()
            .map(|&v| u8::from(v != 0))
            .collect(),
    ))
    .expect("values 0/1")
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MatchConfig {
    pub tau_correct: f64,
    pub tau_partial: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            tau_correct: 0.5,
            tau_partial: 0.1,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.tau_partial
            && self.tau_partial < self.tau_correct
            && self.tau_correct <= 1.0)
        {
            return Err(Error::validation(format!(
                "thresholds must satisfy 0 < tau_partial ({}) < tau_correct ({}) <= 1",
                self.tau_partial, self.tau_correct
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub pred_id: u32,
    pub gt_id: u32,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ObjectReport {
    pub correct: u32,
    pub partial: u32,
    pub false_negatives: u32,
    pub false_positives: u32,
    pub matches: Vec<Match>,
}

/// One-to-one object matching by greedy descending IoU.
///
/// Pairs with IoU >= tau_correct are matched greedily (ties broken by lower
/// gt id, then lower pred id); matched predictions are correct. Remaining
/// predictions are partial when their best pair IoU exceeds tau_partial and
/// false positives otherwise. Ground-truth instances that are neither
/// matched nor covered by a partial prediction are false negatives.
pub fn per_object(pred: &InstanceMap, gt: &InstanceMap, cfg: &MatchConfig) -> Result<ObjectReport> {
    cfg.validate()?;
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::validation(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let n_pred = pred.n_instances() as usize;
    let n_gt = gt.n_instances() as usize;

    let pred_areas = pred.areas();
    let gt_areas = gt.areas();
    let mut inter: HashMap<(u32, u32), u64> = HashMap::new();
    for (&p, &g) in pred.grid().as_slice().iter().zip(gt.grid().as_slice()) {
        if p != 0 && g != 0 {
            *inter.entry((p, g)).or_insert(0) += 1;
        }
    }

    let mut pairs: Vec<Match> = inter
        .into_iter()
        .map(|((p, g), i)| Match {
            pred_id: p,
            gt_id: g,
            iou: i as f64 / (pred_areas[p as usize] + gt_areas[g as usize] - i) as f64,
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.iou
            .partial_cmp(&a.iou)
            .unwrap()
            .then(a.gt_id.cmp(&b.gt_id))
            .then(a.pred_id.cmp(&b.pred_id))
    });

    let mut pred_matched = vec![false; n_pred + 1];
    let mut gt_matched = vec![false; n_gt + 1];
    let mut matches = Vec::new();
    for pair in &pairs {
        if pair.iou < cfg.tau_correct {
            break;
        }
        if !pred_matched[pair.pred_id as usize] && !gt_matched[pair.gt_id as usize] {
            pred_matched[pair.pred_id as usize] = true;
            gt_matched[pair.gt_id as usize] = true;
            matches.push(*pair);
        }
    }

    let mut best_pred_iou = vec![0.0f64; n_pred + 1];
    for pair in &pairs {
        let slot = &mut best_pred_iou[pair.pred_id as usize];
        if pair.iou > *slot {
            *slot = pair.iou;
        }
    }

    let mut partial = 0u32;
    let mut false_positives = 0u32;
    let mut pred_partial = vec![false; n_pred + 1];
    for id in 1..=n_pred {
        if pred_matched[id] {
            continue;
        }
        if best_pred_iou[id] > cfg.tau_partial {
            partial += 1;
            pred_partial[id] = true;
        } else {
            false_positives += 1;
        }
    }

    // A gt instance covered by a partial prediction does not also count as a
    // false negative.
    let mut gt_covered = gt_matched.clone();
    for pair in &pairs {
        if pred_partial[pair.pred_id as usize] && pair.iou > cfg.tau_partial {
            gt_covered[pair.gt_id as usize] = true;
        }
    }
    let false_negatives = (1..=n_gt).filter(|&id| !gt_covered[id]).count() as u32;

    Ok(ObjectReport {
        correct: matches.len() as u32,
        partial,
        false_negatives,
        false_positives,
        matches,
    })
}
