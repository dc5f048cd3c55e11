use crate::error::{Error, Result};
use crate::model::{ParamKind, ParameterStore};

/// Keep-flags for every conv weight tensor (`true` = keep). Tensors that are
/// never pruned (biases, stem linear weights) have no entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    keep: Vec<Option<Vec<bool>>>,
}

impl PruneMask {
    /// Mask that keeps everything.
    pub fn keep_all(params: &ParameterStore) -> Self {
        let keep = params
            .iter()
            .map(|(spec, t)| (spec.kind == ParamKind::ConvWeight).then(|| vec![true; t.numel()]))
            .collect();
        Self { keep }
    }

    pub fn tensor(&self, index: usize) -> Option<&[bool]> {
        self.keep.get(index).and_then(|m| m.as_deref())
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    /// Number of prunable (conv weight) entries.
    pub fn prunable(&self) -> usize {
        self.keep.iter().flatten().map(Vec::len).sum()
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().flatten().map(|m| m.iter().filter(|&&k| k).count()).sum()
    }

    pub fn pruned(&self) -> usize {
        self.prunable() - self.kept()
    }

    /// Zeroes every masked-out weight of `params`.
    pub fn apply(&self, params: &mut ParameterStore) -> Result<()> {
        if params.len() != self.keep.len() {
            return Err(Error::shape(format!(
                "mask covers {} tensors, store has {}",
                self.keep.len(),
                params.len()
            )));
        }
        for (i, (t, m)) in params.tensors_mut().iter_mut().zip(&self.keep).enumerate() {
            let Some(m) = m else { continue };
            if m.len() != t.numel() {
                return Err(Error::shape(format!("mask {i} has {} entries, tensor has {}", m.len(), t.numel())));
            }
            for (w, &k) in t.data_mut().iter_mut().zip(m) {
                if !k {
                    *w = 0.0;
                }
            }
        }
        Ok(())
    }
}

/// Global unstructured L1 pruning over all conv weight tensors.
///
/// Zeroes exactly `floor(ratio · N_conv)` weights with the smallest `|w|`;
/// ties go to the earlier tensor, then the lower flat index.
pub fn prune_l1_global(params: &ParameterStore, ratio: f64) -> Result<PruneMask> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::invalid(format!("prune ratio must lie in [0, 1), got {ratio}")));
    }
    let mut mask = PruneMask::keep_all(params);
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(mask.prunable());
    for (ti, (spec, t)) in params.iter().enumerate() {
        if spec.kind != ParamKind::ConvWeight {
            continue;
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("prune_l1_global"));
        }
        entries.extend(t.data().iter().enumerate().map(|(j, w)| (w.abs(), ti, j)));
    }
    let n_prune = (ratio * entries.len() as f64).floor() as usize;
    if n_prune == 0 {
        return Ok(mask);
    }
    let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2));
    entries.select_nth_unstable_by(n_prune - 1, cmp);
    for &(_, ti, j) in &entries[..n_prune] {
        if let Some(m) = mask.keep[ti].as_mut() {
            m[j] = false;
        }
    }
    Ok(mask)
}
