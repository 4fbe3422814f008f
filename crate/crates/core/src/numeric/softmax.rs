use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::Real;

/// Values grouped into consecutive segments; segment `s` is
/// `values[offsets[s]..offsets[s + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentVector<T> {
    pub values: Vec<T>,
    pub offsets: Vec<usize>,
}

impl<T: Real> SegmentVector<T> {
    pub fn new(values: Vec<T>, offsets: Vec<usize>) -> Result<Self> {
        check_offsets(values.len(), &offsets)?;
        Ok(Self { values, offsets })
    }

    pub fn segments(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn segment(&self, s: usize) -> &[T] {
        &self.values[self.offsets[s]..self.offsets[s + 1]]
    }
}

fn check_offsets(len: usize, offsets: &[usize]) -> Result<()> {
    if offsets.first() != Some(&0) || offsets.last() != Some(&len) {
        bail!(InvalidInput, "segment offsets must run from 0 to {len}");
    }
    if let Some(w) = offsets.windows(2).find(|w| w[1] <= w[0]) {
        bail!(InvalidInput, "empty or decreasing segment at offset {}", w[0]);
    }
    Ok(())
}

/// Softmax within every segment, writing probabilities into `out` and
/// returning each segment's log-sum-exp. Offsets must already be validated.
pub(crate) fn softmax_segments_into<T: Real>(logits: &[T], offsets: &[usize], out: &mut [T], lse: &mut [T]) {
    for (s, w) in offsets.windows(2).enumerate() {
        let seg = &logits[w[0]..w[1]];
        let max = seg.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (o, &x) in out[w[0]..w[1]].iter_mut().zip(seg) {
            let e = (x - max).exp();
            *o = e;
            sum += e;
        }
        let inv = T::one() / sum;
        out[w[0]..w[1]].iter_mut().for_each(|o| *o *= inv);
        lse[s] = max + sum.ln();
    }
}

/// Numerically stable softmax over each segment.
pub fn segment_softmax<T: Real>(logits: &SegmentVector<T>) -> Result<SegmentVector<T>> {
    check_offsets(logits.values.len(), &logits.offsets)?;
    let mut values = alloc::vec![T::zero(); logits.values.len()];
    let mut lse = alloc::vec![T::zero(); logits.segments()];
    softmax_segments_into(&logits.values, &logits.offsets, &mut values, &mut lse);
    Ok(SegmentVector { values, offsets: logits.offsets.clone() })
}

/// Writes `dlogits = p ⊙ (dp − Σ p·dp)` per segment.
pub(crate) fn softmax_backward_into<T: Real>(probs: &[T], offsets: &[usize], dprobs: &[T], dlogits: &mut [T]) {
    for w in offsets.windows(2) {
        let r = w[0]..w[1];
        let dot: T = probs[r.clone()].iter().zip(&dprobs[r.clone()]).map(|(&p, &d)| p * d).sum();
        for ((o, &p), &d) in dlogits[r.clone()].iter_mut().zip(&probs[r.clone()]).zip(&dprobs[r]) {
            *o = p * (d - dot);
        }
    }
}

/// Gradient of [`segment_softmax`] with respect to its logits, given the
/// forward probabilities and the upstream gradient.
pub fn segment_softmax_backward<T: Real>(probs: &SegmentVector<T>, dprobs: &[T]) -> Result<SegmentVector<T>> {
    if dprobs.len() != probs.values.len() {
        bail!(Shape, "{} upstream values for {} probabilities", dprobs.len(), probs.values.len());
    }
    let mut out = alloc::vec![T::zero(); dprobs.len()];
    softmax_backward_into(&probs.values, &probs.offsets, dprobs, &mut out);
    Ok(SegmentVector { values: out, offsets: probs.offsets.clone() })
}
