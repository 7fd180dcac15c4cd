use super::EchoSequence;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    pub input: EchoSequence,
    pub target: EchoSequence,
    pub origin_offset: usize,
}

/// Sliding windows of `width` frames every `stride` frames, each split into
/// `t_in` input frames and `width - t_in` target frames.
pub fn build_windows(seq: &EchoSequence, width: usize, stride: usize, t_in: usize) -> Result<Vec<SequenceWindow>> {
    if !(width > t_in && t_in >= 1 && stride >= 1) {
        return Err(crate::error::Error::Domain(format!(
            "need width > t_in >= 1 and stride >= 1, got width={width} t_in={t_in} stride={stride}"
        )));
    }
    let t = seq.len();
    if t < width {
        return Ok(Vec::new());
    }
    let count = (t - width) / stride + 1;
    (0..count)
        .map(|k| {
            let start = k * stride;
            Ok(SequenceWindow {
                input: seq.slice(start, t_in)?,
                target: seq.slice(start + t_in, width - t_in)?,
                origin_offset: start,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use sftformer_autograd::Tensor;

    fn ramp(t: usize, h: usize, w: usize) -> EchoSequence {
        let n = t * h * w;
        let frames = Tensor::from_fn(vec![t, h, w], |i| i as f32 / n as f32);
        EchoSequence::normalized(frames, "ramp").unwrap()
    }

    #[test]
    fn twenty_five_frames_give_two_windows() {
        let w = build_windows(&ramp(25, 2, 2), 20, 5, 10).unwrap();
        let offs: Vec<_> = w.iter().map(|w| w.origin_offset).collect();
        assert_eq!(offs, vec![0, 5]);
    }

    #[test]
    fn too_short_is_empty() {
        assert!(build_windows(&ramp(19, 2, 2), 20, 5, 10).unwrap().is_empty());
    }

    #[test]
    fn windows_equal_direct_slices() {
        let (h, w) = (3, 2);
        let seq = ramp(40, h, w);
        let windows = build_windows(&seq, 20, 5, 10).unwrap();
        assert_eq!(windows.len(), 5);
        let src = seq.frames().data();
        let hw = h * w;
        for (k, win) in windows.iter().enumerate() {
            for f in 0..20 {
                for p in 0..hw {
                    let expected = src[(k * 5 + f) * hw + p];
                    let got = if f < 10 {
                        win.input.frames().data()[f * hw + p]
                    } else {
                        win.target.frames().data()[(f - 10) * hw + p]
                    };
                    assert_eq!(got.to_bits(), expected.to_bits());
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn count_matches_closed_form(t in 1usize..80, width in 2usize..40, stride in 1usize..12) {
            let seq = ramp(t, 1, 1);
            let got = build_windows(&seq, width, stride, 1).unwrap().len();
            let expected = if t < width { 0 } else { (t - width) / stride + 1 };
            prop_assert_eq!(got, expected);
        }
    }
}
