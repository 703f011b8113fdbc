use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{SessionStream, Timestamp};

/// K-way merge of individually time-ordered streams.
///
/// Equal timestamps keep input-stream order. Labels from all inputs are
/// merged the same way; the output has labels only if some input did.
pub fn merge_streams(streams: Vec<SessionStream>) -> SessionStream {
    let total: usize = streams.iter().map(SessionStream::len).sum();
    let mut heads: BinaryHeap<Reverse<(Timestamp, usize, usize)>> = streams
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| Reverse((s.samples[0].t, i, 0)))
        .collect();

    let mut samples = Vec::with_capacity(total);
    while let Some(Reverse((_, stream, pos))) = heads.pop() {
        let src = &streams[stream].samples;
        samples.push(src[pos]);
        if let Some(next) = src.get(pos + 1) {
            heads.push(Reverse((next.t, stream, pos + 1)));
        }
    }

    let labels = if streams.iter().any(|s| s.labels.is_some()) {
        let mut all: Vec<_> = streams
            .iter()
            .filter_map(|s| s.labels.as_ref())
            .flatten()
            .copied()
            .collect();
        // stable: ties keep stream order
        all.sort_by_key(|l| l.t_ms);
        Some(all)
    } else {
        None
    };

    SessionStream { samples, labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{SensorPayload, SensorSample};
    use proptest::prelude::*;

    fn hr(t: u64, src: u16) -> SensorSample {
        SensorSample::new(Timestamp(t), src, SensorPayload::HeartRate { bpm: 70.0 })
    }

    #[test]
    fn merge_orders_by_time() {
        let a = SessionStream::new(vec![hr(1, 1)]);
        let b = SessionStream::new(vec![hr(2, 2)]);
        let m = merge_streams(vec![a, b]);
        assert_eq!(m.samples, vec![hr(1, 1), hr(2, 2)]);
    }

    #[test]
    fn ties_prefer_first_stream() {
        let a = SessionStream::new(vec![hr(5, 1)]);
        let b = SessionStream::new(vec![hr(5, 2)]);
        let m = merge_streams(vec![b.clone(), a.clone()]);
        assert_eq!(m.samples, vec![hr(5, 2), hr(5, 1)]);
        let m = merge_streams(vec![a, b]);
        assert_eq!(m.samples, vec![hr(5, 1), hr(5, 2)]);
    }

    #[test]
    fn empty_input_is_identity() {
        let x = SessionStream::new(vec![hr(3, 1)]);
        assert_eq!(merge_streams(vec![x.clone(), SessionStream::default()]), x);
        assert!(merge_streams(vec![]).is_empty());
    }

    proptest! {
        #[test]
        fn merged_output_is_time_ordered_and_complete(
            raw in prop::collection::vec(prop::collection::vec(0u64..1000, 0..40), 0..6)
        ) {
            let streams: Vec<SessionStream> = raw
                .iter()
                .enumerate()
                .map(|(i, ts)| {
                    let mut ts = ts.clone();
                    ts.sort_unstable();
                    SessionStream::new(ts.into_iter().map(|t| hr(t, i as u16)).collect())
                })
                .collect();
            let total: usize = streams.iter().map(|s| s.len()).sum();
            let m = merge_streams(streams);
            prop_assert_eq!(m.len(), total);
            prop_assert!(m.is_time_ordered());
            // stability: among equal timestamps, source ids are non-decreasing
            for w in m.samples.windows(2) {
                if w[0].t == w[1].t {
                    prop_assert!(w[0].source_id <= w[1].source_id);
                }
            }
        }
    }
}
