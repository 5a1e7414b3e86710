//! Phase 1 shared by both schemes: uncoded transmission, repeating each bit
//! until the slot is not fully erased, then classifying it by topology.

use super::{status_counts, BitRecord, BitStatus, Link};
use crate::channel::TopologyClass;

pub(crate) struct Phase1 {
    pub slots: usize,
    /// Bits first received under A while both transmitters were active,
    /// in slot order; `a[0][k]` and `a[1][k]` shared a slot.
    pub a: [Vec<usize>; 2],
    /// Bits first received under B, in slot order.
    pub b: [Vec<usize>; 2],
    pub delivered: [usize; 2],
    /// Bits still unsent when the budget ran out.
    pub backlog: Option<usize>,
}

/// Sends `queue[i]` (local bit indices of user `i`) within `budget` slots.
pub(crate) fn run(
    link: &mut Link,
    records: &mut [Vec<BitRecord>; 2],
    queue: [&[usize]; 2],
    budget: usize,
    mut history: Option<&mut Vec<[[usize; 5]; 2]>>,
) -> Phase1 {
    let mut out = Phase1 {
        slots: 0,
        a: [Vec::new(), Vec::new()],
        b: [Vec::new(), Vec::new()],
        delivered: [0, 0],
        backlog: None,
    };
    let mut pos = [0usize; 2];
    if let Some(h) = history.as_deref_mut() {
        h.push(status_counts(records));
    }
    while pos[0] < queue[0].len() || pos[1] < queue[1].len() {
        if out.slots >= budget {
            out.backlog = Some(queue[0].len() - pos[0] + queue[1].len() - pos[1]);
            break;
        }
        let cur = [0, 1].map(|u| queue[u].get(pos[u]).copied());
        let terms = [0, 1].map(|u| cur[u].map(|k| vec![link.global(u, k)]).unwrap_or_default());
        let state = link.send(&terms[0], &terms[1]);
        out.slots += 1;
        let class = state.class();
        if matches!(class, TopologyClass::D | TopologyClass::Other) {
            continue;
        }
        let both = cur[0].is_some() && cur[1].is_some();
        for u in 0..2 {
            let Some(k) = cur[u] else { continue };
            let status = match class {
                TopologyClass::A if both => {
                    out.a[u].push(k);
                    BitStatus::ClassifiedA
                }
                TopologyClass::B => {
                    out.b[u].push(k);
                    BitStatus::ClassifiedB
                }
                _ => {
                    out.delivered[u] += 1;
                    BitStatus::Delivered
                }
            };
            records[u][k] = BitRecord {
                status,
                first_success_topology: Some(class),
            };
            pos[u] += 1;
        }
        if let Some(h) = history.as_deref_mut() {
            h.push(status_counts(records));
        }
    }
    out
}
