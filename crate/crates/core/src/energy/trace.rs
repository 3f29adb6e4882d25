use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::models::{ModelKind, OpReport};

pub const DEFAULT_BLOCK: u64 = 64;

fn kind_tag(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Ppr => 1,
        ModelKind::Ridge => 2,
        ModelKind::Mnb => 3,
    }
}

/// Page sequence for the entries touched by an operation, in touch order.
/// Each run of `block` consecutive entries is one page; consecutive touches
/// of the same page collapse into one access.
pub fn model_access_trace(kind: ModelKind, report: &OpReport, block: u64) -> Vec<u64> {
    let block = block.max(1);
    let tag = kind_tag(kind) << 56;
    let mut out: Vec<u64> = Vec::new();
    for span in &report.touched {
        if span.len == 0 {
            continue;
        }
        let first = span.start / block;
        let last = (span.end() - 1) / block;
        for page in first..=last {
            let id = tag | page;
            if out.last() != Some(&id) {
                out.push(id);
            }
        }
    }
    out
}

/// Per-worker, per-round resource record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub round: u64,
    pub device: usize,
    pub time_ms: f64,
    pub energy: f64,
    /// Distinct consecutive frequency levels visited.
    pub levels: Vec<usize>,
    pub page_faults: u64,
    pub page_swaps: u64,
    pub ops: u64,
}

pub fn write_energy_trace<W: Write>(out: W, records: &[EnergyRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "round",
        "device",
        "time_ms",
        "energy",
        "levels",
        "page_faults",
        "page_swaps",
        "ops",
    ])?;
    for r in records {
        let levels: Vec<String> = r.levels.iter().map(|l| l.to_string()).collect();
        w.write_record([
            r.round.to_string(),
            r.device.to_string(),
            r.time_ms.to_string(),
            r.energy.to_string(),
            levels.join(";"),
            r.page_faults.to_string(),
            r.page_swaps.to_string(),
            r.ops.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::EntrySpan;

    fn report(spans: &[(u64, u64)]) -> OpReport {
        OpReport {
            ops: 0,
            hooks: vec![],
            touched: spans
                .iter()
                .map(|&(start, len)| EntrySpan { start, len })
                .collect(),
        }
    }

    #[test]
    fn nothing_touched_nothing_traced() {
        assert!(model_access_trace(ModelKind::Ppr, &OpReport::default(), 64).is_empty());
    }

    #[test]
    fn two_blocks_two_pages() {
        let t = model_access_trace(ModelKind::Ridge, &report(&[(0, 128)]), 64);
        assert_eq!(t.len(), 2);
        assert_ne!(t[0], t[1]);
    }

    #[test]
    fn kinds_do_not_share_pages() {
        let r = report(&[(0, 1)]);
        assert_ne!(
            model_access_trace(ModelKind::Ppr, &r, 64),
            model_access_trace(ModelKind::Mnb, &r, 64)
        );
    }

    #[test]
    fn revisits_are_kept() {
        let t = model_access_trace(ModelKind::Mnb, &report(&[(0, 1), (200, 1), (3, 1)]), 64);
        assert_eq!(t.len(), 3);
        assert_eq!(t[0], t[2]);
    }
}
