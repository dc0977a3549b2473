use crate::error::{FedMooError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    /// Compressed stochastic Jacobian.
    JacobianUp,
    /// Aggregated local update `Δ_i`.
    DeltaUp,
    /// The `M` per-task updates of FSMGDA.
    TaskDeltasUp,
    /// Local losses for the preference solver.
    LossesUp,
    /// `M x M` correction terms of the two-way Gram estimate.
    GramSidechannel,
    ModelDown,
    WeightsDown,
    /// Compressed aggregate Jacobian of the two-way option.
    JacobianDown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Up,
    Down,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::JacobianUp,
        MessageKind::DeltaUp,
        MessageKind::TaskDeltasUp,
        MessageKind::LossesUp,
        MessageKind::GramSidechannel,
        MessageKind::ModelDown,
        MessageKind::WeightsDown,
        MessageKind::JacobianDown,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::JacobianUp => "jacobian-up",
            MessageKind::DeltaUp => "delta-up",
            MessageKind::TaskDeltasUp => "task-deltas-up",
            MessageKind::LossesUp => "losses-up",
            MessageKind::GramSidechannel => "gram-sidechannel",
            MessageKind::ModelDown => "model-down",
            MessageKind::WeightsDown => "weights-down",
            MessageKind::JacobianDown => "jacobian-down",
        }
    }

    pub fn direction(&self) -> Direction {
        match self {
            MessageKind::JacobianUp
            | MessageKind::DeltaUp
            | MessageKind::TaskDeltasUp
            | MessageKind::LossesUp
            | MessageKind::GramSidechannel => Direction::Up,
            MessageKind::ModelDown | MessageKind::WeightsDown | MessageKind::JacobianDown => Direction::Down,
        }
    }

    /// Messages of size `M` or `M²`, reported apart from the `O(d)` payload.
    pub fn is_sidechannel(&self) -> bool {
        matches!(
            self,
            MessageKind::LossesUp | MessageKind::GramSidechannel | MessageKind::WeightsDown
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: usize,
    pub client: usize,
    pub kind: MessageKind,
    pub floats: u64,
}

/// Itemized record of every simulated transfer, in float entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommLedger {
    entries: Vec<LedgerEntry>,
    totals: BTreeMap<MessageKind, u64>,
}

/// Payload and side-channel floats of one round (or of the whole run).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub upload: u64,
    pub download: u64,
    pub sidechannel: u64,
}

impl TransferSummary {
    fn add(&mut self, kind: MessageKind, floats: u64) {
        if kind.is_sidechannel() {
            self.sidechannel += floats;
        } else {
            match kind.direction() {
                Direction::Up => self.upload += floats,
                Direction::Down => self.download += floats,
            }
        }
    }
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, round: usize, client: usize, kind: MessageKind, floats: u64) {
        self.entries.push(LedgerEntry { round, client, kind, floats });
        *self.totals.entry(kind).or_insert(0) += floats;
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total(&self, kind: MessageKind) -> u64 {
        self.totals.get(&kind).copied().unwrap_or(0)
    }

    pub fn totals(&self) -> TransferSummary {
        let mut s = TransferSummary::default();
        for (kind, floats) in &self.totals {
            s.add(*kind, *floats);
        }
        s
    }

    pub fn round_entries(&self, round: usize) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(move |e| e.round == round)
    }

    pub fn round_summary(&self, round: usize) -> TransferSummary {
        let mut s = TransferSummary::default();
        for e in self.round_entries(round) {
            s.add(e.kind, e.floats);
        }
        s
    }

    /// Payload floats uploaded by `client` in `round`, side channels excluded.
    pub fn client_upload(&self, round: usize, client: usize) -> u64 {
        self.round_entries(round)
            .filter(|e| e.client == client && e.kind.direction() == Direction::Up && !e.kind.is_sidechannel())
            .map(|e| e.floats)
            .sum()
    }

    pub fn client_download(&self, round: usize, client: usize) -> u64 {
        self.round_entries(round)
            .filter(|e| e.client == client && e.kind.direction() == Direction::Down && !e.kind.is_sidechannel())
            .map(|e| e.floats)
            .sum()
    }

    /// Clients that appear in `round`, sorted.
    pub fn round_clients(&self, round: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.round_entries(round).map(|e| e.client).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| FedMooError::Io(e.to_string());
        w.write_record(["round", "client", "kind", "direction", "floats"]).map_err(io)?;
        for e in &self.entries {
            let dir = match e.kind.direction() {
                Direction::Up => "up",
                Direction::Down => "down",
            };
            w.write_record([
                e.round.to_string(),
                e.client.to_string(),
                e.kind.name().to_string(),
                dir.to_string(),
                e.floats.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}
