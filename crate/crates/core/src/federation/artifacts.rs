//! On-disk layout of a training run.
//!
//! ```text
//! <dir>/round_log.csv
//! <dir>/updates/round_0001/client_0007.txt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::DumpUpdates;
use crate::error::{Error, Result};
use crate::federation::run::{EarlyStop, RoundEntry, RoundLog, RunObserver};
use crate::model::{Strategy, UpdateRecord};
use crate::nn::ParamSet;

pub const ROUND_LOG_FILE: &str = "round_log.csv";
pub const UPDATES_DIR: &str = "updates";

pub fn update_path(dir: &Path, round: u32, client: u32) -> PathBuf {
    dir.join(UPDATES_DIR)
        .join(format!("round_{round:04}"))
        .join(format!("client_{client:04}.txt"))
}

pub fn round_log_csv(log: &RoundLog) -> String {
    let mut out = String::from("round,mean_test_loss,mean_test_accuracy");
    for c in &log.clients {
        out.push_str(&format!(",accuracy_client_{c}"));
    }
    for c in &log.clients {
        out.push_str(&format!(",loss_client_{c}"));
    }
    out.push_str(",early_stop\n");
    for e in &log.entries {
        out.push_str(&format!("{},{},{}", e.round, e.mean_test_loss, e.mean_test_accuracy));
        for v in e.client_accuracy.iter().chain(&e.client_loss) {
            out.push_str(&format!(",{v}"));
        }
        let stop = match e.early_stop {
            EarlyStop::Continue => "continue",
            EarlyStop::Stop => "stop",
            EarlyStop::Diverged => "diverged",
        };
        out.push_str(&format!(",{stop}\n"));
    }
    out
}

pub fn write_round_log(path: &Path, log: &RoundLog) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, round_log_csv(log)).map_err(|e| Error::io(path, e))
}

pub fn read_round_log(path: &Path, strategy: Strategy) -> Result<RoundLog> {
    let bad = |msg: String| Error::format(path, msg);
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let clients: Vec<u32> = headers
        .iter()
        .filter_map(|h| h.strip_prefix("accuracy_client_"))
        .map(|id| id.parse().map_err(|_| bad(format!("bad client column {id}"))))
        .collect::<Result<_>>()?;
    let n = clients.len();
    if headers.len() != 4 + 2 * n {
        return Err(bad(format!("expected {} columns, found {}", 4 + 2 * n, headers.len())));
    }
    let mut entries = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| bad(format!("row {}: cannot parse {:?}", line + 2, &row[i])))
        };
        let early_stop = match &row[3 + 2 * n] {
            "stop" => EarlyStop::Stop,
            "continue" => EarlyStop::Continue,
            "diverged" => EarlyStop::Diverged,
            other => return Err(bad(format!("row {}: unknown early-stop state {other:?}", line + 2))),
        };
        entries.push(RoundEntry {
            round: row[0].parse().map_err(|_| bad(format!("row {}: bad round", line + 2)))?,
            mean_test_loss: num(1)?,
            mean_test_accuracy: num(2)?,
            client_accuracy: (0..n).map(|i| num(3 + i)).collect::<Result<_>>()?,
            client_loss: (0..n).map(|i| num(3 + n + i)).collect::<Result<_>>()?,
            early_stop,
        });
    }
    Ok(RoundLog {
        strategy,
        clients,
        entries,
    })
}

/// Observer writing update records below `dir` according to `policy`.
/// With [`DumpUpdates::FinalRound`] the latest round is buffered and only
/// written by [`UpdateDumper::finish`].
#[derive(Debug)]
pub struct UpdateDumper {
    dir: PathBuf,
    policy: DumpUpdates,
    pending: Vec<UpdateRecord>,
    written: Vec<PathBuf>,
}

impl UpdateDumper {
    pub fn new(dir: impl Into<PathBuf>, policy: DumpUpdates) -> Self {
        UpdateDumper {
            dir: dir.into(),
            policy,
            pending: Vec::new(),
            written: Vec::new(),
        }
    }

    fn write(&mut self, record: &UpdateRecord) -> Result<()> {
        let path = update_path(&self.dir, record.round(), record.client());
        let parent = path.parent().expect("update path has a parent");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        fs::write(&path, record.encode()).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// Flushes buffered records and returns every file written.
    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        for r in std::mem::take(&mut self.pending) {
            self.write(&r)?;
        }
        Ok(self.written)
    }
}

impl RunObserver for UpdateDumper {
    fn on_update(&mut self, record: &UpdateRecord) -> Result<()> {
        match self.policy {
            DumpUpdates::All => self.write(record),
            DumpUpdates::FinalRound => {
                if self.pending.first().is_some_and(|p| p.round() != record.round()) {
                    self.pending.clear();
                }
                self.pending.push(record.clone());
                Ok(())
            }
            DumpUpdates::None => Ok(()),
        }
    }

    fn on_aggregate(&mut self, _round: u32, _global: &ParamSet) -> Result<()> {
        Ok(())
    }
}

/// Reads back every dumped update below `dir`, in round then client order.
pub fn read_updates(dir: &Path) -> Result<Vec<UpdateRecord>> {
    let root = dir.join(UPDATES_DIR);
    let mut files = Vec::new();
    for round in sorted_entries(&root)? {
        files.extend(sorted_entries(&round)?);
    }
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
            UpdateRecord::decode(&text).map_err(|e| Error::format(f, e.to_string()))
        })
        .collect()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> RoundLog {
        RoundLog {
            strategy: Strategy::Fedper,
            clients: vec![3, 8],
            entries: (1..=3)
                .map(|r| RoundEntry {
                    round: r,
                    mean_test_loss: 1.0 / r as f64,
                    mean_test_accuracy: 0.1 * r as f64,
                    client_accuracy: vec![0.1 * r as f64, 0.3],
                    client_loss: vec![std::f64::consts::PI, 2.0 / 3.0],
                    early_stop: if r == 3 { EarlyStop::Stop } else { EarlyStop::Continue },
                })
                .collect(),
        }
    }

    #[test]
    fn round_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ROUND_LOG_FILE);
        write_round_log(&path, &log()).unwrap();
        assert_eq!(read_round_log(&path, Strategy::Fedper).unwrap(), log());
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("round,mean_test_loss,mean_test_accuracy,accuracy_client_3,accuracy_client_8"));
    }

    #[test]
    fn truncated_row_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ROUND_LOG_FILE);
        let text = round_log_csv(&log());
        fs::write(&path, text.replace(",stop\n", "\n")).unwrap();
        assert!(matches!(read_round_log(&path, Strategy::Fedper), Err(Error::Format { .. })));
    }
}
