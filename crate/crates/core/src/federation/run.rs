use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::federation::aggregate::aggregate;
use crate::federation::client::{assemble, client_round, ClientState};
use crate::model::{evaluate, init_model, Evaluation, Strategy, UpdateRecord};
use crate::nn::{Network, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStop {
    Continue,
    Stop,
    /// The next round overflowed; the run ended here.
    Diverged,
}

/// Stops once the first minimum of `history` lies more than `patience`
/// entries behind the latest one.
pub fn check_early_stop(history: &[f64], patience: usize) -> EarlyStop {
    let Some(last) = history.len().checked_sub(1) else {
        return EarlyStop::Continue;
    };
    let mut best = 0;
    for (i, &v) in history.iter().enumerate() {
        if v < history[best] {
            best = i;
        }
    }
    if last - best > patience {
        EarlyStop::Stop
    } else {
        EarlyStop::Continue
    }
}

/// Metrics after one aggregation; rounds count from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundEntry {
    pub round: u32,
    pub mean_test_loss: f64,
    pub mean_test_accuracy: f64,
    /// Ordered like the clients passed to the run.
    pub client_accuracy: Vec<f64>,
    pub client_loss: Vec<f64>,
    pub early_stop: EarlyStop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub strategy: Strategy,
    pub clients: Vec<u32>,
    pub entries: Vec<RoundEntry>,
}

impl RoundLog {
    pub fn stopped_early(&self) -> bool {
        self.entries.last().is_some_and(|e| e.early_stop == EarlyStop::Stop)
    }

    pub fn diverged(&self) -> bool {
        self.entries.last().is_some_and(|e| e.early_stop == EarlyStop::Diverged)
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mean_test_accuracy).collect()
    }
}

/// Receives everything the server sees, as it happens.
pub trait RunObserver {
    fn on_update(&mut self, _record: &UpdateRecord) -> Result<()> {
        Ok(())
    }

    fn on_aggregate(&mut self, _round: u32, _global: &ParamSet) -> Result<()> {
        Ok(())
    }
}

/// Keeps every update in memory.
#[derive(Debug, Default)]
struct Collect(Vec<UpdateRecord>);

impl RunObserver for Collect {
    fn on_update(&mut self, record: &UpdateRecord) -> Result<()> {
        self.0.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub log: RoundLog,
    /// Every record received, in round then client order. Empty when the
    /// run was driven through [`run_training_with`].
    pub trace: Vec<UpdateRecord>,
    pub final_global: ParamSet,
    pub clients: Vec<ClientState>,
}

/// Runs federated training and keeps the full server observation trace.
pub fn run_training(clients: Vec<ClientState>, cfg: &ExperimentConfig) -> Result<TrainingOutcome> {
    let mut collect = Collect::default();
    let mut out = run_training_with(clients, cfg, &mut collect)?;
    out.trace = collect.0;
    Ok(out)
}

/// Runs federated training, streaming updates to `observer` instead of
/// holding them.
pub fn run_training_with(
    mut clients: Vec<ClientState>,
    cfg: &ExperimentConfig,
    observer: &mut dyn RunObserver,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if clients.is_empty() {
        return Err(Error::Input("training needs at least one client".into()));
    }
    let net = cfg.architecture.network()?;
    let init = init_model(&cfg.architecture, cfg.strategy, cfg.seed)?;
    for c in clients.iter_mut() {
        c.private = (cfg.strategy == Strategy::Fedper).then(|| init.private());
    }
    let mut global = init.shared();
    let mut log = RoundLog {
        strategy: cfg.strategy,
        clients: clients.iter().map(ClientState::id).collect(),
        entries: Vec::new(),
    };
    let mut losses = Vec::new();
    for round in 1..=cfg.training.max_rounds as u32 {
        match train_round(&net, &mut clients, &global, cfg, round, observer) {
            Ok((next, evals)) => {
                global = next;
                let n = evals.len() as f64;
                let mean_test_loss = evals.iter().map(|e| e.mean_loss).sum::<f64>() / n;
                let mean_test_accuracy = evals.iter().map(|e| e.accuracy).sum::<f64>() / n;
                losses.push(mean_test_loss);
                let early_stop = check_early_stop(&losses, cfg.training.patience);
                log::debug!(
                    "{} round {round}: loss {mean_test_loss:.4} accuracy {mean_test_accuracy:.4}",
                    cfg.strategy.name()
                );
                log.entries.push(RoundEntry {
                    round,
                    mean_test_loss,
                    mean_test_accuracy,
                    client_accuracy: evals.iter().map(|e| e.accuracy).collect(),
                    client_loss: evals.iter().map(|e| e.mean_loss).collect(),
                    early_stop,
                });
                if early_stop == EarlyStop::Stop {
                    break;
                }
            }
            Err(Error::Numeric(msg)) if !log.entries.is_empty() => {
                log::warn!("{} diverged in round {round}: {msg}", cfg.strategy.name());
                log.entries.last_mut().expect("nonempty").early_stop = EarlyStop::Diverged;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainingOutcome {
        log,
        trace: Vec::new(),
        final_global: global,
        clients,
    })
}

/// One broadcast/train/aggregate/evaluate cycle.
fn train_round(
    net: &Network,
    clients: &mut [ClientState],
    global: &ParamSet,
    cfg: &ExperimentConfig,
    round: u32,
    observer: &mut dyn RunObserver,
) -> Result<(ParamSet, Vec<Evaluation>)> {
    let records = cfg
        .execution
        .map_mut(clients, |_, c| client_round(net, global, c, cfg, round))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    for r in &records {
        observer.on_update(r)?;
    }
    let next = aggregate(&records)?;
    observer.on_aggregate(round, &next)?;
    let evals = cfg
        .execution
        .map(clients, |_, c| {
            let params = assemble(net, &next, c.private.as_ref())?;
            evaluate(net, &params, &c.test)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((next, evals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strictly_decreasing_continues() {
        let h: Vec<f64> = (0..50).map(|i| 10.0 - i as f64 * 0.1).collect();
        assert_eq!(check_early_stop(&h, 3), EarlyStop::Continue);
    }

    #[test]
    fn boundary_enumeration() {
        let patience = 4;
        for r in 0..3 {
            let mut h = vec![5.0; r];
            h.push(1.0);
            h.extend(std::iter::repeat_n(2.0, patience));
            assert_eq!(check_early_stop(&h, patience), EarlyStop::Continue);
            h.push(2.0);
            assert_eq!(check_early_stop(&h, patience), EarlyStop::Stop);
        }
    }

    #[test]
    fn flat_history_stops_one_round_after_patience() {
        // The first value of a flat history is its minimum, so the boundary
        // rule needs patience + 2 entries.
        assert_eq!(check_early_stop(&[1.0; 4], 3), EarlyStop::Continue);
        assert_eq!(check_early_stop(&[1.0; 5], 3), EarlyStop::Stop);
    }

    #[test]
    fn later_ties_do_not_reset_the_clock() {
        assert_eq!(check_early_stop(&[1.0, 2.0, 1.0, 1.0], 2), EarlyStop::Stop);
    }
}
