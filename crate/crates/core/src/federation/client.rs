use crate::config::{ExperimentConfig, LdpMode};
use crate::data::{FoldPlan, LabeledWindow, NormStats, UserProfile};
use crate::error::{Error, Result};
use crate::federation::ldp::apply_ldp_noise;
use crate::model::{local_train, split_update, Strategy, TrainOptions, UpdateRecord};
use crate::nn::{Network, ParamSet};
use crate::seed::{derive_seed, rng_for, Stream};

/// One simulated participant.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub profile: UserProfile,
    pub train: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
    /// Personal dense layers; present only under FedPer.
    pub private: Option<ParamSet>,
    pub seed: u64,
}

impl ClientState {
    pub fn new(profile: UserProfile, train: Vec<LabeledWindow>, test: Vec<LabeledWindow>, run_seed: u64) -> Self {
        let seed = derive_seed(run_seed, Stream::LocalTrain, &[profile.user as u64]);
        ClientState {
            profile,
            train,
            test,
            private: None,
            seed,
        }
    }

    pub fn id(&self) -> u32 {
        self.profile.user
    }
}

/// Builds one client per user for fold `(repetition, fold)` of `plan`.
/// Windows are standardized with statistics pooled over every client's
/// training split; test windows never contribute.
pub fn prepare_clients(
    profiles: &[UserProfile],
    windows: &[Vec<LabeledWindow>],
    plan: &FoldPlan,
    repetition: usize,
    fold: usize,
    run_seed: u64,
) -> Result<Vec<ClientState>> {
    if profiles.len() != windows.len() || plan.users() != windows.len() {
        return Err(Error::Input("profiles, windows and fold plan disagree on user count".into()));
    }
    let splits: Vec<(Vec<LabeledWindow>, Vec<LabeledWindow>)> = windows
        .iter()
        .enumerate()
        .map(|(u, ws)| plan.split(u, repetition, fold, ws))
        .collect();
    let stats = NormStats::from_windows(splits.iter().flat_map(|(train, _)| train))?;
    Ok(profiles
        .iter()
        .zip(splits)
        .map(|(p, (mut train, mut test))| {
            train.iter_mut().chain(test.iter_mut()).for_each(|w| stats.apply(w));
            ClientState::new(p.clone(), train, test, run_seed)
        })
        .collect())
}

/// Full parameter set in network order from shared and optional private layers.
pub fn assemble(net: &Network, shared: &ParamSet, private: Option<&ParamSet>) -> Result<ParamSet> {
    let mut layers = Vec::with_capacity(net.layers().len());
    for spec in net.layers() {
        let found = shared
            .layer(&spec.name)
            .or_else(|| private.and_then(|p| p.layer(&spec.name)))
            .ok_or_else(|| Error::Protocol(format!("no parameters for layer {}", spec.name)))?;
        layers.push(found.clone());
    }
    let params = ParamSet::new(layers);
    net.check_params(&params).map_err(|e| Error::Protocol(e.to_string()))?;
    Ok(params)
}

/// One client's part of a round: adopt the broadcast shared layers, train
/// locally, and return the shared layers as the transmitted record.
pub fn client_round(
    net: &Network,
    global: &ParamSet,
    client: &mut ClientState,
    cfg: &ExperimentConfig,
    round: u32,
) -> Result<UpdateRecord> {
    client_round_epochs(net, global, client, cfg, round, cfg.training.local_epochs, DataSplit::Train)
}

/// Which of a client's windows a round trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DataSplit {
    Train,
    Test,
}

pub(crate) fn client_round_epochs(
    net: &Network,
    global: &ParamSet,
    client: &mut ClientState,
    cfg: &ExperimentConfig,
    round: u32,
    epochs: usize,
    split: DataSplit,
) -> Result<UpdateRecord> {
    let private = match (cfg.strategy, &client.private) {
        (Strategy::Fedper, Some(p)) => Some(p),
        (Strategy::Fedper, None) => {
            return Err(Error::Protocol(format!("fedper client {} has no private layers", client.id())))
        }
        (_, _) => None,
    };
    let start = assemble(net, global, private)?;
    let t = &cfg.training;
    let ldp = cfg.strategy == Strategy::Ldp;
    let opts = TrainOptions {
        epochs,
        eta: t.eta,
        batch_size: t.batch_size,
        step_noise_sigma2: if ldp && t.ldp_mode == LdpMode::PerStep { t.ldp_sigma2 } else { 0.0 },
    };
    let data = match split {
        DataSplit::Train => &client.train,
        DataSplit::Test => &client.test,
    };
    let mut rng = rng_for(client.seed, Stream::LocalTrain, &[round as u64]);
    let trained = local_train(net, &start, data, &opts, &mut rng)?;
    let n_samples = data.len();
    if cfg.strategy == Strategy::Fedper {
        client.private = Some(trained.private());
    }
    let mut record = split_update(&start, &trained)?.with_origin(round, client.id(), n_samples);
    if ldp && t.ldp_mode == LdpMode::Update {
        let seed = derive_seed(client.seed, Stream::LdpNoise, &[round as u64]);
        *record.params_mut() = apply_ldp_noise(record.params(), t.ldp_sigma2, seed)?;
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::data::{make_folds, synth_generate};
    use crate::model::init_model;
    use crate::data::SynthConfig;

    fn setup(strategy: Strategy) -> (Network, ExperimentConfig, Vec<ClientState>, ParamSet) {
        let run = RunConfig::smoke();
        let cfg = run.experiment(strategy);
        let synth = SynthConfig {
            n_users: 4,
            ..match &run.data {
                crate::config::DataConfig::Synthetic(s) => s.clone(),
                _ => unreachable!(),
            }
        };
        let ds = synth_generate(&synth).unwrap();
        let windows = ds.windows();
        let plan = make_folds(&windows, 1, 5, 0).unwrap();
        let mut clients = prepare_clients(&ds.profiles, &windows, &plan, 0, 0, 0).unwrap();
        let init = init_model(&cfg.architecture, strategy, 0).unwrap();
        if strategy == Strategy::Fedper {
            clients.iter_mut().for_each(|c| c.private = Some(init.private()));
        }
        (cfg.architecture.network().unwrap(), cfg, clients, init)
    }

    #[test]
    fn zero_learning_rate_returns_broadcast() {
        for s in [Strategy::Vanilla, Strategy::Fedper] {
            let (net, mut cfg, mut clients, init) = setup(s);
            cfg.training.eta = 0.0;
            let global = init.shared();
            let r = client_round(&net, &global, &mut clients[0], &cfg, 1).unwrap();
            assert_eq!(r.params(), &global);
        }
        let (net, mut cfg, mut clients, init) = setup(Strategy::Ldp);
        cfg.training.eta = 0.0;
        let r = client_round(&net, &init.shared(), &mut clients[0], &cfg, 1).unwrap();
        let seed = derive_seed(clients[0].seed, Stream::LdpNoise, &[1]);
        assert_eq!(r.params(), &apply_ldp_noise(&init.shared(), 0.01, seed).unwrap());
    }

    #[test]
    fn fedper_private_layers_diverge_between_clients() {
        let (net, cfg, mut clients, init) = setup(Strategy::Fedper);
        let global = init.shared();
        for c in clients.iter_mut() {
            let r = client_round(&net, &global, c, &cfg, 1).unwrap();
            assert_eq!(r.params().names(), vec!["conv1", "conv2"]);
        }
        for i in 0..clients.len() {
            for j in i + 1..clients.len() {
                assert_ne!(clients[i].private, clients[j].private);
            }
        }
    }

    #[test]
    fn vanilla_equals_fedper_without_private_layers() {
        // With every layer tagged shared, the FedPer code path degenerates
        // to the vanilla one.
        let (net, cfg, mut clients, init) = setup(Strategy::Vanilla);
        let mut c2 = clients[1].clone();
        let a = client_round(&net, &init.shared(), &mut clients[1], &cfg, 2).unwrap();
        let fed_cfg = ExperimentConfig {
            strategy: Strategy::Fedper,
            ..cfg.clone()
        };
        c2.private = Some(ParamSet::new(Vec::new()));
        let b = client_round(&net, &init.shared(), &mut c2, &fed_cfg, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_is_protocol_error() {
        let (net, cfg, mut clients, init) = setup(Strategy::Fedper);
        let wrong = init.private().with_partitions(|_, _| crate::nn::Partition::Shared);
        assert!(matches!(
            client_round(&net, &wrong, &mut clients[0], &cfg, 1),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn normalization_uses_training_windows_only() {
        let run = RunConfig::smoke();
        let synth = match &run.data {
            crate::config::DataConfig::Synthetic(s) => SynthConfig { n_users: 4, ..s.clone() },
            _ => unreachable!(),
        };
        let ds = synth_generate(&synth).unwrap();
        let windows = ds.windows();
        let plan = make_folds(&windows, 1, 5, 0).unwrap();
        let clients = prepare_clients(&ds.profiles, &windows, &plan, 0, 2, 0).unwrap();
        let stats = NormStats::from_windows(clients.iter().flat_map(|c| &c.train)).unwrap();
        for c in 0..6 {
            assert!(stats.mean[c].abs() < 1e-9);
            assert!((stats.std[c] - 1.0).abs() < 1e-9);
        }
        // Perturbing test windows leaves the training side untouched.
        let mut altered = windows.clone();
        for (u, ws) in altered.iter_mut().enumerate() {
            for i in plan.test_indices(u, 0, 2) {
                ws[i].signal.data_mut().iter_mut().for_each(|v| *v += 100.0);
            }
        }
        let again = prepare_clients(&ds.profiles, &altered, &plan, 0, 2, 0).unwrap();
        for (a, b) in clients.iter().zip(&again) {
            assert_eq!(a.train, b.train);
        }
    }
}
