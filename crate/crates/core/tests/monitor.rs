use exid_fingerprint::classify::{auto_grid, threshold_sweep, train, FingerprintModel, Hyperparams, TrainingSet};
use exid_fingerprint::config::ExperimentConfig;
use exid_fingerprint::dataset::{
    extract_all, fleet_pairing, observe, simulate_aliens, simulate_honest_stream, simulate_intrusion,
    simulate_known, simulate_known_holdout, simulate_masquerade, Fleet, Observation,
};
use exid_fingerprint::frame::{DataFrame, Exid};
use exid_fingerprint::monitor::{process, Monitor, MonitorLog, PairingTable, Status};
use exid_fingerprint::Error;

struct Setup {
    cfg: ExperimentConfig,
    fleet: Fleet,
    exid: Exid,
    model: FingerprintModel,
    table: PairingTable,
}

fn rows(cfg: &ExperimentConfig, obs: &[Observation]) -> Vec<Vec<f64>> {
    extract_all(obs, cfg.rolloff)
        .unwrap()
        .into_iter()
        .map(|(f, _)| f.to_array().to_vec())
        .collect()
}

fn setup() -> Setup {
    let cfg = ExperimentConfig {
        profiles: 4,
        signals_per_profile: 60,
        folds: 5,
        alien_signals: 60,
        known_test_signals: 30,
        seed: 5,
        classifier: Hyperparams::rbf_svm(),
        ..ExperimentConfig::default()
    };
    let fleet = Fleet::from_config(&cfg).unwrap();
    let exid = cfg.exids().unwrap()[0];
    let known = simulate_known(&fleet, exid, &cfg).unwrap();
    let data = TrainingSet::from_labeled(&extract_all(&known, cfg.rolloff).unwrap()).unwrap();
    let model = train(&data, &cfg.classifier, cfg.seed).unwrap();
    let held = rows(&cfg, &simulate_known_holdout(&fleet, exid, &cfg).unwrap());
    let aliens = rows(&cfg, &simulate_aliens(&fleet, exid, &cfg).unwrap());
    let grid = auto_grid(&model, &held, &aliens).unwrap();
    let sweep = threshold_sweep(&model, &held, &aliens, &grid).unwrap();
    let model = model.with_threshold(Some(sweep.eer_threshold));
    let table = fleet_pairing(&fleet, exid).unwrap();
    Setup {
        cfg,
        fleet,
        exid,
        model,
        table,
    }
}

fn run(s: &Setup, obs: &[Observation]) -> MonitorLog {
    let mut m = Monitor::new(&s.model, &s.table, s.cfg.rolloff, s.cfg.escalation_k).unwrap();
    for o in obs {
        m.observe(&o.frame, &o.waveform).unwrap();
    }
    m.into_log()
}

#[test]
fn scenarios() {
    let s = setup();

    let honest = run(&s, &simulate_honest_stream(&s.fleet, s.exid, &s.cfg, 200).unwrap());
    assert!(honest.ok_rate() >= 0.9, "honest OK rate {}", honest.ok_rate());
    assert!(honest.alarms.is_empty());

    let masquerade = run(&s, &simulate_masquerade(&s.fleet, s.exid, &s.cfg, 2, 0, 10).unwrap());
    assert!(masquerade.count(Status::Type2Mismatch) >= 8);
    assert!(!masquerade.alarms.is_empty());
    assert!(masquerade.verdicts.iter().all(|v| v.frame_id == Fleet::frame_for(0, s.exid).unwrap().id.raw()));

    let intrusion = run(&s, &simulate_intrusion(&s.fleet, s.exid, &s.cfg, 1, 3, 10).unwrap());
    assert!(intrusion.count(Status::Type1Alien) >= 8);
    assert!(intrusion.alarms.iter().any(|a| a.status == Status::Type1Alien));
    assert!(intrusion.verdicts.iter().any(|v| v.predicted_label() == "UNKNOWN"));

    // Right device, right identifier, command not in its allowed set.
    let honest_frame = Fleet::frame_for(1, s.exid).unwrap();
    let forbidden = DataFrame::new(honest_frame.id, vec![0x99, 0x00]).unwrap();
    let statuses: Vec<Status> = (0..10)
        .map(|k| {
            let w = observe(&s.fleet.known[1], &forbidden, &s.cfg, 900 + k).unwrap();
            process(&forbidden, &w, &s.model, &s.table, s.cfg.rolloff).unwrap().status
        })
        .collect();
    assert!(statuses.iter().filter(|&&st| st == Status::Type2ForbiddenCommand).count() >= 8, "{statuses:?}");

    let stranger = DataFrame::new(Fleet::frame_for(40, s.exid).unwrap().id, vec![0x10]).unwrap();
    let w = observe(&s.fleet.known[0], &stranger, &s.cfg, 1).unwrap();
    assert!(matches!(
        process(&stranger, &w, &s.model, &s.table, s.cfg.rolloff),
        Err(Error::UnknownIdentifier(_))
    ));
}

#[test]
fn streams_replay_identically() {
    let s = setup();
    let a = run(&s, &simulate_masquerade(&s.fleet, s.exid, &s.cfg, 1, 2, 10).unwrap());
    let b = run(&s, &simulate_masquerade(&s.fleet, s.exid, &s.cfg, 1, 2, 10).unwrap());
    assert_eq!(a.format(), b.format());
}

#[test]
fn pairing_file_round_trips() {
    let s = setup();
    let text = s.table.format();
    assert_eq!(PairingTable::parse(&text).unwrap(), s.table);
    assert!(PairingTable::parse("identifier,class,commands\nzz,ecu01,*\n").is_err());
}
