//! End-to-end exercise of every endpoint over real HTTP.

use mdfocus_api::{CalibrateRequest, EDetectPreset, EDetectRequest};
use mdfocus_client::{Client, ClientError};
use mdfocus_core::calibrate::{Provenance, ThresholdRule};
use mdfocus_core::config::{EngineKind, ModelConfig, PrechangeConfig, RunConfig};
use mdfocus_core::detector::StatKind;
use mdfocus_core::simlab::ExperimentSpec;

fn spawn_service() -> Client {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("runtime");
        rt.block_on(async move {
            listener.set_nonblocking(true).unwrap();
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            mdfocus_service::serve(listener).await.unwrap();
        });
    });
    let client = Client::new(format!("http://{addr}"));
    for _ in 0..100 {
        if client.health().is_ok() {
            return client;
        }
        std::thread::sleep(std::time::Duration::from_millis(20));
    }
    panic!("service did not come up");
}

fn base_config() -> RunConfig {
    RunConfig {
        model: ModelConfig::gaussian(1),
        engine: EngineKind::Exact,
        engine_params: Default::default(),
        statistics: vec![StatKind::Dense],
        prechange: PrechangeConfig::Known { natural: vec![0.0] },
        threshold_plan: None,
        input: None,
        seed: None,
    }
}

#[test]
fn session_lifecycle_and_detection() {
    let client = spawn_service();

    // Detection run with a fixed threshold: two unit observations with a
    // known zero mean reach value 2 at n=2.
    let mut config = base_config();
    config.threshold_plan = Some(mdfocus_core::calibrate::ThresholdPlan::fixed(
        vec![(StatKind::Dense, 2.0)],
        Provenance::User,
    ));
    let created = client.create_session(&config, true).unwrap();
    assert_eq!(created.p, 1);
    assert_eq!(created.natural_dim, 1);

    let response = client
        .observe(created.session_id, vec![vec![1.0], vec![1.0], vec![5.0]])
        .unwrap();
    assert_eq!(response.consumed, 2, "rows after the stop must not be consumed");
    let stop = response.stop.expect("stopped");
    assert!(stop.stopped);
    assert_eq!(stop.n, 2);
    assert_eq!(stop.stat.as_deref(), Some("dense"));
    assert_eq!(stop.tau_hat, Some(0));
    assert!((stop.value.unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(response.reports.len(), 2);
    assert_eq!(response.reports[0].n, 1);

    let status = client.session_status(created.session_id).unwrap();
    assert_eq!(status.n, 2);
    assert!(status.stop.is_some());

    client.delete_session(created.session_id).unwrap();
    match client.session_status(created.session_id) {
        Err(ClientError::Api { status: 404, .. }) => {}
        other => panic!("expected 404, got {other:?}"),
    }
}

#[test]
fn malformed_rows_are_rejected_with_the_row_index() {
    let client = spawn_service();
    let mut config = base_config();
    config.model = ModelConfig {
        family: mdfocus_core::config::FamilyTag::ParetoI,
        p: 1,
        trials: None,
        y_min: Some(1.0),
        var_floor: None,
        coords: None,
    };
    config.prechange = PrechangeConfig::Unknown;
    let created = client.create_session(&config, false).unwrap();
    let err = client
        .observe(created.session_id, vec![vec![2.0], vec![-1.0]])
        .unwrap_err();
    match err {
        ClientError::Api { status, row, .. } => {
            assert_eq!(status, 422);
            assert_eq!(row, Some(1));
        }
        other => panic!("expected api error, got {other:?}"),
    }
    // The good row before the bad one was consumed.
    let status = client.session_status(created.session_id).unwrap();
    assert_eq!(status.n, 1);
}

#[test]
fn bad_config_is_a_400() {
    let client = spawn_service();
    let mut config = base_config();
    config.statistics = vec![StatKind::Ranked { s: 7 }];
    match client.create_session(&config, false) {
        Err(e) if e.is_config_error() => {}
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn calibrate_modes() {
    let client = spawn_service();

    let plan = client
        .calibrate(&CalibrateRequest::AnalyticArl {
            statistics: vec![StatKind::Dense, StatKind::Ranked { s: 1 }],
            p: 3,
            gamma: 5000.0,
            m: None,
        })
        .unwrap();
    assert_eq!(plan.entries.len(), 2);
    assert!(matches!(plan.provenance, Provenance::Arl { .. }));
    let dense_c = match plan.rule_for(&StatKind::Dense).unwrap() {
        ThresholdRule::Fixed { c } => *c,
        other => panic!("expected fixed, got {other:?}"),
    };
    let direct = mdfocus_core::calibrate::arl_threshold(3, 3, 5000.0, 2);
    assert!((dense_c - direct).abs() < 1e-12);

    let plan = client
        .calibrate(&CalibrateRequest::AnalyticFa {
            statistics: vec![StatKind::Dense, StatKind::Thresholded { a: 1.0 }],
            p: 2,
            alpha: 0.2,
        })
        .unwrap();
    assert!(plan
        .entries
        .iter()
        .all(|e| matches!(e.rule, ThresholdRule::TimeVarying { .. })));

    // sum_of_max has no analytic bound.
    let err = client
        .calibrate(&CalibrateRequest::AnalyticArl {
            statistics: vec![StatKind::SumOfMax],
            p: 2,
            gamma: 100.0,
            m: None,
        })
        .unwrap_err();
    assert!(err.is_config_error());

    // Monte-Carlo: deterministic in the seed.
    let mc = |seed| {
        client
            .calibrate(&CalibrateRequest::MonteCarlo {
                model: ModelConfig::gaussian(1),
                statistics: vec![StatKind::Dense],
                prechange: PrechangeConfig::Known { natural: vec![0.0] },
                gamma: 40.0,
                replicates: 10,
                seed,
                stream_len: Some(80),
                quantile: None,
                workers: Some(2),
            })
            .unwrap()
    };
    assert_eq!(mc(9), mc(9));
}

#[test]
fn oracle_and_experiments_and_edetect() {
    let client = spawn_service();

    let oracle = client.oracle(vec![1], vec![1024]).unwrap();
    assert_eq!(oracle.rows.len(), 1);
    assert!(oracle.rows[0].expected_faces > 0.0);
    assert!(oracle.rows[0].expected_vertices > 0.0);

    let output = client
        .run_experiment(
            &ExperimentSpec::Hullcount {
                p: vec![1],
                n: vec![128],
                replicates: 10,
                seed: 5,
            },
            Some(2),
        )
        .unwrap();
    assert_eq!(output.records.len(), 10);
    assert!(!output.summary.is_empty());

    let scores: Vec<f64> = (0..60).map(|i| if i % 3 == 0 { -3.0 } else { 2.0 }).collect();
    let response = client
        .edetect(&EDetectRequest {
            preset: EDetectPreset::WinningRate,
            scores,
            from: None,
        })
        .unwrap();
    assert_eq!(response.rows.last().unwrap().n, 60);
    for row in &response.rows {
        assert_eq!(row.hull_count, row.candidates.len());
    }
}
