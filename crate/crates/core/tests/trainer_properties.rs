use certcrf::harness::{generate_synthetic, trace_to_csv, CsvTraceSink, SyntheticSpec};
use certcrf::inference::OracleTier;
use certcrf::trainer::{
    fit, fit_with_sink, primal_objective, CacheStrategy, CertificateStatus, Clock, Tier, TrainerConfig,
};
use proptest::prelude::*;

fn small(seed: u64) -> certcrf::Dataset {
    generate_synthetic(&SyntheticSpec::new(3, 3, 3, 1.0, 4, seed)).unwrap()
}

fn config() -> TrainerConfig {
    TrainerConfig {
        clock: Clock::Frozen,
        ..TrainerConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn bounds_bracket_the_objective(seed in 0u64..1000, c in 0.1..5.0f64) {
        let ds = small(seed);
        let cfg = TrainerConfig { c, ..config() };
        let out = fit(&ds, &cfg).unwrap();
        let cert = &out.certificate;
        let upper = cert.upper_bound.unwrap();
        prop_assert!(cert.lower_bound <= upper + 1e-9);
        let exact = primal_objective(&out.params, &ds, OracleTier::Exact, &cfg).unwrap();
        prop_assert!(cert.lower_bound <= exact.upper.unwrap() + 1e-9);
        prop_assert!(cert.certified);
        prop_assert!(out.trace.max_o_w_decrease() <= 1e-9);
        for row in out.trace.rows.iter().filter(|r| r.tier == Tier::Exact) {
            prop_assert!(row.o_i >= row.o_w - 1e-9);
        }
    }

    #[test]
    fn under_generating_ladder_never_certifies(seed in 0u64..1000) {
        let ds = small(seed);
        let cfg = TrainerConfig { ladder: vec![OracleTier::MoveMaking], ..config() };
        let out = fit(&ds, &cfg).unwrap();
        prop_assert!(!out.certificate.certified);
        prop_assert_eq!(out.certificate.status, CertificateStatus::Uncertified);
        prop_assert!(out.certificate.upper_bound.is_none());
    }
}

#[test]
fn every_strategy_is_monotone_and_certified() {
    let ds = small(11);
    for strategy in [CacheStrategy::None, CacheStrategy::UntilExhausted, CacheStrategy::Dynamic] {
        let out = fit(&ds, &TrainerConfig { cache_strategy: strategy, ..config() }).unwrap();
        assert!(out.certificate.certified, "{strategy}");
        assert!(out.trace.max_o_w_decrease() <= 1e-9, "{strategy}");
        if strategy == CacheStrategy::None {
            assert_eq!(out.stats.cache_constraints, 0);
        }
    }
}

#[test]
fn traces_do_not_depend_on_thread_count() {
    let ds = small(5);
    let cfg = config();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut sink = CsvTraceSink::new(Vec::new()).unwrap();
            let out = fit_with_sink(&ds, &cfg, &mut sink).unwrap();
            (sink.into_inner(), out.params)
        })
    };
    let (a, pa) = run(1);
    let (b, pb) = run(3);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
}

#[test]
fn streamed_trace_matches_returned_trace() {
    let ds = small(2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let mut sink = CsvTraceSink::create(&path).unwrap();
    let out = fit_with_sink(&ds, &config(), &mut sink).unwrap();
    drop(sink);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, trace_to_csv(&out.trace.rows));
    let rows = certcrf::harness::read_trace_csv(&path).unwrap();
    assert!(rows.windows(2).all(|w| w[0].iteration < w[1].iteration));
    assert_eq!(rows, out.trace.rows);
}

#[test]
fn wall_clock_only_changes_the_time_column() {
    let ds = small(4);
    let frozen = fit(&ds, &config()).unwrap();
    let wall = fit(&ds, &TrainerConfig { clock: Clock::Wall, ..config() }).unwrap();
    assert_eq!(frozen.trace.rows.len(), wall.trace.rows.len());
    for (a, b) in frozen.trace.rows.iter().zip(&wall.trace.rows) {
        assert_eq!(a.wall_ms, 0);
        assert_eq!((a.iteration, a.tier, a.o_w, a.o_i), (b.iteration, b.tier, b.o_w, b.o_i));
    }
}
