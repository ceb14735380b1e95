use neurolin::fnn::{Architecture, InitScale, Network};
use neurolin::grid::{all_indices, MultiIndex};
use neurolin::problems::{build_pbn, build_poisson, pbn_defaults};
use neurolin::solver::{
    lr_schedule, solution_index_function, train, train_from, HistoryRecord, NoObserver,
    OptimizerKind, TrainConfig, TrainHistory, TrainObserver,
};
use neurolin::Error;

fn config(max_iters: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        max_iters,
        lr_start: 1e-3,
        lr_end: 1e-5,
        seed: 5,
        eval_every: 10,
        optimizer: OptimizerKind::AdaptiveMoment,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_parameters() {
    let inst = build_poisson(2, 6).unwrap();
    let arch = Architecture::new(3, 12, 2).unwrap();
    let a = train(&inst, arch, &config(50)).unwrap();
    let b = train(&inst, arch, &config(50)).unwrap();
    assert_eq!(a.network.params(), b.network.params());
    let c = train(&inst, arch, &TrainConfig { seed: 6, ..config(50) }).unwrap();
    assert_ne!(a.network.params(), c.network.params());
}

#[test]
fn thread_count_does_not_change_the_result() {
    let inst = build_poisson(3, 20).unwrap();
    let arch = Architecture::new(3, 16, 3).unwrap();
    let cfg = TrainConfig {
        batch_size: 5000,
        ..config(5)
    };
    let one = train(&inst, arch, &cfg).unwrap();
    let four = train(&inst, arch, &TrainConfig { threads: 4, ..cfg }).unwrap();
    assert_eq!(one.network.params(), four.network.params());
}

#[test]
fn zero_iterations_return_the_initial_network() {
    let inst = build_poisson(2, 4).unwrap();
    let arch = Architecture::new(3, 8, 2).unwrap();
    let cfg = config(0);
    let out = train(&inst, arch, &cfg).unwrap();
    let init = Network::init(arch, cfg.init_scale, cfg.seed).unwrap();
    assert_eq!(out.network, init);
    assert!(out.history.records.is_empty());
}

#[test]
fn tiny_poisson_converges() {
    let inst = build_poisson(1, 3).unwrap();
    let arch = Architecture::new(3, 20, 1).unwrap();
    let cfg = TrainConfig {
        batch_size: 3,
        max_iters: 10_000,
        eval_every: 1000,
        lr_start: 1e-3,
        lr_end: 1e-5,
        ..config(0)
    };
    let out = train(&inst, arch, &cfg).unwrap();
    let last = out.history.records.last().unwrap();
    assert_eq!(last.iter, 10_000);
    assert!(last.loss < 1e-6, "final batch loss {:e}", last.loss);
}

#[test]
fn history_is_logged_on_schedule() {
    let inst = build_poisson(2, 4).unwrap();
    let arch = Architecture::new(2, 4, 2).unwrap();
    let cfg = TrainConfig {
        eval_every: 7,
        ..config(30)
    };
    let out = train(&inst, arch, &cfg).unwrap();
    let iters: Vec<usize> = out.history.records.iter().map(|r| r.iter).collect();
    assert_eq!(iters, vec![7, 14, 21, 28, 30]);
    for r in &out.history.records {
        assert_eq!(r.lr, lr_schedule(&cfg, r.iter - 1));
        assert!(r.loss >= 0.0);
    }

    let mut csv = Vec::new();
    out.history.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    assert!(text.starts_with("iter,loss,lr,e_inf,e_l2,res_l2\n"));
    let back = TrainHistory::read_csv(csv.as_slice()).unwrap();
    assert_eq!(back.records, out.history.records);
}

struct Counter(usize);

impl TrainObserver for Counter {
    fn on_log(&mut self, _net: &Network, record: &mut HistoryRecord) -> neurolin::Result<()> {
        self.0 += 1;
        record.res_l2 = Some(self.0 as f64);
        Ok(())
    }
}

#[test]
fn observer_fills_records() {
    let inst = build_poisson(2, 4).unwrap();
    let arch = Architecture::new(2, 4, 2).unwrap();
    let init = Network::init(arch, InitScale::InverseSqrt, 1).unwrap();
    let mut counter = Counter(0);
    let out = train_from(&inst, init, &config(40), &mut counter).unwrap();
    assert_eq!(counter.0, 4);
    let marks: Vec<Option<f64>> = out.history.records.iter().map(|r| r.res_l2).collect();
    assert_eq!(marks, vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)]);
}

#[test]
fn divergence_stops_with_partial_history() {
    let inst = build_poisson(2, 50).unwrap();
    let arch = Architecture::new(3, 10, 2).unwrap();
    let cfg = TrainConfig {
        batch_size: 32,
        max_iters: 10_000,
        lr_start: 1e3,
        lr_end: 1e3,
        eval_every: 1,
        optimizer: OptimizerKind::PlainSgd,
        init_scale: InitScale::PaperLiteral,
        ..config(0)
    };
    let init = Network::init(arch, cfg.init_scale, cfg.seed).unwrap();
    let failure = train_from(&inst, init, &cfg, &mut NoObserver).unwrap_err();
    assert!(matches!(failure.error, Error::Numeric(_)), "{}", failure.error);
    assert!(failure.iteration >= 1);
    assert_eq!(failure.history.records.len(), failure.iteration - 1);
}

#[test]
fn invalid_configuration_fails_before_training() {
    let inst = build_poisson(2, 4).unwrap();
    let arch = Architecture::new(2, 4, 2).unwrap();
    for cfg in [
        TrainConfig { batch_size: 0, ..config(5) },
        TrainConfig { lr_end: 1e-2, ..config(5) },
        TrainConfig { eval_every: 0, ..config(5) },
    ] {
        let failure = train(&inst, arch, &cfg).unwrap_err();
        assert_eq!(failure.iteration, 0);
        assert!(matches!(failure.error, Error::Parameter(_)));
    }
    let wrong_dim = Architecture::new(2, 4, 3).unwrap();
    assert!(train(&inst, wrong_dim, &config(5)).is_err());
}

#[test]
fn index_function_matches_forward() {
    let inst = build_poisson(6, 10_000).unwrap();
    let arch = Architecture::new(3, 10, 6).unwrap();
    let net = Network::init(arch, InitScale::InverseSqrt, 3).unwrap();
    let phi = solution_index_function(&net, &inst.grid);
    for idx in [MultiIndex::ones(6), MultiIndex::filled(6, 10_000), MultiIndex::new(vec![1, 500, 9999, 2, 10_000, 77])] {
        let direct = net.forward(&inst.grid.point_of(&idx).unwrap()).unwrap();
        assert_eq!(phi.eval(&idx).unwrap(), direct);
    }
    assert!(phi.eval(&MultiIndex::filled(6, 10_001)).is_err());
    assert!(phi.eval(&MultiIndex::ones(5)).is_err());
}

#[test]
fn index_function_covers_the_pbn_state_space() {
    let inst = build_pbn(10, &pbn_defaults::SHIFTS, &pbn_defaults::VALUES).unwrap();
    let arch = Architecture::new(3, 8, 10).unwrap();
    let net = Network::init(arch, InitScale::InverseSqrt, 4).unwrap();
    let phi = solution_index_function(&net, &inst.grid);
    let values: Vec<f64> = all_indices(inst.shape()).map(|j| phi.eval(&j).unwrap()).collect();
    assert_eq!(values.len(), 1024);
    assert!(values.iter().all(|v| v.is_finite()));
}
