use std::sync::Arc;

use byzvr::aggregation::{Aggregator, AggregatorBase};
use byzvr::attacks::{Attack, AttackKind};
use byzvr::compression::Compressor;
use byzvr::data::{self, synthetic_logistic, Dataset, ShardMode, WorkerShard};
use byzvr::optimizers::{train, Algorithm, OptimizerConfig, Trainer, Workers};
use byzvr::problems::{full_grad, GlobalObjective, LossKind, LossModel};
use byzvr::vecops;

fn dataset() -> Arc<Dataset> {
    Arc::new(synthetic_logistic(400, 10, 21).unwrap())
}

fn model() -> LossModel {
    LossModel::new(LossKind::LogisticL2, 0.01).unwrap()
}

fn config(agg: AggregatorBase, compressor: Compressor, seed: u64) -> OptimizerConfig {
    let mut cfg = OptimizerConfig::new(Algorithm::Marina, 0.5, Aggregator::new(agg), compressor);
    cfg.p = 0.2;
    cfg.batch_size = 8;
    cfg.seed = seed;
    cfg
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn runs_are_reproducible_and_ignore_parallelism() {
    let ds = dataset();
    let good = data::shard(&ds, 4, ShardMode::DisjointShuffle, 1).unwrap();
    let byz = vec![WorkerShard::labeled(4, ds.clone())];
    let workers = Workers { model: model(), good: good.clone(), byz };
    let objective = GlobalObjective::new(model(), &good).unwrap();
    let mut cfg = config(AggregatorBase::Cm, Compressor::rand_k(2, 10).unwrap(), 3);
    cfg.attack = Attack::new(AttackKind::Alie);
    let a = train(&workers, &cfg, vec![0.0; 10], 200, &objective, 0.0).unwrap();
    let b = train(&workers, &cfg, vec![0.0; 10], 200, &objective, 0.0).unwrap();
    cfg.parallel = true;
    let c = train(&workers, &cfg, vec![0.0; 10], 200, &objective, 0.0).unwrap();
    for run in [&b, &c] {
        assert_eq!(bits(&a.final_x), bits(&run.final_x));
        for (r, s) in a.rows.iter().zip(&run.rows) {
            assert_eq!(r.loss.to_bits(), s.loss.to_bits());
            assert_eq!(r.cum_bits, s.cum_bits);
            assert_eq!(r.cum_oracle, s.cum_oracle);
        }
    }
    cfg.seed = 4;
    let d = train(&workers, &cfg, vec![0.0; 10], 200, &objective, 0.0).unwrap();
    assert_ne!(bits(&a.final_x), bits(&d.final_x));
}

/// A Byzantine worker running NA is indistinguishable from one more good worker.
#[test]
fn no_attack_byzantine_equals_an_extra_good_worker() {
    let ds = dataset();
    let shards = data::shard(&ds, 5, ShardMode::DisjointShuffle, 2).unwrap();
    let cfg = config(AggregatorBase::Cm, Compressor::rand_k(3, 10).unwrap(), 5);
    let with_byz = Workers { model: model(), good: shards[..4].to_vec(), byz: vec![shards[4].clone()] };
    let all_good = Workers { model: model(), good: shards.clone(), byz: vec![] };
    let mut t1 = Trainer::new(&with_byz, &cfg, vec![0.0; 10]).unwrap();
    let mut t2 = Trainer::new(&all_good, &cfg, vec![0.0; 10]).unwrap();
    for _ in 0..100 {
        t1.step().unwrap();
        t2.step().unwrap();
        assert_eq!(bits(t1.x()), bits(t2.x()));
    }
}

/// Relabelling which worker slot holds which shard (streams follow the
/// shard) leaves the trajectory unchanged for order-free rules.
#[test]
fn trajectory_is_invariant_to_worker_order() {
    let ds = dataset();
    let shards = data::shard(&ds, 5, ShardMode::DisjointShuffle, 3).unwrap();
    let mut permuted = shards.clone();
    permuted.rotate_left(2);
    permuted.swap(0, 3);
    for agg in [AggregatorBase::Mean, AggregatorBase::Cm, AggregatorBase::Rfa] {
        let mut cfg = config(agg, Compressor::identity(10), 6);
        cfg.aggregator = cfg.aggregator.with_bucket_size(1);
        let mut a = Trainer::new(&Workers { model: model(), good: shards.clone(), byz: vec![] }, &cfg, vec![0.0; 10]).unwrap();
        let mut b = Trainer::new(&Workers { model: model(), good: permuted.clone(), byz: vec![] }, &cfg, vec![0.0; 10]).unwrap();
        for _ in 0..50 {
            a.step().unwrap();
            b.step().unwrap();
        }
        let gap = vecops::dist_sq(a.x(), b.x()).sqrt();
        assert!(gap <= 1e-12 * (1.0 + vecops::norm_sq(a.x()).sqrt()), "{agg:?}: {gap}");
    }
}

#[test]
fn duplicate_worker_ids_are_rejected() {
    let ds = dataset();
    let s = WorkerShard::labeled(0, ds);
    let workers = Workers { model: model(), good: vec![s.clone(), s], byz: vec![] };
    let cfg = config(AggregatorBase::Mean, Compressor::identity(10), 1);
    assert!(Trainer::new(&workers, &cfg, vec![0.0; 10]).is_err());
}

/// Conditioned on a compressed round, each good message is unbiased for
/// `g + grad f_i(x+) - grad f_i(x)`.
#[test]
fn compressed_round_messages_are_unbiased() {
    let ds = Arc::new(synthetic_logistic(60, 5, 22).unwrap());
    let shards = data::shard(&ds, 2, ShardMode::DisjointShuffle, 4).unwrap();
    let workers = Workers { model: model(), good: shards.clone(), byz: vec![] };
    let mut cfg = config(AggregatorBase::Mean, Compressor::rand_k(2, 5).unwrap(), 7);
    cfg.batch_size = 2;
    let mut trainer = Trainer::new(&workers, &cfg, vec![0.3; 5]).unwrap();
    for _ in 0..3 {
        trainer.step().unwrap();
    }
    let x = trainer.x().to_vec();
    let g = trainer.g().to_vec();
    let x_next: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - cfg.gamma * g).collect();
    let replays = 10_000;
    for (i, shard) in shards.iter().enumerate() {
        let want: Vec<f64> = {
            let diff = vecops::sub(&full_grad(&model(), shard, &x_next).unwrap(), &full_grad(&model(), shard, &x).unwrap());
            vecops::add(&g, &diff)
        };
        let mut sum = vec![0.0; 5];
        let mut sum_sq = vec![0.0; 5];
        for r in 0..replays {
            let mut replay = trainer.clone();
            replay.reseed_for_replay(77, r);
            replay.step_with_coin(Some(false)).unwrap();
            let msg = &replay.last_good_messages()[i];
            for t in 0..5 {
                sum[t] += msg[t];
                sum_sq[t] += msg[t] * msg[t];
            }
        }
        let n = replays as f64;
        for t in 0..5 {
            let mean = sum[t] / n;
            let se = ((sum_sq[t] / n - mean * mean) / (n - 1.0)).sqrt();
            assert!((mean - want[t]).abs() <= 3.0 * se + 1e-12, "worker {i} coord {t}: {mean} vs {}", want[t]);
        }
    }
}

/// Without attacks the gradient estimate locks onto the true gradient.
#[test]
fn estimator_error_vanishes_without_attacks() {
    let ds = dataset();
    let good = data::shard(&ds, 4, ShardMode::FullCopy, 0).unwrap();
    let workers = Workers { model: model(), good: good.clone(), byz: vec![] };
    let objective = GlobalObjective::new(model(), &good).unwrap();
    let cfg = config(AggregatorBase::Mean, Compressor::rand_k(2, 10).unwrap(), 8);
    let out = train(&workers, &cfg, vec![0.0; 10], 600, &objective, 0.0).unwrap();
    let early: f64 = out.rows[1..=10].iter().map(|r| r.diag_gdist).sum();
    let late: f64 = out.rows[out.rows.len() - 10..].iter().map(|r| r.diag_gdist).sum();
    assert!(late < 1e-2 * early, "{late} vs {early}");
}

#[test]
fn every_baseline_makes_progress() {
    let ds = dataset();
    let good = data::shard(&ds, 4, ShardMode::DisjointShuffle, 5).unwrap();
    let workers = Workers { model: model(), good: good.clone(), byz: vec![WorkerShard::labeled(4, ds.clone())] };
    let objective = GlobalObjective::new(model(), &good).unwrap();
    for alg in [Algorithm::Sgd, Algorithm::Csgd, Algorithm::BrSgdm, Algorithm::ByrdSvrg] {
        let compressor = if alg == Algorithm::Csgd { Compressor::rand_k(5, 10).unwrap() } else { Compressor::identity(10) };
        let mut cfg = OptimizerConfig::new(alg, 0.1, Aggregator::new(AggregatorBase::Cm), compressor);
        cfg.batch_size = 8;
        cfg.attack = Attack::new(AttackKind::Ipm);
        cfg.seed = 9;
        let out = train(&workers, &cfg, vec![0.0; 10], 300, &objective, 0.0).unwrap();
        assert!(out.diverged_at.is_none());
        let first = out.rows[0].loss;
        let last = out.rows.last().unwrap().loss;
        assert!(last < first - 1e-3, "{alg:?}: {first} -> {last}");
    }
}

#[test]
fn huge_steps_report_divergence() {
    let ds = dataset();
    let good = data::shard(&ds, 2, ShardMode::FullCopy, 0).unwrap();
    let workers = Workers { model: LossModel::new(LossKind::LogisticL2, 1.0).unwrap(), good: good.clone(), byz: vec![] };
    let objective = GlobalObjective::new(workers.model, &good).unwrap();
    let mut cfg = config(AggregatorBase::Mean, Compressor::identity(10), 1);
    cfg.gamma = 1e6;
    let out = train(&workers, &cfg, vec![0.0; 10], 200, &objective, 0.0).unwrap();
    assert!(out.diverged_at.is_some());
    assert!(out.final_gap().is_infinite());
}
