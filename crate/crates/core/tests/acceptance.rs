//! Acceptance suite: one PASS/FAIL line per criterion. The external-data
//! check runs only when `WCF_ACCEPT_RATINGS` and `WCF_ACCEPT_GENOME` point at
//! a ratings file and a tag-genome scores CSV.

mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use wcf_core::data::{
    binarize, cold_start_split, filter_catalog, load_genome, load_interactions, InteractionFormat, SplitRatio,
};
use wcf_core::experiment::{predict_wcf, predict_wf, FoldProblem};
use wcf_core::metrics::{average_precision, evaluate_run, ndcg_at, recall_at};
use wcf_core::transport::{
    conjugate_grad, exact_ot_oracle, sinkhorn, CostMatrix, DualPotential, GibbsKernel, SimplexVector, SinkhornOptions,
};
use wcf_core::wcf::{predict_user, train_wcf, TrainOptions};
use wcf_core::wfilter::infer_cold;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> std::result::Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn worked_example() -> (SimplexVector, SimplexVector, DMatrix<f64>) {
    (
        SimplexVector::new(vec![0.4, 0.5, 0.1]).unwrap(),
        SimplexVector::new(vec![0.8, 0.2]).unwrap(),
        DMatrix::from_row_slice(3, 2, &[0.15, 0.8, 0.1, 0.95, 0.9, 0.05]),
    )
}

fn worked_example_reproduction() -> Check {
    let start = Instant::now();
    let (p, q, m) = worked_example();
    let exact = exact_ot_oracle(&p, &q, &m).map_err(|e| e.to_string())?.transport_cost;
    ensure((exact - 0.18).abs() < 1e-12, || format!("exact cost {exact}"))?;
    let smooth = sinkhorn(&p, &q, &m, 1e-3, SinkhornOptions::default()).map_err(|e| e.to_string())?;
    ensure((smooth.transport_cost - 0.18).abs() <= 0.005, || {
        format!("entropic cost {}", smooth.transport_cost)
    })?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("exact {exact}, entropic {:.6}", smooth.transport_cost))
}

fn ordering_claim() -> Check {
    let (p, q, m) = worked_example();
    let exact = exact_ot_oracle(&p, &q, &m).map_err(|e| e.to_string())?.transport_cost;
    ensure((exact - 0.18).abs() < 1e-12, || format!("exact cost {exact}"))?;
    Ok("W(p0,q1) = 0.18 reproduced; the second distribution is only given graphically, so the ordering against it is not checked".into())
}

fn conjugate_correctness() -> Check {
    let start = Instant::now();
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (n, s) = (1 + case % 6, 1 + (case / 6) % 6);
        let m = random_costs(&mut r, n, s);
        let p = random_sparse_simplex(&mut r, n);
        let g = DVector::from_fn(s, |_, _| rand::Rng::gen_range(&mut r, -1.0..1.0));
        let kernel = GibbsKernel::new(&m, 0.05).map_err(|e| e.to_string())?;
        let grad = conjugate_grad(&p, &DualPotential::new(g.clone()).unwrap(), &kernel).map_err(|e| e.to_string())?;
        ensure(grad.as_slice().iter().all(|x| *x >= 0.0), || format!("case {case}: negative entry"))?;
        let sum: f64 = grad.as_slice().iter().sum();
        ensure((sum - 1.0).abs() <= 1e-10, || format!("case {case}: sums to {sum}"))?;
        let h = 1e-6;
        for j in 0..s {
            let (mut plus, mut minus) = (g.clone(), g.clone());
            plus[j] += h;
            minus[j] -= h;
            let fd = (conjugate_oracle(p.as_slice(), plus.as_slice(), &m, 0.05)
                - conjugate_oracle(p.as_slice(), minus.as_slice(), &m, 0.05))
                / (2.0 * h);
            let rel = (grad.as_slice()[j] - fd).abs() / fd.abs().max(1e-3);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-5, || format!("relative error {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("worst relative error {worst:.2e}"))
}

fn filtering_optimality() -> Check {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    for case in 0..20u64 {
        let mut r = rng(4000 + case);
        let s = 2 + (case as usize % 2);
        let n = 1 + (case as usize % 6);
        let m = random_costs(&mut r, n, s);
        let p = random_sparse_simplex(&mut r, n);
        let q_hat = infer_cold(&p, &m, 0.05).map_err(|e| e.to_string())?;
        let (upper, cols) = filtering_plan_value(p.as_slice(), &m, 0.05);
        ensure(cols.iter().zip(q_hat.as_slice()).all(|(a, b)| (a - b).abs() < 1e-12), || {
            format!("case {case}: plan marginal differs from the estimate")
        })?;
        let margin = simplex_grid(s, 1000)
            .par_iter()
            .map(|q| dual_bound_until(p.as_slice(), q, &m, 0.05, upper - 1e-8, 20_000) - upper)
            .reduce(|| f64::INFINITY, f64::min);
        ensure(margin >= -1e-8, || format!("case {case}: grid point beats the estimate by {:e}", -margin))?;
        worst = worst.min(margin);
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("smallest grid margin {worst:.2e}"))
}

fn degenerate_equivalence() -> Check {
    let mut r = rng(5);
    let costs = random_costs(&mut r, 6, 5);
    let prefs: Vec<SimplexVector> = (0..10).map(|_| random_sparse_simplex(&mut r, 6)).collect();
    let cm = CostMatrix::from_matrix(costs.clone()).map_err(|e| e.to_string())?;
    let model = train_wcf(&prefs, &cm, 5, 0.05, &TrainOptions::default()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (u, p) in prefs.iter().enumerate() {
        let wf = infer_cold(p, &costs, 0.05).map_err(|e| e.to_string())?;
        let got = predict_user(&model, u as u64).map_err(|e| e.to_string())?;
        for (a, b) in got.as_slice().iter().zip(wf.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-8, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.2e}"))
}

fn wcf_descent() -> Check {
    let mut worst = f64::NEG_INFINITY;
    for run in 0..10u64 {
        let mut r = rng(6000 + run);
        let n = 2 + run as usize % 6;
        let s = 2 + (run as usize * 3) % 7;
        let m = 4 + (run as usize * 7) % 17;
        let k = (1 + run as usize % 4).min(s);
        let costs = random_costs(&mut r, n, s);
        let prefs: Vec<SimplexVector> = (0..m).map(|_| random_sparse_simplex(&mut r, n)).collect();
        let cm = CostMatrix::from_matrix(costs).map_err(|e| e.to_string())?;
        let model = train_wcf(&prefs, &cm, k, 0.05, &TrainOptions { seed: run, ..Default::default() })
            .map_err(|e| format!("run {run}: {e}"))?;
        for w in model.objective_trace.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
        ensure(worst <= 1e-6, || format!("run {run}: objective rose by {worst:e}"))?;
    }
    Ok(format!("largest step change {worst:.2e}"))
}

fn shared_preference_recovery() -> Check {
    let mut r = rng(7);
    let costs = random_costs(&mut r, 5, 6);
    let p = random_sparse_simplex(&mut r, 5);
    let prefs = vec![p.clone(); 12];
    let cm = CostMatrix::from_matrix(costs.clone()).map_err(|e| e.to_string())?;
    let model = train_wcf(&prefs, &cm, 1, 0.05, &TrainOptions::default()).map_err(|e| e.to_string())?;
    let wf = infer_cold(&p, &costs, 0.05).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for u in 0..prefs.len() {
        let got = predict_user(&model, u as u64).map_err(|e| e.to_string())?;
        for (a, b) in got.as_slice().iter().zip(wf.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-4, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.2e}"))
}

fn metric_oracles() -> Check {
    let mut cases = 0usize;
    for len in 1..=5usize {
        let items: Vec<u64> = (0..len as u64).collect();
        for mask in 1u32..(1 << len) {
            let positives: BTreeSet<u64> = (0..len as u64).filter(|i| mask & (1 << i) != 0).collect();
            for ranking in brute::permutations(&items) {
                let ap = average_precision(&ranking, &positives).map_err(|e| e.to_string())?;
                let ndcg = ndcg_at(&ranking, &positives, 20).map_err(|e| e.to_string())?;
                let recall = recall_at(&ranking, &positives, 20).map_err(|e| e.to_string())?;
                ensure(
                    ap == brute::ap(&ranking, &positives)
                        && ndcg == brute::ndcg(&ranking, &positives, 20)
                        && recall == brute::recall(&ranking, &positives, 20),
                    || format!("mismatch on {ranking:?} with positives {positives:?}"),
                )?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} ranked lists matched exactly"))
}

fn split_soundness() -> Check {
    use wcf_core::data::{Interaction, InteractionTable};
    let mut folds_checked = 0;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let items = rand::Rng::gen_range(&mut r, 8..50u64);
        let records = (0..12u64)
            .flat_map(|u| (0..items).map(move |i| (u, i)))
            .filter(|_| rand::Rng::gen_bool(&mut r, 0.4))
            .map(|(user, item)| Interaction { user, item, rating: 1.0, timestamp: 0 })
            .collect();
        let table = InteractionTable::from_records(records);
        let n = table.items().len();
        for ratio in [SplitRatio::ThreeToOne, SplitRatio::OneToOne, SplitRatio::OneToThree] {
            let folds = cold_start_split(&table, ratio, ratio.folds(), seed).map_err(|e| e.to_string())?;
            let mut appearances = vec![0usize; 0];
            appearances.resize(n, 0);
            let index: std::collections::BTreeMap<u64, usize> =
                table.items().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
            for fold in &folds {
                let trained: BTreeSet<u64> = fold.train.records.iter().map(|x| x.item).collect();
                ensure(fold.test.records.iter().all(|x| !trained.contains(&x.item)), || {
                    format!("seed {seed} {ratio}: test item leaked into training")
                })?;
                for item in &fold.cold_items {
                    appearances[index[item]] += 1;
                }
                ensure(fold.interacted_items.len() + fold.cold_items.len() == n, || {
                    format!("seed {seed} {ratio}: fold does not cover the catalog")
                })?;
                folds_checked += 1;
            }
            ensure(appearances.iter().all(|a| *a == ratio.cold_appearances()), || {
                format!("seed {seed} {ratio}: cold coverage {appearances:?}")
            })?;
        }
    }
    Ok(format!("{folds_checked} folds checked"))
}

fn external_data_check() -> Option<Check> {
    let ratings = PathBuf::from(std::env::var_os("WCF_ACCEPT_RATINGS")?);
    let genome = PathBuf::from(std::env::var_os("WCF_ACCEPT_GENOME")?);
    let format: InteractionFormat = std::env::var("WCF_ACCEPT_FORMAT")
        .unwrap_or_else(|_| "tab".into())
        .parse()
        .ok()?;
    let run = || -> Result<String, wcf_core::Error> {
        let (table, _) = load_interactions(&ratings, format)?;
        let genome = load_genome(&genome)?;
        let (table, genome) = filter_catalog(&binarize(&table, 4.0), &genome)?;
        let fold = cold_start_split(&table, SplitRatio::ThreeToOne, 1, 0)?.remove(0);
        let problem = FoldProblem::new(&fold, &genome)?;
        let wf = evaluate_run(&predict_wf(&problem, 0.05)?, &fold.test, 20, 0)?;
        let (_, wcf) = predict_wcf(&problem, 30, 0.05, &TrainOptions::default())?;
        let wcf = evaluate_run(&wcf, &fold.test, 20, 0)?;
        if wcf.map > wf.map {
            Ok(format!("MAP {:.4} (wcf) > {:.4} (wf)", wcf.map, wf.map))
        } else {
            Err(wcf_core::Error::Data(format!("MAP {:.4} (wcf) <= {:.4} (wf)", wcf.map, wf.map)))
        }
    };
    Some(run().map_err(|e| e.to_string()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 worked example reproduction", worked_example_reproduction),
        ("2 worked example ordering (reproducible half)", ordering_claim),
        ("3 conjugate correctness", conjugate_correctness),
        ("4 filtering optimality", filtering_optimality),
        ("5 factorization degenerate equivalence", degenerate_equivalence),
        ("6 factorization descent", wcf_descent),
        ("7 shared-preference recovery", shared_preference_recovery),
        ("8 metric oracles", metric_oracles),
        ("9 split soundness", split_soundness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    match external_data_check() {
        None => println!("SKIP 10 external-data check: set WCF_ACCEPT_RATINGS and WCF_ACCEPT_GENOME to run"),
        Some(Ok(detail)) => println!("PASS 10 external-data check: {detail}"),
        Some(Err(detail)) => {
            failed += 1;
            println!("FAIL 10 external-data check: {detail}");
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
