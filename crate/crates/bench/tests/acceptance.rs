//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use pps_bench::{run_benchmark, BenchConfig, Family, RunRecord, RunStatus, Scale};
use pps_core::ctmc::{Balancing, CtmcKind};
use pps_core::ess::{multivariate_ess, weighted_moments};
use pps_core::learning::{
    exact_kl, exact_kl_gradient, fit, kl_gradient, ChainBudget, DataDistribution, FitConfig,
    ParamGradient, Partition,
};
use pps_core::oracle::{
    ctmc_stationary, empirical_pmf, enumerate_pmf, truncation_coverage, tv_distance,
    two_time_symmetry,
};
use pps_core::pps::{JumpKind, PpsState};
use pps_core::targets::{EvalMode, NeuralTarget, PoissonTarget, TableTarget};
use pps_core::trace::Discard;
use pps_core::{SamplerKind, StateBox, Target, TraceSink, WeightedTrace};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use statrs::distribution::{ContinuousCDF, StudentsT};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Downward-closed random table; states with total count <= 1 are always
/// kept so that no sampler starts stuck.
fn random_table(maxima: &[u32], hole: f64, rng: &mut Pcg64) -> TableTarget {
    let states = StateBox::new(maxima.to_vec()).unwrap();
    let mut log_f = vec![0.0; states.volume()];
    let mut y = vec![0; maxima.len()];
    for idx in 0..states.volume() {
        states.state_into(idx, &mut y);
        let below_ok = (0..y.len()).all(|i| match states.step_down(idx, &y, i) {
            Some(j) => log_f[j] > f64::NEG_INFINITY,
            None => true,
        });
        let keep = y.iter().sum::<u32>() <= 1 || (below_ok && rng.gen::<f64>() >= hole);
        log_f[idx] = if keep { rng.gen_range(-1.5..1.5) } else { f64::NEG_INFINITY };
    }
    TableTarget::new(maxima.to_vec(), log_f).unwrap()
}

fn tables() -> Vec<TableTarget> {
    let mut rng = Pcg64::seed_from_u64(20_240_601);
    (0..3).map(|_| random_table(&[2, 2], 0.25, &mut rng)).collect()
}

fn sampled_tv(t: &TableTarget, kind: SamplerKind, steps: u64, seed: u64) -> f64 {
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut chain = kind.start(t).unwrap();
    chain.run(t, 10_000, &mut rng, &mut Discard).unwrap();
    let mut trace = WeightedTrace::with_capacity(2, steps as usize);
    chain.run(t, steps, &mut rng, &mut trace).unwrap();
    let exact = enumerate_pmf(t, &[2, 2]).unwrap();
    tv_distance(&exact, &empirical_pmf(&trace, &[2, 2]).unwrap().pmf).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for (n, t) in tables().iter().enumerate() {
        let start = Instant::now();
        worst = worst.max(sampled_tv(t, SamplerKind::Pps, 1_000_000, 100 + n as u64));
        slowest = slowest.max(start.elapsed().as_secs_f64());
    }
    outcome(
        worst < 0.02 && slowest < 60.0,
        format!("max TV {worst:.4} (< 0.02), slowest target {slowest:.2}s (< 60s)"),
    )
}

const CTMC_KINDS: [CtmcKind; 4] = [
    CtmcKind::BIRTH_DEATH,
    CtmcKind::Zanella(Balancing::Sqrt),
    CtmcKind::Zanella(Balancing::Min1),
    CtmcKind::Zanella(Balancing::Ratio),
];

fn criterion_2() -> Outcome {
    let mut worst_mc: f64 = 0.0;
    let mut worst_solve: f64 = 0.0;
    for (n, t) in tables().iter().enumerate() {
        let exact = enumerate_pmf(t, &[2, 2]).unwrap();
        for (k, kind) in SamplerKind::ALL[1..].iter().enumerate() {
            worst_mc = worst_mc.max(sampled_tv(t, *kind, 1_000_000, 200 + 10 * n as u64 + k as u64));
        }
        for kind in CTMC_KINDS {
            let solved = ctmc_stationary(t, kind, &[2, 2]).unwrap();
            worst_solve = worst_solve.max(tv_distance(&exact, &solved).unwrap());
        }
    }
    outcome(
        worst_mc < 0.02 && worst_solve < 1e-10,
        format!("max sampled TV {worst_mc:.4} (< 0.02), max generator-solve TV {worst_solve:.1e} (< 1e-10)"),
    )
}

fn criterion_3() -> Outcome {
    let lambda = 3.0;
    let t = PoissonTarget::new(1, lambda).unwrap();
    let mut rng = Pcg64::seed_from_u64(3);
    let mut s = PpsState::new(&t, 1.0).unwrap();
    s.run(&t, 10_000, &mut rng, &mut Discard).unwrap();
    let mut trace = WeightedTrace::new(1);
    let mut gaps = Vec::with_capacity(100_000);
    let mut last = None;
    while gaps.len() < 100_000 {
        let ev = s.step_into(&t, &mut rng, &mut trace).unwrap();
        if ev.kind == JumpKind::Arrival {
            if let Some(prev) = last {
                gaps.push(ev.time - prev);
            }
            last = Some(ev.time);
        }
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    let ks = gaps
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let f = 1.0 - (-lambda * g).exp();
            (f - k as f64 / n).abs().max((k as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let critical = 1.628 / n.sqrt();
    let (mean, cov) = weighted_moments(&trace).unwrap();
    let ess = multivariate_ess(&trace, 3000).unwrap().ess;
    let se = (cov[(0, 0)] / ess).sqrt();
    let z = (mean[0] - lambda) / se;
    outcome(
        ks < critical && z.abs() < 3.0,
        format!("KS {ks:.5} (< {critical:.5}), mean {:.4} is {z:+.2} SE from 3", mean[0]),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(4);
    let mut trace = WeightedTrace::with_capacity(3, 1_000_000);
    for _ in 0..1_000_000 {
        let y = [rng.gen_range(0..6), rng.gen_range(0..3), rng.gen_range(0..11)];
        trace.push(&y, 1.0);
    }
    let base = multivariate_ess(&trace, 3000).unwrap();
    let ratio = base.ess / base.k as f64;
    let mapped = WeightedTrace::from_samples(
        3,
        trace.iter().map(|(y, w)| ([2 * y[0] + y[1] + 3, 3 * y[1] + y[2], y[2] + 7], w)),
    )
    .unwrap();
    let affine = (multivariate_ess(&mapped, 3000).unwrap().ess - base.ess).abs() / base.ess;
    let mut scaled = WeightedTrace::with_capacity(3, trace.len());
    for (y, w) in trace.iter() {
        scaled.push(y, w * 0.037);
    }
    let rescale = (multivariate_ess(&scaled, 3000).unwrap().ess - base.ess).abs() / base.ess;
    outcome(
        (0.85..=1.15).contains(&ratio) && affine < 1e-6 && rescale < 1e-9,
        format!("ess/k {ratio:.4} (in [0.85, 1.15]), affine drift {affine:.1e} (< 1e-6), rescale drift {rescale:.1e} (< 1e-9)"),
    )
}

fn ess_grid_records() -> Vec<RunRecord> {
    let mut out = Vec::new();
    let mut poisson = BenchConfig::new(Family::Poisson, Scale::Desk);
    poisson.grid = vec![1.0, 5.0, 10.0];
    poisson.samplers = vec![SamplerKind::Pps, SamplerKind::BirthDeath];
    poisson.seed = 55;
    out.extend(run_benchmark(&poisson).unwrap());
    let mut sk = BenchConfig::new(Family::Sk, Scale::Desk);
    sk.dim = 10;
    sk.grid = vec![0.25, 0.5];
    sk.seed = 56;
    out.extend(run_benchmark(&sk).unwrap());
    out
}

fn values(records: &[RunRecord], target: &str, param: f64, sampler: &str, f: fn(&RunRecord) -> Option<f64>) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.target == target && r.param == param && r.sampler == sampler && r.status == RunStatus::Ok)
        .filter_map(f)
        .collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// One-sided Welch test of `mean(a) > mean(b)`; returns the p-value.
fn welch_greater(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t)
}

const GRID: [(&str, f64); 5] = [("poisson", 1.0), ("poisson", 5.0), ("poisson", 10.0), ("sk", 0.25), ("sk", 0.5)];

fn criterion_5(records: &[RunRecord]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (target, param) in GRID {
        let pps = values(records, target, param, "pps", |r| r.ess);
        let bd = values(records, target, param, "bd", |r| r.ess);
        if pps.len() < 2 || bd.len() < 2 {
            pass = false;
            parts.push(format!("{target} {param}: missing runs"));
            continue;
        }
        let ratio = mean_var(&pps).0 / mean_var(&bd).0;
        let p = welch_greater(&pps, &bd);
        pass &= (1.2..=2.4).contains(&ratio) && p < 0.05;
        parts.push(format!("{target} {param}: {ratio:.2} (p {p:.1e})"));
    }
    outcome(pass, format!("ESS ratio in [1.2, 2.4] and > 1 at 95%: {}", parts.join(", ")))
}

fn criterion_6(records: &[RunRecord]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (target, param) in GRID {
        let pps = values(records, target, param, "pps", |r| r.ess_per_second);
        let bd = values(records, target, param, "bd", |r| r.ess_per_second);
        let ratio = mean_var(&pps).0 / mean_var(&bd).0;
        pass &= ratio > 1.0;
        parts.push(format!("{target} {param}: {ratio:.2}"));
    }
    outcome(pass, format!("ESS/s ratio > 1: {}", parts.join(", ")))
}

fn criterion_7(records: &[RunRecord]) -> Outcome {
    let pps = mean_var(&values(records, "sk", 0.25, "pps", |r| r.ess)).0;
    let mut best = ("", 0.0f64);
    for tag in ["zanella-sqrt", "zanella-min", "zanella-ratio"] {
        let m = mean_var(&values(records, "sk", 0.25, tag, |r| r.ess)).0;
        if m > best.1 {
            best = (tag, m);
        }
    }
    let detail = format!("PPS mean ESS {pps:.0}, best Zanella {} {:.0}", best.0, best.1);
    if pps >= best.1 {
        outcome(true, format!("{detail} (PPS ahead)"))
    } else {
        outcome(pps >= 0.9 * best.1, format!("{detail} (PPS within 10% required)"))
    }
}

fn criterion_8() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(8);
    let t = random_table(&[1, 1], 0.0, &mut rng);
    let mut s = PpsState::new(&t, 1.0).unwrap();
    s.run(&t, 10_000, &mut rng, &mut Discard).unwrap();
    let trace = s.run_trace(&t, 1_000_000, &mut rng).unwrap();
    let defect = two_time_symmetry(&trace, 0.5, &[1, 1]).unwrap();
    outcome(defect < 0.02, format!("defect at lag m/2 {defect:.4} (< 0.02)"))
}

fn learning_model() -> NeuralTarget {
    let w = DMatrix::from_row_slice(2, 2, &[0.15, 0.4, 0.4, -0.1]);
    NeuralTarget::new(&w, vec![0.8, 0.2], 0.0, 1.0, EvalMode::Full).unwrap()
}

fn criterion_9() -> Outcome {
    const BOX: [u32; 2] = [40, 40];
    let t = learning_model();
    let coverage = truncation_coverage(&t, &BOX).unwrap();
    let p = Partition::new(2, vec![0]).unwrap();
    let psi = DataDistribution::parse("0 0.1\n1 0.2\n2 0.3\n3 0.25\n5 0.15\n").unwrap();
    let g = exact_kl_gradient(&t, &p, &psi, &BOX).unwrap().coords();
    let theta = ParamGradient { dw: t.weights(), db: t.bias().to_vec() }.coords();
    let kl_at = |th: &[f64]| {
        let q = ParamGradient::from_coords(2, th);
        exact_kl(&t.with_params(&q.dw, q.db).unwrap(), &p, &psi, &BOX).unwrap()
    };
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    for k in 0..theta.len() {
        let (mut up, mut down) = (theta.clone(), theta.clone());
        up[k] += h;
        down[k] -= h;
        let fd = (kl_at(&up) - kl_at(&down)) / (2.0 * h);
        worst_rel = worst_rel.max((g[k] - fd).abs() / g[k].abs().max(fd.abs()));
    }
    let budget = ChainBudget { burn_in: 10_000, steps: 400_000, sampler: SamplerKind::Pps };
    let est = kl_gradient(&t, &p, &psi, budget, &mut Pcg64::seed_from_u64(9)).unwrap();
    let (mc, se) = (est.gradient.coords(), est.std_err.coords());
    let worst_z = (0..mc.len()).map(|k| (mc[k] - g[k]).abs() / se[k]).fold(0.0, f64::max);
    outcome(
        coverage > 1.0 - 1e-10 && worst_rel < 1e-6 && worst_z < 3.0,
        format!("box coverage {coverage:.12}, max FD rel error {worst_rel:.1e} (< 1e-6), max MC deviation {worst_z:.2} SE (< 3)"),
    )
}

fn criterion_10() -> Outcome {
    let teacher = learning_model();
    let p = Partition::new(2, vec![0]).unwrap();
    let marginal = enumerate_pmf(&teacher, &[30, 30]).unwrap();
    let mut q = vec![0.0; 31];
    for (y, pr) in marginal.iter() {
        q[y[0] as usize] += pr;
    }
    let kept: Vec<(u32, f64)> = (0..31u32).map(|o| (o, q[o as usize])).filter(|(_, v)| *v > 1e-4).collect();
    let mass: f64 = kept.iter().map(|(_, v)| v).sum();
    let psi = DataDistribution::new(kept.into_iter().map(|(o, v)| (vec![o].into(), v / mass)).collect()).unwrap();
    let start = teacher.with_params(&DMatrix::zeros(2, 2), vec![0.0, 0.0]).unwrap();
    let cfg = FitConfig {
        iterations: 200,
        step_size: 0.05,
        budget: ChainBudget { burn_in: 1_000, steps: 20_000, sampler: SamplerKind::Pps },
        monitor_box: Some(vec![30, 30]),
    };
    let tr = match fit(&start, &p, &psi, &cfg, &mut Pcg64::seed_from_u64(10)) {
        Ok(tr) => tr,
        Err(e) => return outcome(false, format!("fit failed: {e}")),
    };
    let kl0 = tr.points[0].exact_kl.unwrap();
    let hit = tr.points.iter().position(|pt| pt.exact_kl.unwrap() <= 0.5 * kl0);
    let last = tr.last().exact_kl.unwrap();
    match hit {
        Some(it) => outcome(true, format!("KL {kl0:.4} halved at iteration {it}, final {last:.4}")),
        None => outcome(false, format!("KL {kl0:.4} -> {last:.4} after 200 iterations")),
    }
}

fn criterion_11() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(11);
    let t = random_table(&[2, 2], 0.2, &mut rng);
    let log_pi = |y: &[u32]| -> f64 {
        t.log_f(y).unwrap() - y.iter().map(|&c| (1..=c).map(|k| f64::from(k).ln()).sum::<f64>()).sum::<f64>()
    };
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for y in StateBox::new(vec![2, 2]).unwrap().iter() {
        if !t.in_support(&y) {
            continue;
        }
        for i in 0..2 {
            let mut up = y.clone();
            up[i] += 1;
            if !t.in_support(&up) {
                continue;
            }
            pairs += 1;
            for kind in CTMC_KINDS {
                let fwd = kind.rates(&t, &y).unwrap().up[i].ln();
                let back = kind.rates(&t, &up).unwrap().down[i].ln();
                worst = worst.max(((log_pi(&y) + fwd) - (log_pi(&up) + back)).abs());
            }
        }
    }
    outcome(worst < 1e-12, format!("{pairs} adjacent pairs, max log residual {worst:.1e} (< 1e-12)"))
}

#[test]
fn acceptance() {
    let records = ess_grid_records();
    let results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5(&records)),
        (6, criterion_6(&records)),
        (7, criterion_7(&records)),
        (8, criterion_8()),
        (9, criterion_9()),
        (10, criterion_10()),
        (11, criterion_11()),
    ];
    // write past the test harness capture so the lines always show
    let mut out = std::io::stdout().lock();
    for (n, r) in &results {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        writeln!(out, "acceptance criterion {n:>2}: {tag}: {}", r.detail).unwrap();
    }
    let failed: Vec<usize> = results.iter().filter(|(_, r)| !r.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
