//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs as a plain binary so the report is never captured.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use seqdiscover::bnn::{BayesianNetwork, Dataset, Head, PosteriorSampleSet, TrainConfig};
use seqdiscover::corpus::search_space_size;
use seqdiscover::engine::{replicate, rounds_csv, run, Replication};
use seqdiscover::scoring::{top_k, PredictionRecord, ScoreKey};
use seqdiscover::uncertainty::{classify_uncertainty, entropy, regress_uncertainty};
use seqdiscover::RunConfig;

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn runtime(&mut self, suite: &str, elapsed: Duration, limit: Duration) {
        self.check(
            &format!("{suite} runtime"),
            elapsed < limit,
            format!("{:.1} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()),
        );
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn plain_entropy(p: f64) -> f64 {
    let h = |x: f64| if x == 0.0 { 0.0 } else { -x * x.ln() };
    h(p) + h(1.0 - p)
}

fn cls(p: &[f64]) -> seqdiscover::uncertainty::UncertaintyRecord {
    classify_uncertainty(&PosteriorSampleSet::Classification(p.to_vec())).unwrap()
}

fn reg(s: &[(f64, f64)]) -> seqdiscover::uncertainty::UncertaintyRecord {
    regress_uncertainty(&PosteriorSampleSet::Regression(s.to_vec())).unwrap()
}

// ---- math-exactness suite ----

fn worked_examples() -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let mut err: f64 = 0.0;
    let mut note = |got: f64, want: f64| err = err.max((got - want).abs());
    note(entropy(0.5).unwrap(), ln2);
    note(entropy(0.0).unwrap(), 0.0);
    note(entropy(1.0).unwrap(), 0.0);
    note(entropy(0.9).unwrap(), -0.9 * 0.9f64.ln() - 0.1 * 0.1f64.ln());

    let r = cls(&[0.5; 8]);
    note(r.mean, 0.5);
    note(r.data_unc, ln2);
    note(r.model_unc, 0.0);
    let r = cls(&[0.0, 1.0]);
    note(r.mean, 0.5);
    note(r.data_unc, 0.0);
    note(r.model_unc, ln2);
    // Entropy table by hand: H(0.5) minus the mean of H over the four draws.
    let table = [0.2, 0.4, 0.6, 0.8].map(plain_entropy);
    let r = cls(&[0.2, 0.4, 0.6, 0.8]);
    note(r.model_unc, plain_entropy(0.5) - table.iter().sum::<f64>() / 4.0);

    let r = reg(&[(2.5, 0.7); 5]);
    note(r.mean, 2.5);
    note(r.model_unc, 0.0);
    note(r.data_unc, 0.7);
    let r = reg(&[(1.0, 0.0), (3.0, 0.0)]);
    note(r.mean, 2.0);
    note(r.model_unc, 1.0);
    note(r.data_unc, 0.0);
    let r = reg(&[(0.0, 3.0), (0.0, 4.0)]);
    note(r.data_unc, 12.5f64.sqrt());
    err
}

fn random_probs(r: &mut ChaCha8Rng) -> Vec<f64> {
    let m = r.random_range(2..50);
    // Mix in exact 0/1 and near-degenerate draws.
    (0..m)
        .map(|_| match r.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            2 => r.random::<f64>() * 1e-9,
            _ => r.random::<f64>(),
        })
        .collect()
}

fn math_suite(report: &mut Report) {
    let start = Instant::now();

    let err = worked_examples();
    report.check("entropy and mutual-information worked examples", err <= 1e-9, format!("max error {err:.2e} (tol 1e-9)"));

    let mut r = rng(1);
    let mut min_mi = f64::INFINITY;
    let mut max_gap: f64 = 0.0;
    for _ in 0..10_000 {
        let u = cls(&random_probs(&mut r));
        min_mi = min_mi.min(u.model_unc);
        max_gap = max_gap.max((u.total - (u.data_unc + u.model_unc)).abs());
    }
    report.check("sigma_m >= 0 over 10,000 sample sets", min_mi >= 0.0, format!("min sigma_m {min_mi:.3e}"));
    report.check("entropy decomposition H = sigma_d + sigma_m", max_gap <= 1e-10, format!("max gap {max_gap:.2e} (tol 1e-10)"));

    let mut max_gap: f64 = 0.0;
    for _ in 0..10_000 {
        let m = r.random_range(2..40);
        let s: Vec<(f64, f64)> = (0..m).map(|_| (r.random_range(-5.0..5.0), r.random_range(0.0..3.0))).collect();
        let u = reg(&s);
        max_gap = max_gap.max((u.total.powi(2) - (u.data_unc.powi(2) + u.model_unc.powi(2))).abs());
    }
    report.check("law of total variance", max_gap <= 1e-10, format!("max gap {max_gap:.2e} (tol 1e-10)"));

    // Draw from the equal-weight Gaussian mixture and compare its spread.
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let m = r.random_range(2..8);
        let s: Vec<(f64, f64)> = (0..m).map(|_| (r.random_range(-3.0..3.0), r.random_range(0.1..2.0))).collect();
        let n = 400_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let (mu, sd) = s[r.random_range(0..m)];
            let y = Normal::new(mu, sd).unwrap().sample(&mut r);
            sum += y;
            sq += y * y;
        }
        let mean = sum / n as f64;
        let mc_std = (sq / n as f64 - mean * mean).sqrt();
        let u = reg(&s);
        worst = worst.max((u.total - mc_std).abs() / mc_std);
    }
    report.check("Monte Carlo mixture oracle", worst <= 0.01, format!("max relative error {:.3}% (tol 1%)", worst * 100.0));

    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mu = r.random_range(-2.0..2.0);
        let sq = r.random_range(0.05..2.0);
        let sp = r.random_range(0.1..2.0);
        let kl = one_weight_kl(mu, sq, sp);
        worst = worst.max((kl - integrated_kl(mu, sq, sp)).abs());
    }
    report.check("KL closed form vs numerical integration", worst <= 1e-6, format!("max error {worst:.2e} (tol 1e-6)"));

    let rel = gradient_check();
    report.check("ELBO gradient vs central differences (2-3-2)", rel <= 1e-4, format!("relative error {rel:.2e} (tol 1e-4)"));

    let mut mismatches = 0;
    for c in 1..=3u64 {
        for l in 1..=6u32 {
            if search_space_size(c, l).to_string() != brute_force_count(c as usize, l as usize).to_string() {
                mismatches += 1;
            }
        }
    }
    report.check("search-space size vs enumeration (C<=3, L<=6)", mismatches == 0, format!("{mismatches} of 18 mismatched"));

    let bad = top_k_check(&mut r);
    report.check("top_k vs full-sort oracle (1,000 records)", bad == 0, format!("{bad} mismatched rankings"));

    report.runtime("math suite", start.elapsed(), Duration::from_secs(10));
}

/// KL of a net whose only non-prior parameter is (mu, sq); the other three
/// parameters sit exactly at the prior.
fn one_weight_kl(mu: f64, sq: f64, sp: f64) -> f64 {
    let inv_softplus = |y: f64| (y.exp() - 1.0).ln();
    let net = BayesianNetwork::from_parts(
        &[1, 2],
        Head::Classification,
        sp,
        vec![mu, 0.0, 0.0, 0.0],
        vec![inv_softplus(sq), inv_softplus(sp), inv_softplus(sp), inv_softplus(sp)],
    )
    .unwrap();
    net.kl_to_prior()
}

/// Composite Simpson integration of q ln(q/p) over mu ± 14 sq.
fn integrated_kl(mu: f64, sq: f64, sp: f64) -> f64 {
    let log_n = |x: f64, m: f64, s: f64| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let f = |x: f64| {
        let lq = log_n(x, mu, sq);
        lq.exp() * (lq - log_n(x, 0.0, sp))
    };
    let (a, b, n) = (mu - 14.0 * sq, mu + 14.0 * sq, 20_000);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn gradient_check() -> f64 {
    let arch = [2, 3, 2];
    let net = BayesianNetwork::init(&arch, Head::Classification, 0.8, 4).unwrap();
    let mut r = rng(5);
    let mut data = Dataset::new(2);
    for _ in 0..6 {
        let x = [r.random_range(-1.5..1.5), r.random_range(-1.5..1.5)];
        data.push(&x, f64::from(r.random_bool(0.5))).unwrap();
    }
    let std = Normal::new(0.0, 1.0).unwrap();
    let noise: Vec<Vec<f64>> = (0..3).map(|_| (0..net.num_params()).map(|_| std.sample(&mut r)).collect()).collect();
    let eval = net.elbo_with_gradient(&data, 1.0, &noise).unwrap();
    let loss = |n: &BayesianNetwork| n.elbo_with_gradient(&data, 1.0, &noise).unwrap().loss;
    let h = 1e-5;
    let (mut diff, mut norm) = (0.0, 0.0);
    for i in 0..net.num_params() {
        for which in 0..2 {
            let mut plus = net.clone();
            let mut minus = net.clone();
            if which == 0 {
                plus.mu_mut()[i] += h;
                minus.mu_mut()[i] -= h;
            } else {
                plus.rho_mut()[i] += h;
                minus.rho_mut()[i] -= h;
            }
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let g = if which == 0 { eval.grad_mu[i] } else { eval.grad_rho[i] };
            diff += (g - fd).powi(2);
            norm += fd.powi(2);
        }
    }
    (diff / norm).sqrt()
}

fn brute_force_count(c: usize, l: usize) -> u64 {
    // Enumerate every string of length 1..=l as a base-c odometer.
    let mut count = 0;
    for len in 1..=l {
        let mut digits = vec![0usize; len];
        loop {
            count += 1;
            let mut i = 0;
            while i < len && digits[i] == c - 1 {
                digits[i] = 0;
                i += 1;
            }
            if i == len {
                break;
            }
            digits[i] += 1;
        }
    }
    count
}

fn top_k_check(r: &mut ChaCha8Rng) -> usize {
    let records: Vec<PredictionRecord> = (0..1000)
        .map(|i| {
            // Coarse scores force plenty of ties.
            let r_un = f64::from(r.random_range(0..200u32)) / 10.0;
            let r_se = r.random::<f64>();
            PredictionRecord {
                id: format!("id{:04}", (i * 7919) % 1000),
                mu: vec![r_se],
                sigma_d: vec![0.0],
                sigma_m: vec![r_un],
                r_un,
                r_se,
            }
        })
        .collect();
    let mut bad = 0;
    for key in [ScoreKey::Uncertainty, ScoreKey::Search] {
        let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
        sorted.sort_by(|a, b| b.score(key).partial_cmp(&a.score(key)).unwrap().then(a.id.cmp(&b.id)));
        for k in [0, 1, 50, 999, 1000] {
            let want: Vec<String> = sorted[..k].iter().map(|p| p.id.clone()).collect();
            if top_k(&records, key, k).unwrap() != want {
                bad += 1;
            }
        }
    }
    bad
}

// ---- learning suite ----

fn blobs(n: usize, r: &mut ChaCha8Rng) -> Vec<([f64; 2], f64)> {
    let noise = Normal::new(0.0, 0.6).unwrap();
    (0..n)
        .map(|i| {
            let y = (i % 2) as f64;
            let cx = if y == 1.0 { 1.5 } else { -1.5 };
            ([cx + noise.sample(r), 1.5 * noise.sample(r)], y)
        })
        .collect()
}

/// Full-batch gradient descent on the logistic loss.
fn logistic_regression(data: &[([f64; 2], f64)]) -> [f64; 3] {
    let mut w = [0.0; 3];
    for _ in 0..5_000 {
        let mut g = [0.0; 3];
        for (x, y) in data {
            let p = 1.0 / (1.0 + (-(w[0] * x[0] + w[1] * x[1] + w[2])).exp());
            g[0] += (p - y) * x[0];
            g[1] += (p - y) * x[1];
            g[2] += p - y;
        }
        for j in 0..3 {
            w[j] -= 0.5 * g[j] / data.len() as f64;
        }
    }
    w
}

fn logistic_accuracy(w: &[f64; 3], data: &[([f64; 2], f64)]) -> f64 {
    let right = data.iter().filter(|(x, y)| (w[0] * x[0] + w[1] * x[1] + w[2] > 0.0) == (*y == 1.0)).count();
    right as f64 / data.len() as f64
}

fn predictive(net: &BayesianNetwork, xs: &[[f64; 2]], seed: u64) -> Vec<seqdiscover::uncertainty::UncertaintyRecord> {
    let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    net.sample_predict_many(&refs, 200, &mut rng(seed))
        .unwrap()
        .iter()
        .map(|s| classify_uncertainty(s).unwrap())
        .collect()
}

fn bnn_accuracy(net: &BayesianNetwork, data: &[([f64; 2], f64)], seed: u64) -> f64 {
    let xs: Vec<[f64; 2]> = data.iter().map(|d| d.0).collect();
    let right = predictive(net, &xs, seed)
        .iter()
        .zip(data)
        .filter(|(u, (_, y))| (u.mean > 0.5) == (*y == 1.0))
        .count();
    right as f64 / data.len() as f64
}

fn learning_suite(report: &mut Report) {
    let start = Instant::now();
    let mut r = rng(21);
    let train = blobs(500, &mut r);
    let test = blobs(200, &mut r);

    let w = logistic_regression(&train);
    let (lr_train, lr_test) = (logistic_accuracy(&w, &train), logistic_accuracy(&w, &test));

    let mut net = BayesianNetwork::init(&[2, 16, 2], Head::Classification, 1.0, 22).unwrap();
    let mut data = Dataset::new(2);
    for (x, y) in &train {
        data.push(x, *y).unwrap();
    }
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        epochs: 200,
        batch_size: 50,
        seed: 23,
        ..TrainConfig::default()
    };
    net.train(&data, &cfg).unwrap();
    let (bnn_train, bnn_test) = (bnn_accuracy(&net, &train, 24), bnn_accuracy(&net, &test, 25));

    report.check(
        "BNN accuracy on separable blobs",
        bnn_train >= 0.95 && bnn_test >= 0.90,
        format!("train {bnn_train:.3} (min 0.95), holdout {bnn_test:.3} (min 0.90)"),
    );
    let gap = (bnn_train - lr_train).abs().max((bnn_test - lr_test).abs());
    report.check(
        "BNN matches logistic-regression oracle",
        gap <= 0.05 && lr_train >= 0.95,
        format!("oracle train {lr_train:.3}, holdout {lr_test:.3}; max gap {gap:.3} (tol 0.05)"),
    );

    // Probes on a ring well outside the training cloud.
    let ood: Vec<[f64; 2]> = (0..200)
        .map(|i| {
            let a = i as f64 / 200.0 * std::f64::consts::TAU;
            [8.0 * a.cos(), 8.0 * a.sin()]
        })
        .collect();
    let held: Vec<[f64; 2]> = test.iter().map(|d| d.0).collect();
    let mean_mi = |u: &[seqdiscover::uncertainty::UncertaintyRecord]| u.iter().map(|u| u.model_unc).sum::<f64>() / u.len() as f64;
    let (m_ood, m_in) = (mean_mi(&predictive(&net, &ood, 26)), mean_mi(&predictive(&net, &held, 27)));
    report.check(
        "epistemic uncertainty higher out of distribution",
        m_ood >= 2.0 * m_in,
        format!("mean sigma_m ood {m_ood:.4} vs holdout {m_in:.4}, ratio {:.2} (min 2)", m_ood / m_in),
    );

    report.runtime("learning suite", start.elapsed(), Duration::from_secs(120));
}

// ---- sequential-experiment suite ----

const REPS: usize = 10;
const BASE_SEED: u64 = 1;

fn arm(policy: &str, p: f64, meta: bool) -> RunConfig {
    let mut c = RunConfig::desk();
    c.policy.name = policy.into();
    c.expert.p = p;
    c.expert.meta_visible = meta;
    c
}

fn sequential_suite(report: &mut Report) {
    let start = Instant::now();
    let base = RunConfig::desk();
    let (corpus, table) = base.load_inputs().unwrap();
    let mut log = std::io::stdout().lock();
    let _ = writeln!(log, "     corpus: {} molecules, {} targets", corpus.len(), corpus.target_count());
    drop(log);

    let play = |c: RunConfig| -> Replication {
        let t = Instant::now();
        let rep = replicate(&c, &corpus, table.as_ref(), REPS, BASE_SEED).unwrap();
        let a = &rep.aggregate;
        let mut log = std::io::stdout().lock();
        let _ = writeln!(
            log,
            "     {:24} hit rate {:.4} ± {:.4}  recall {:.3} ± {:.3}  ({:.0} s)",
            a.label,
            a.hit_rate_mean,
            a.hit_rate_std,
            a.recall_mean,
            a.recall_std,
            t.elapsed().as_secs_f64()
        );
        rep
    };
    let random = play(arm("random", 0.0, true));
    let ucb = play(arm("ucb", 0.0, true));
    let hil: Vec<Replication> = [0.0, 0.25, 0.75, 1.0].iter().map(|&p| play(arm("hil", p, true))).collect();
    let blind = play(arm("hil", 0.25, false));
    let human_first = play(arm("human-first", 0.75, true));

    let (h_r, h_u, h_h) = (
        random.aggregate.hit_rate_mean,
        ucb.aggregate.hit_rate_mean,
        hil[2].aggregate.hit_rate_mean,
    );
    report.check(
        "complementarity: HIL(p=0.75) > UCB > Random, HIL >= 1.5x Random",
        h_h > h_u && h_u > h_r && h_h >= 1.5 * h_r,
        format!("hit rates {h_h:.4} > {h_u:.4} > {h_r:.4}; HIL/Random {:.2}", h_h / h_r),
    );

    let recall: Vec<f64> = hil.iter().map(|r| r.aggregate.recall_mean).collect();
    let monotone = recall.windows(2).all(|w| w[1] >= w[0]);
    report.check(
        "knowledge monotonicity over p = 0, 0.25, 0.75, 1",
        monotone && recall[3] >= recall[1] + 0.1,
        format!(
            "recall {:.3} {:.3} {:.3} {:.3}; p=1 minus p=0.25 {:+.3} (min +0.1)",
            recall[0],
            recall[1],
            recall[2],
            recall[3],
            recall[3] - recall[1]
        ),
    );

    let (on, off) = (hil[1].aggregate.recall_mean, blind.aggregate.recall_mean);
    report.check(
        "meta-knowledge ablation: meta off <= 0.8x meta on (p=0.25)",
        off <= 0.8 * on,
        format!("recall off {off:.3} vs on {on:.3}, ratio {:.3} (max 0.8)", off / on),
    );

    let (alg, hf) = (hil[2].aggregate.recall_mean, human_first.aggregate.recall_mean);
    report.check(
        "delegation: algorithm-first beats human-first (p=0.75)",
        alg > hf,
        format!("recall {alg:.3} vs {hf:.3}"),
    );

    let mut all: Vec<&Replication> = vec![&random, &ucb, &blind, &human_first];
    all.extend(hil.iter());
    let budget = base.schedule.budget * base.schedule.rounds;
    let broken = all
        .iter()
        .flat_map(|rep| rep.runs.iter())
        .filter(|s| {
            let ids: Vec<&str> = s.records.iter().flat_map(|r| r.revealed.iter().map(|x| x.id.as_str())).collect();
            ids.len() != budget || ids.iter().collect::<BTreeSet<_>>().len() != budget
        })
        .count();
    let total_runs: usize = all.iter().map(|r| r.runs.len()).sum();
    report.check(
        "budget conservation: B*R distinct ids per run",
        broken == 0,
        format!("{broken} of {total_runs} runs broke the budget"),
    );

    let c = arm("hil", 0.75, true);
    let a = rounds_csv(&run(&c, &corpus, table.as_ref()).unwrap()).unwrap();
    let b = rounds_csv(&run(&c, &corpus, table.as_ref()).unwrap()).unwrap();
    report.check("determinism: identical seeds give byte-identical rounds.csv", a == b, format!("{} bytes", a.len()));

    report.runtime("sequential suite", start.elapsed(), Duration::from_secs(15 * 60));
}

fn main() {
    // Optional positional arguments pick suites by name: math, learning, sequential.
    let picked: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wants = |suite: &str| picked.is_empty() || picked.iter().any(|p| suite.contains(p.as_str()));
    let mut report = Report { failed: 0 };
    if wants("math") {
        math_suite(&mut report);
    }
    if wants("learning") {
        learning_suite(&mut report);
    }
    if wants("sequential") {
        sequential_suite(&mut report);
    }
    if report.failed > 0 {
        println!("{} acceptance criteria failed", report.failed);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
