//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use diqpq::analytics::{
    all_cells, biased_success_probability, chsh_win_probability, conditional_table, figure1_curve,
    honest_success_probability, uniform_theta_grid, write_curve_csv, ProtocolAngles,
};
use diqpq::bounds::{
    chernoff_delta, chernoff_tail_bound, empirical_chernoff_tail, empirical_partition_deviation,
    exact_partition_tail, serfling_nu, subset_deviation_bound, BoundsParams,
};
use diqpq::chsh::run_local_test;
use diqpq::qpq::{private_query, run_full_protocol, run_keygen, AliceStrategy, ProtocolConfig, ProtocolOutcome};
use diqpq::quantum::{basis_from_angle, MeasurementBasis, SourceModel};
use diqpq::{Bits, StreamKey};
use rand::Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn sigma(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

fn standard() -> (SourceModel, ProtocolAngles) {
    (
        SourceModel::honest(FRAC_PI_2).unwrap(),
        ProtocolAngles::new(FRAC_PI_2, FRAC_PI_4, 3.0 * FRAC_PI_4).unwrap(),
    )
}

const ROUNDS: usize = 1_000_000;

fn honest_rates() -> Outcome {
    let key = StreamKey::new(101);
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, theta) in [FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8, FRAC_PI_2].into_iter().enumerate() {
        let r = run_keygen(ROUNDS, 0.0, &SourceModel::honest(theta).unwrap(), &AliceStrategy::Honest, &key.child(i as u64))
            .unwrap();
        let p = theta.sin().powi(2) / 2.0;
        ok &= (honest_success_probability(theta) - p).abs() < 1e-15;
        let z = (r.success_rate() - p) / sigma(p, ROUNDS as f64);
        ok &= z.abs() <= 3.0 && r.conclusive_count == r.correct_count;
        detail.push(format!("θ={theta:.4} rate={:.6} expected={p:.6} z={z:+.2}", r.success_rate()));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 10.0;
    detail.push(format!("runtime {secs:.2}s"));
    (ok, detail.join("; "))
}

fn attack_rates(skewed: bool, seed: u64) -> Outcome {
    let key = StreamKey::new(seed);
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, eps) in [0.1, 0.25, 0.4].into_iter().enumerate() {
        let source = SourceModel::new(FRAC_PI_2, if skewed { eps } else { 0.0 }).unwrap();
        let r = run_keygen(ROUNDS, 0.0, &source, &AliceStrategy::biased(eps).unwrap(), &key.child(i as u64)).unwrap();
        let p = if skewed { 0.5 + 2.0 * eps * eps } else { 0.5 };
        if skewed {
            ok &= (biased_success_probability(FRAC_PI_2, eps) - p).abs() < 1e-15;
        }
        let z = (r.success_rate() - p) / sigma(p, ROUNDS as f64);
        ok &= z.abs() <= 3.0;
        detail.push(format!("ε={eps} rate={:.6} expected={p:.6} z={z:+.2}", r.success_rate()));
    }
    (ok, detail.join("; "))
}

fn table_cells() -> Outcome {
    let (source, angles) = standard();
    let r = run_local_test(ROUNDS, &source, &angles, 0.0, &StreamKey::new(104)).unwrap();
    let table = conditional_table(&angles);
    let mut worst: f64 = 0.0;
    for (x, y, a, b) in all_cells() {
        let p = table.get(x, y, a, b);
        let f = r.conditional_frequency(x, y, a, b).unwrap();
        worst = worst.max(((f - p) / sigma(p, r.input_count(x, y) as f64)).abs());
    }
    (worst <= 3.0, format!("16 cells, max |z| = {worst:.2}"))
}

fn closed_form_win(theta: f64, psi1: f64, psi2: f64) -> f64 {
    (theta.sin() * (psi1.sin() + psi2.sin()) + psi1.cos() - psi2.cos()) / 8.0 + 0.5
}

/// Win probability from the two-qubit state by the Born rule.
fn born_rule_win(theta: f64, psi1: f64, psi2: f64) -> f64 {
    let state = SourceModel::honest(theta).unwrap().state();
    let mut total = 0.0;
    for x in [false, true] {
        let first = if x { MeasurementBasis::hadamard() } else { MeasurementBasis::computational() };
        for (y, psi) in [(false, psi1), (true, psi2)] {
            let p = state.joint_probabilities(&first, &basis_from_angle(psi).unwrap());
            let agree = p[0] + p[3];
            total += 0.25 * if x && y { 1.0 - agree } else { agree };
        }
    }
    total
}

fn figure1_output(out: &Path) -> Outcome {
    let (source, angles) = standard();
    let r = run_local_test(ROUNDS, &source, &angles, 0.0, &StreamKey::new(105)).unwrap();
    let target = (PI / 8.0).cos().powi(2);
    let z = (r.win_rate - target) / sigma(target, ROUNDS as f64);
    let mut ok = z.abs() <= 3.0 && (chsh_win_probability(&angles) - 0.853553).abs() < 1e-6;
    let mut detail = vec![format!("win rate {:.6} vs cos²(π/8)={target:.6} z={z:+.2}", r.win_rate)];

    // Series against the closed form, and the CLI files against its
    // six-decimal rendering.
    let status = Command::new(env!("CARGO_BIN_EXE_diqpq"))
        .arg("--out-dir")
        .arg(out)
        .args(["figure1", "--pairs", "pi/4:3pi/4,3pi/16:13pi/16,9pi/32:23pi/32", "--grid", "256"])
        .output()
        .unwrap();
    ok &= status.status.success();
    let grid = uniform_theta_grid(256);
    let mut worst: f64 = 0.0;
    for (i, (psi1, psi2)) in [(PI / 4.0, 3.0 * PI / 4.0), (3.0 * PI / 16.0, 13.0 * PI / 16.0), (9.0 * PI / 32.0, 23.0 * PI / 32.0)]
        .into_iter()
        .enumerate()
    {
        let curve = figure1_curve(psi1, psi2, &grid).unwrap();
        for p in &curve {
            worst = worst
                .max((p.win_probability - closed_form_win(p.theta, psi1, psi2)).abs())
                .max((p.win_probability - born_rule_win(p.theta, psi1, psi2)).abs());
        }
        ok &= curve.windows(2).all(|w| w[1].win_probability > w[0].win_probability);

        let mut rendered = String::from("theta,win_probability\n");
        for &t in &grid {
            rendered.push_str(&format!("{t:.6},{:.6}\n", closed_form_win(t, psi1, psi2)));
        }
        let mut buf = Vec::new();
        write_curve_csv(&curve, &mut buf).unwrap();
        let file = fs::read_to_string(out.join(format!("figure1_{i}.csv"))).unwrap_or_default();
        ok &= file == rendered && buf == rendered.as_bytes();
    }
    ok &= worst <= 1e-10;
    detail.push(format!("3 curves × 256 points, max series error vs closed form and Born rule {worst:.1e}, CSV files equal 6-decimal closed form"));
    (ok, detail.join("; "))
}

fn deviation_formulas() -> Outcome {
    let delta = chernoff_delta(&BoundsParams::new(0.1, 1_000_000, 1e-9, 0.5).unwrap());
    let nu = serfling_nu(&BoundsParams::new(0.5, 10_000, 0.5, 1e-6).unwrap());
    // 50-digit evaluations
    let (delta_ref, nu_ref) = (0.010_179_210_636_622_667, 0.052_570_473_956_539_27);
    let ok = (delta - 0.010180).abs() <= 1e-6
        && (nu - 0.052570).abs() <= 1e-6
        && (delta - delta_ref).abs() <= 1e-15
        && (nu - nu_ref).abs() <= 1e-15;
    (ok, format!("δ={delta:.12} (ref {delta_ref}), ν={nu:.12} (ref {nu_ref})"))
}

fn brute_force_tail(flags: &[bool], t: usize, deviation: f64) -> (u128, u128) {
    let n = flags.len();
    let total_ones = flags.iter().filter(|&&f| f).count() as f64;
    let (mut exceed, mut total) = (0, 0);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != t {
            continue;
        }
        total += 1;
        let s = (0..n).filter(|&i| mask >> i & 1 == 1 && flags[i]).count() as f64;
        if (s / t as f64 - (total_ones - s) / (n - t) as f64).abs() >= deviation {
            exceed += 1;
        }
    }
    (exceed, total)
}

fn tail_bounds() -> Outcome {
    let (source, angles) = standard();
    let p = chsh_win_probability(&angles);
    let mut detail = Vec::new();

    let tail = empirical_chernoff_tail(1_000, 1_000, p, 0.05, &source, &angles, &StreamKey::new(107)).unwrap();
    let bound = chernoff_tail_bound(0.05, 1_000.0);
    let mut ok = tail.tail <= bound + 3.0 * tail.sigma_at(bound);
    let zero = empirical_chernoff_tail(100, 1_000, p, 0.0, &source, &angles, &StreamKey::new(108)).unwrap();
    let one = empirical_chernoff_tail(100, 1_000, p, 1.0, &source, &angles, &StreamKey::new(108)).unwrap();
    ok &= zero.tail == 1.0 && one.tail == 0.0;
    detail.push(format!("Chernoff tail {:.4} ≤ {bound:.4}+3σ", tail.tail));

    let mut rng = StreamKey::new(109).rng();
    let flags: Vec<bool> = (0..1_000).map(|_| rng.random_bool(0.85)).collect();
    let split = empirical_partition_deviation(&flags, 0.5, 0.01, 10_000, &StreamKey::new(110)).unwrap();
    ok &= split.tail <= 0.01 + 3.0 * split.sigma_at(0.01);
    let all_ones = empirical_partition_deviation(&[true; 1_000], 0.5, 0.01, 1_000, &StreamKey::new(111)).unwrap();
    ok &= all_ones.tail == 0.0;
    detail.push(format!("split tail {:.4} ≤ 0.01+3σ", split.tail));

    let mut rng = StreamKey::new(112).rng();
    let mut checked = 0;
    for _ in 0..50 {
        let flags: Vec<bool> = (0..10).map(|_| rng.random_bool(0.7)).collect();
        for eps in [0.5, 0.1, 0.01] {
            let nu = subset_deviation_bound(10.0, 5.0, eps);
            let exact = exact_partition_tail(&flags, 5, nu).unwrap();
            ok &= (exact.exceeding, exact.total) == brute_force_tail(&flags, 5, nu);
            checked += 1;
        }
    }
    detail.push(format!("n=10 exact tail equals enumeration over C(10,5) in {checked} cases"));
    (ok, detail.join("; "))
}

fn asymptotics() -> Outcome {
    let ns = [10_000u64, 100_000, 1_000_000, 10_000_000, 100_000_000];
    let values: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let p = BoundsParams::new(0.5, n, 1e-6, 1e-6).unwrap();
            (chernoff_delta(&p), serfling_nu(&p))
        })
        .collect();
    let decreasing = values.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1);
    let (d8, nu8) = values[4];
    (
        decreasing && d8 < 1e-3 && nu8 < 1e-3,
        format!("δ(1e8)={d8:.3e}, ν(1e8)={nu8:.3e}, decreasing over 1e4..1e8"),
    )
}

fn end_to_end() -> Outcome {
    let (source, angles) = standard();
    let n = 100_000;
    let slack = chernoff_delta(&BoundsParams::new(0.5, n as u64, 1e-6, 0.5).unwrap());
    let config = ProtocolConfig {
        n,
        gamma: 0.5,
        source,
        angles,
        strategy: AliceStrategy::Honest,
        k: 2,
        loss_probability: 0.0,
        slack_delta: slack,
    };
    let len = config.max_final_key_length().unwrap();
    let key = StreamKey::new(113);
    let (mut aborted, mut completed, mut correct) = (0, 0, 0);
    for run in 0..100u64 {
        let mut rng = key.child(run).child(0).rng();
        let database: Bits = (0..len).map(|_| rng.random_bool(0.5)).collect();
        match run_full_protocol(&config, &database, &key.child(run).child(1)).unwrap() {
            ProtocolOutcome::Aborted { .. } => aborted += 1,
            ProtocolOutcome::Completed { query, alice_bit_correct, .. } => {
                completed += 1;
                if alice_bit_correct && query.recovered_bit == database.as_slice()[query.target_index] {
                    correct += 1;
                }
            }
            ProtocolOutcome::Incomplete { .. } => {}
        }
    }

    let mut rng = StreamKey::new(114).rng();
    let final_key: Bits = (0..8).map(|_| rng.random_bool(0.5)).collect();
    let mut exhaustive = 0;
    for db in 0u32..256 {
        let database: Bits = (0..8).map(|t| db >> t & 1 == 1).collect();
        for i in 0..8 {
            for j in 0..8 {
                let q = private_query(&database, &final_key, (j, final_key.as_slice()[j]), i).unwrap();
                if q.recovered_bit == database.as_slice()[i] {
                    exhaustive += 1;
                }
            }
        }
    }
    (
        aborted == 0 && completed == 100 && correct == 100 && exhaustive == 8 * 8 * 256,
        format!("100 runs: {aborted} aborted, {completed} completed, {correct} correct; N=8 exhaustive {exhaustive}/16384"),
    )
}

fn determinism(scratch: &Path) -> Outcome {
    let commands: [&[&str]; 8] = [
        &["chsh", "--rounds", "200000", "--seed", "7"],
        &["qpq", "--theta", "pi/3", "--source-epsilon", "0.2", "--bias", "0.2", "--loss", "0.1", "--k", "2", "--rounds", "200000", "--seed", "7", "--emit-keys"],
        &["attack", "--rounds", "100000", "--seed", "7"],
        &["protocol", "--n", "100000", "--seed", "7"],
        &["figure1"],
        &["table1", "--rounds", "200000", "--seed", "7"],
        &["bounds", "--gamma", "0.5", "--n", "10000", "--eps-chsh", "1e-6", "--eps-qpq", "1e-6"],
        &["verify", "--rounds", "50000", "--seed", "7"],
    ];
    let mut ok = true;
    let mut files = 0;
    for (c, args) in commands.iter().enumerate() {
        let dirs = [scratch.join(format!("det{c}a")), scratch.join(format!("det{c}b"))];
        let mut codes = Vec::new();
        for d in &dirs {
            fs::create_dir_all(d).unwrap();
            let out = Command::new(env!("CARGO_BIN_EXE_diqpq")).arg("--out-dir").arg(d).args(*args).output().unwrap();
            codes.push(out.status.code());
        }
        ok &= codes[0] == codes[1] && codes[0] == Some(0);
        let mut names: Vec<_> = fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        ok &= !names.is_empty();
        for name in names {
            ok &= fs::read(dirs[0].join(&name)).ok() == fs::read(dirs[1].join(&name)).ok();
            files += 1;
        }
    }
    (ok, format!("{} commands, {files} files byte-identical across reruns", commands.len()))
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let fig_dir = scratch.path().join("figure1");
    fs::create_dir_all(&fig_dir).unwrap();

    let criteria: Vec<Criterion> = vec![
        ("honest success rate sin²θ/2", Box::new(honest_rates)),
        ("biased attack on skewed source", Box::new(|| attack_rates(true, 102))),
        ("biased attack on honest source gains nothing", Box::new(|| attack_rates(false, 103))),
        ("conditional outcome table", Box::new(table_cells)),
        ("CHSH win rate and curve data", Box::new(move || figure1_output(&fig_dir))),
        ("δ and ν closed forms", Box::new(deviation_formulas)),
        ("Chernoff and split-sample tails", Box::new(tail_bounds)),
        ("δ, ν vanish with n", Box::new(asymptotics)),
        ("full protocol end to end", Box::new(end_to_end)),
        ("CLI determinism", Box::new({
            let p = scratch.path().to_path_buf();
            move || determinism(&p)
        })),
    ];

    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        if !ok {
            failures += 1;
        }
        println!("criterion {:>2} {}: {name} | {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
