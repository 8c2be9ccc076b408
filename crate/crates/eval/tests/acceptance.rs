//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::time::Instant;

use kish_core::classifier::{
    encrypt_query, estimate_sigma, kappa_of_run, server_classify, LabeledDatabase, ProtocolParams,
    SigmaDigits,
};
use kish_core::he::WireCipher;
use kish_core::interp::{eval_poly_ps, is_smaller, lagrange_table};
use kish_core::primitives::{coin_toss_at, draw_cut, prob_avg, CoinFn, CoinSpec};
use kish_core::protocol::{decode_message, encode_message, run_server, Duplex, Message};
use kish_core::protocol::{QueryMessage, ResponseMessage};
use kish_core::ring::{base_p_decompose, ceil_sqrt, phi_inverse, RingParams};
use kish_core::{keygen, seed, select_ring_params, Circuit, Evaluator};
use kish_eval::{
    default_dataset_path, leave_one_out_f1, load_wdbc, project_2d, quantize, EvalConfig, Mode,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn wdbc_projection() -> (Vec<[f64; 2]>, Vec<u8>) {
    let raw = load_wdbc(default_dataset_path()).expect("bundled WDBC copy");
    (project_2d(&raw).points, raw.labels)
}

fn plain_f1(points: &[[f64; 2]], labels: &[u8], grid: u64) -> f64 {
    let db = quantize(points, labels, grid).unwrap();
    let cfg = EvalConfig { k: 13, repetitions: 1, seed: 0, mode: Mode::Plain };
    leave_one_out_f1(&db, &cfg).unwrap().f1
}

fn c1_plain_baseline() -> Outcome {
    let (pts, labels) = wdbc_projection();
    let start = Instant::now();
    let scores: Vec<(u64, f64)> =
        [100, 150, 200, 250].iter().map(|&g| (g, plain_f1(&pts, &labels, g))).collect();
    let secs = start.elapsed().as_secs_f64();
    let ok = scores.iter().all(|&(_, f)| (f - 0.98).abs() <= 0.015) && secs <= 60.0;
    let shown: Vec<String> = scores.iter().map(|(g, f)| format!("g{g}={f:.4}")).collect();
    outcome(ok, format!("plain LOO F1 {} in {secs:.1}s", shown.join(" ")))
}

fn c2_secure_accuracy() -> Outcome {
    let (pts, labels) = wdbc_projection();
    let db = quantize(&pts, &labels, 250).unwrap();
    let plain = plain_f1(&pts, &labels, 250);
    let cfg = EvalConfig { k: 13, repetitions: 5, seed: 2024, mode: Mode::Secure };
    let start = Instant::now();
    let report = leave_one_out_f1(&db, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let agree = report.predictions.iter().zip(&labels).filter(|(p, l)| p == l).count();
    let ok = report.f1 >= 0.93 && report.f1 >= 0.97 * plain && secs <= 1800.0;
    outcome(
        ok,
        format!(
            "secure F1 {:.4} (need >= 0.93 and >= {:.4}), plain {plain:.4}, accuracy {:.3}, {secs:.0}s",
            report.f1,
            0.97 * plain,
            agree as f64 / labels.len() as f64
        ),
    )
}

fn wdbc_database(grid: u64, n: usize) -> (LabeledDatabase, RingParams, Vec<u64>) {
    let (pts, labels) = wdbc_projection();
    let gd = quantize(&pts, &labels, grid).unwrap();
    let ring = select_ring_params(grid, 2, n).unwrap();
    let take = |v: &[Vec<u64>]| v.iter().cycle().skip(1).take(n).cloned().collect::<Vec<_>>();
    let lab: Vec<u8> = gd.labels.iter().cycle().skip(1).take(n).copied().collect();
    let db = LabeledDatabase::new(take(&gd.points), lab, &ring).unwrap();
    (db, ring, gd.points[0].clone())
}

fn metered_server(grid: u64, n: usize) -> (u64, u32) {
    let (db, ring, q) = wdbc_database(grid, n);
    let pp = ProtocolParams::new(ring, 13, 1, 7).unwrap();
    let keys = keygen(&ring, 1);
    let enc_q = encrypt_query(&keys.pk, &q).unwrap();
    let c = Circuit::new(&keys.pk).unwrap();
    let (_, m) = c.metered(|c| server_classify(c, &enc_q, &db, &pp).unwrap());
    (m.mult_gates, m.max_depth)
}

fn c3_depth_constancy() -> Outcome {
    let depths: Vec<u32> = [50, 100, 569].iter().map(|&n| metered_server(100, n).1).collect();
    let ok = depths.windows(2).all(|w| w[0] == w[1]);
    outcome(ok, format!("grid 100, max_depth for n=50,100,569: {depths:?}"))
}

fn c4_gate_linearity() -> Outcome {
    let ns = [50usize, 100, 200, 400, 569];
    let gates: Vec<f64> = ns.iter().map(|&n| metered_server(100, n).0 as f64).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let len = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / len, gates.iter().sum::<f64>() / len);
    let slope = xs.iter().zip(&gates).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let icept = my - slope * mx;
    let worst = xs
        .iter()
        .zip(&gates)
        .map(|(x, y)| (y - (slope * x + icept)).abs() / y)
        .fold(0.0, f64::max);
    outcome(
        worst <= 0.05,
        format!("mult_gates = {slope:.2}n + {icept:.1}, worst relative residual {worst:.2e}"),
    )
}

fn c5_interpolation_size() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for modulus in [97u64, 397, 1201] {
        let coord_bound = (modulus - 1) / 4;
        let ring = RingParams::new(modulus, coord_bound, 2, 1).unwrap();
        let keys = keygen(&ring, modulus);
        let ev = Evaluator::new(&keys.pk);
        let mut rng = seed::rng(modulus);
        let values: Vec<i64> = (0..modulus).map(|_| rng.random_range(0..modulus as i64)).collect();
        let table = lagrange_table("random", modulus, |x| values[x as usize]).unwrap();
        let x = keys.pk.encrypt(modulus / 3).unwrap();
        let (_, m) = ev.metered(|ev| eval_poly_ps(ev, &table, &x).unwrap());
        let gate_cap = 3 * ceil_sqrt(modulus);
        let depth_cap = (u64::BITS - (modulus - 1).leading_zeros()) + 4;
        ok &= m.mult_gates <= gate_cap && m.max_depth <= depth_cap;
        parts.push(format!(
            "p={modulus}: gates {}<={gate_cap} depth {}<={depth_cap}",
            m.mult_gates, m.max_depth
        ));
    }
    outcome(ok, parts.join("; "))
}

fn c6_coin_unbiasedness() -> Outcome {
    let ring = select_ring_params(50, 2, 1).unwrap();
    let keys = keygen(&ring, 6);
    let c = Circuit::new(&keys.pk).unwrap();
    let combos: [(u64, CoinFn, u64); 20] = [
        (0, CoinFn::Identity, 10),
        (1, CoinFn::Identity, 10),
        (5, CoinFn::Identity, 10),
        (10, CoinFn::Identity, 10),
        (30, CoinFn::Identity, 96),
        (17, CoinFn::Identity, 50),
        (49, CoinFn::Identity, 98),
        (98, CoinFn::Identity, 569),
        (3, CoinFn::Identity, 7),
        (60, CoinFn::Identity, 61),
        (0, CoinFn::Square, 10),
        (1, CoinFn::Square, 10),
        (3, CoinFn::Square, 10),
        (7, CoinFn::Square, 100),
        (20, CoinFn::Square, 569),
        (23, CoinFn::Square, 569),
        (50, CoinFn::Square, 5690),
        (75, CoinFn::Square, 5690),
        (98, CoinFn::Square, 9800),
        (98, CoinFn::Square, 9604),
    ];
    let tosses = 100_000u64;
    let mut worst = 0.0f64;
    let mut ok = true;
    for (idx, &(x, f, m)) in combos.iter().enumerate() {
        let spec = CoinSpec::new(f, m, 0).unwrap();
        let p = spec.probability(x);
        let enc = keys.pk.encrypt(x).unwrap();
        let mut rng = seed::rng(seed::derive(6, "coin", idx as u64));
        let ones: u64 = (0..tosses)
            .map(|_| {
                let cut = draw_cut(f, m, ring.dist_bound(), &mut rng);
                keys.sk.decrypt(&coin_toss_at(&c, &enc, cut).unwrap()).unwrap()
            })
            .sum();
        let freq = ones as f64 / tosses as f64;
        let se = (p * (1.0 - p) / tosses as f64).sqrt();
        let z = if se == 0.0 {
            if freq == p { 0.0 } else { f64::INFINITY }
        } else {
            (freq - p).abs() / se
        };
        worst = worst.max(z);
        ok &= z <= 3.0;
    }
    outcome(ok, format!("20 combinations x 100k tosses, worst |freq-p|/SE = {worst:.2}"))
}

fn c7_prob_avg_concentration() -> Outcome {
    let ring = select_ring_params(50, 2, 300).unwrap();
    let keys = keygen(&ring, 7);
    let c = Circuit::new(&keys.pk).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    // (n, m): χ = Σ x_i / m
    for (n, m) in [(300usize, 400u64), (300, 200), (300, 100)] {
        let d: Vec<u64> = (0..n as u64).map(|i| (i * 29) % (ring.dist_bound() + 1)).collect();
        let chi = d.iter().sum::<u64>() as f64 / m as f64;
        let xs: Vec<_> = d.iter().map(|&x| keys.pk.encrypt(x).unwrap()).collect();
        let runs = 1000;
        let far = (0..runs)
            .filter(|&r| {
                let spec = CoinSpec::new(CoinFn::Identity, m, seed::derive(m, "pa", r)).unwrap();
                let est = keys.sk.decrypt(&prob_avg(&c, &xs, &spec).unwrap()).unwrap() as f64;
                (est - chi).abs() > 0.5 * chi
            })
            .count();
        let frac = far as f64 / runs as f64;
        let bound = 2.0 * (-chi / 12.0).exp() + 0.01;
        ok &= chi >= 30.0 && frac <= bound;
        parts.push(format!("chi={chi:.1}: {frac:.3}<={bound:.3}"));
    }
    outcome(ok, parts.join("; "))
}

fn c8_sigma_sandwich() -> Outcome {
    let ring = select_ring_params(100, 2, 10).unwrap();
    let keys = keygen(&ring, 8);
    let c = Circuit::new(&keys.pk).unwrap();
    let p = ring.coord_bound();
    let mut rng = seed::rng(8);
    let (mut checked, mut violations) = (0, 0);
    let (mut lo, mut hi) = (f64::MAX, 0.0f64);
    while checked < 500 {
        let mu: u64 = rng.random_range(0..p);
        let mu2: u64 = rng.random_range(mu * mu..p * p);
        if mu2 == mu * mu {
            continue;
        }
        let a = base_p_decompose(mu2, &ring).unwrap();
        let b = base_p_decompose(mu * mu, &ring).unwrap();
        let enc = |v| keys.pk.encrypt(v).unwrap();
        let sd = SigmaDigits {
            mu2_low: enc(a.low),
            mu2_high: enc(a.high),
            musq_low: enc(b.low),
            musq_high: enc(b.high),
        };
        let got = keys.sk.decrypt(&estimate_sigma(&c, &sd).unwrap()).unwrap() as f64;
        let ratio = got / ((mu2 - mu * mu) as f64).sqrt();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        if ratio < 1.0 / 2f64.sqrt() - 1e-12 || ratio > 3.0 / 2f64.sqrt() + 1e-12 {
            violations += 1;
        }
        checked += 1;
    }
    outcome(
        violations == 0,
        format!("500 instances, {violations} violations, ratio range [{lo:.3}, {hi:.3}]"),
    )
}

/// Query at the origin and one point per target distance, so the server
/// sees exactly the given distances.
fn database_with_distances(d: &[u64], ring: &RingParams) -> LabeledDatabase {
    let top = ring.coord_bound() - 1;
    let pts = d.iter().map(|&x| vec![x.min(top), x - x.min(top)]).collect();
    let labels = (0..d.len()).map(|i| (i % 2) as u8).collect();
    LabeledDatabase::new(pts, labels, ring).unwrap()
}

fn c9_kappa_concentration() -> Outcome {
    let (n, k) = (569usize, 13usize);
    let ring = select_ring_params(100, 2, n).unwrap();
    let (mu, sigma) = (100.0, 20.0);
    let d: Vec<u64> = (0..n)
        .map(|i| {
            let z = phi_inverse((i as f64 + 0.5) / n as f64).unwrap();
            (mu + sigma * z).round().clamp(0.0, ring.dist_bound() as f64) as u64
        })
        .collect();
    let db = database_with_distances(&d, &ring);
    let pp = ProtocolParams::new(ring, k, 1, 0).unwrap();
    let runs = 200;
    let kappas: Vec<usize> =
        (0..runs).map(|s| kappa_of_run(&db, &[0, 0], &pp, seed::derive(9, "kappa", s)).unwrap()).collect();
    let inside = kappas.iter().filter(|&&kk| kk > 6 && kk < 20).count();
    let frac = inside as f64 / runs as f64;
    let mut sorted = kappas.clone();
    sorted.sort_unstable();
    outcome(
        frac >= 0.85,
        format!(
            "N(100,20) distances, n=569, k=13: kappa in (6,20) in {frac:.3} of runs (need 0.85), median {}, quartiles {}..{}",
            sorted[runs as usize / 2],
            sorted[runs as usize / 4],
            sorted[3 * runs as usize / 4]
        ),
    )
}

fn c10_comparator_oracle() -> Outcome {
    let ring = RingParams::new(23, 12, 1, 1).unwrap();
    let keys = keygen(&ring, 10);
    let c = Circuit::new(&keys.pk).unwrap();
    let mut mismatches = 0;
    let mut pairs = 0;
    for x in 0..=ring.dist_bound() {
        for y in 0..=ring.dist_bound() {
            let want = u64::from(x < y);
            let ex = keys.pk.encrypt(x).unwrap();
            let ey = keys.pk.encrypt(y).unwrap();
            for got in [
                is_smaller(c.ev(), c.tables(), &ex, &ey).unwrap(),
                is_smaller(c.ev(), c.tables(), &ex, y).unwrap(),
                is_smaller(c.ev(), c.tables(), x, &ey).unwrap(),
            ] {
                mismatches += u32::from(keys.sk.decrypt(&got).unwrap() != want);
            }
            pairs += 1;
        }
    }
    outcome(mismatches == 0, format!("p=23: {pairs} pairs x 3 operand forms, {mismatches} mismatches"))
}

fn wire(rng: &mut impl Rng) -> WireCipher {
    WireCipher { blob: rng.random(), depth: rng.random(), key_id: rng.random() }
}

fn c11_protocol() -> Outcome {
    let mut sizes = Vec::new();
    let mut frames = Vec::new();
    for n in [50usize, 569] {
        let (db, ring, q) = wdbc_database(100, n);
        let pp = ProtocolParams::new(ring, 13, 5, 11).unwrap();
        let client_ring = select_ring_params(100, 2, 1).unwrap();
        let keys = keygen(&client_ring, 11);
        let enc: Vec<WireCipher> =
            encrypt_query(&keys.pk, &q).unwrap().iter().map(|c| c.to_wire()).collect();
        let query =
            encode_message(&Message::Query(QueryMessage { ring: client_ring, pk: keys.pk.to_bytes(), enc_q: enc }));
        let mut stream = Duplex { reader: &query[..], writer: Vec::new() };
        let served = run_server(&mut stream, &db, &pp).unwrap();
        let mut rd = &stream.writer[..];
        let mut count = 0;
        while let Some(m) = kish_core::protocol::read_message(&mut rd).unwrap() {
            assert!(matches!(m, Message::Response(_)));
            count += 1;
        }
        frames.push((served, count));
        sizes.push((query.len(), stream.writer.len()));
    }
    let mut rng = seed::rng(1111);
    let mut codec_failures = 0;
    for _ in 0..1000 {
        let msg = match rng.random_range(0..3) {
            0 => {
                let ring = select_ring_params(rng.random_range(2..3000), rng.random_range(1..4), rng.random_range(1..10_000)).unwrap();
                let pk = (0..rng.random_range(0..20)).map(|_| rng.random()).collect();
                let enc_q = (0..rng.random_range(0..6)).map(|_| wire(&mut rng)).collect();
                Message::Query(QueryMessage { ring, pk, enc_q })
            }
            1 => Message::Response(ResponseMessage {
                enc_class: (0..rng.random_range(0..9)).map(|_| wire(&mut rng)).collect(),
            }),
            _ => Message::Error((0..rng.random_range(0..40)).map(|_| rng.random_range('a'..='z')).collect()),
        };
        if decode_message(&encode_message(&msg)).ok().as_ref() != Some(&msg) {
            codec_failures += 1;
        }
    }
    let ok = sizes[0] == sizes[1] && frames.iter().all(|&f| f == (1, 1)) && codec_failures == 0;
    outcome(
        ok,
        format!(
            "query/response bytes n=50 {:?}, n=569 {:?}; frames {frames:?}; codec failures {codec_failures}/1000",
            sizes[0], sizes[1]
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("plaintext kNN baseline", c1_plain_baseline),
        ("secure-path accuracy", c2_secure_accuracy),
        ("depth constancy", c3_depth_constancy),
        ("gate linearity in n", c4_gate_linearity),
        ("interpolation size bound", c5_interpolation_size),
        ("coin toss unbiasedness", c6_coin_unbiasedness),
        ("ProbAvg concentration", c7_prob_avg_concentration),
        ("sigma sandwich", c8_sigma_sandwich),
        ("kappa concentration", c9_kappa_concentration),
        ("exhaustive comparator", c10_comparator_oracle),
        ("protocol round-trip", c11_protocol),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let r = run();
        failed += usize::from(!r.pass);
        println!(
            "criterion {:>2} {:<26} {}  {} [{:.1}s]",
            i + 1,
            name,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
