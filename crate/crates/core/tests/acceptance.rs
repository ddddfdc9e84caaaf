//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary so every criterion reports even when an earlier one
//! fails. Exits non-zero when a criterion fails unless it is listed in
//! `EXPECTED_FAILURES` together with the reason it cannot hold.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use hippocampus::cogmap::{map_to_json, CognitiveMap, CognitiveState, MapConfig, TransitionEdge, TrustMode};
use hippocampus::dynamics::{perturb, token_entropy, TokenDistribution};
use hippocampus::embed::{Embedding, StubEmbedder};
use hippocampus::engine::{
    self, extract_number, majority_vote, solve, Candidate, GenerationBackend, GenerationRequest, LearnConfig,
    ScenarioEntry, ScriptedBackend, SolveConfig,
};
use hippocampus::navigator::{
    self, edge_label, extract_training_set, hint_text, InterventionAction, TrainConfig, HINT_PREFIX,
};
use hippocampus::simtraj::{self, SimConfig, SimTask, TaskConfig};
use hippocampus::topo;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot hold as stated, with the reason.
const EXPECTED_FAILURES: &[(&str, &str)] = &[(
    "2",
    "a step joins a state only when cos >= tau, so a higher tau can only split more; \
     state counts grow with tau, the opposite of the stated ordering",
)];

struct Outcome {
    pass: bool,
    /// The only failing part is the one named in `EXPECTED_FAILURES`.
    known_issue_only: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        known_issue_only: false,
        detail: detail.into(),
    }
}

fn basis(d: usize, i: usize) -> Embedding<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    Embedding::new(v).unwrap()
}

fn trust_dynamics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 6;
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let mut map = CognitiveMap::<f64>::new(MapConfig::new(d)).unwrap();
        let mut visits = [0u64; 6];
        let mut successes = [0u64; 6];
        for _ in 0..rng.random_range(1..30) {
            let i = rng.random_range(0..d);
            if rng.random_bool(0.5) {
                let a = map.assign_state(&basis(d, i), "s").unwrap();
                visits[a.state] += 1;
            } else if i < map.num_states() {
                let ok = rng.random_bool(0.5);
                if map.update_trust(i, ok).is_ok() {
                    successes[i] += u64::from(ok);
                }
            }
        }
        for s in map.states() {
            let want = if visits[s.id] == 0 {
                0.0
            } else {
                successes[s.id] as f64 / visits[s.id] as f64
            };
            if s.trust != want || s.visits != visits[s.id] || s.successes != successes[s.id] {
                mismatches += 1;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t0: f64 = rng.random();
        let k = rng.random_range(0..=100);
        let mut map = CognitiveMap::<f64>::new(MapConfig::new(2).with_trust_mode(TrustMode::Ema)).unwrap();
        map.assign_state(&basis(2, 0), "s").unwrap();
        let mut t = t0;
        for _ in 0..k {
            t = hippocampus::cogmap::ema_step(t, 0.9, true);
        }
        let closed = 1.0 - 0.9f64.powi(k) * (1.0 - t0);
        worst = worst.max((t - closed).abs());
    }
    check(
        mismatches == 0 && worst <= 1e-12,
        format!("static mismatches {mismatches}/10000 sequences, max EMA deviation {worst:.2e}"),
    )
}

fn clustering() -> Outcome {
    let stub = StubEmbedder::new(64);
    let taus = [0.55, 0.75, 0.85];
    let mut ordered = 0;
    let mut examples = Vec::new();
    let mut deterministic = true;
    for seed in 0..50 {
        let cfg = SimConfig {
            seed,
            n_trajectories: 60,
            vortex_size: 3,
            paraphrase_noise: 0.25,
            ..SimConfig::default()
        };
        let records = simtraj::generate(&cfg).unwrap();
        let build = |tau: f64| {
            let mut m = CognitiveMap::<f64>::new(MapConfig::new(64).with_tau(tau)).unwrap();
            for r in &records {
                m.ingest_trajectory(&r.steps, r.outcome, &stub).unwrap();
            }
            m
        };
        let counts: Vec<usize> = taus.iter().map(|&t| build(t).num_states()).collect();
        if counts[0] >= counts[1] && counts[1] >= counts[2] {
            ordered += 1;
        } else if examples.len() < 2 {
            examples.push(format!("seed {seed}: {counts:?}"));
        }
        let a = map_to_json(&build(0.75)).unwrap();
        let again = simtraj::generate(&cfg).unwrap();
        let mut m = CognitiveMap::<f64>::new(MapConfig::new(64)).unwrap();
        for r in &again {
            m.ingest_trajectory(&r.steps, r.outcome, &stub).unwrap();
        }
        deterministic &= a == map_to_json(&m).unwrap();
    }
    let mut outcome = check(
        ordered == 50 && deterministic,
        format!(
            "ordering count(0.55) >= count(0.75) >= count(0.85) held on {ordered}/50 corpora (e.g. {}); byte-exact reruns: {deterministic}",
            examples.join(", ")
        ),
    );
    outcome.known_issue_only = deterministic && ordered < 50;
    outcome
}

fn entropy_perturbation() -> Outcome {
    let mut worst: f64 = 0.0;
    let u2 = TokenDistribution::<f64>::uniform(2).unwrap();
    let u4 = TokenDistribution::<f64>::uniform(4).unwrap();
    let point = TokenDistribution::<f64>::new(vec![(0, 1.0)]).unwrap();
    worst = worst.max((token_entropy(&u2) - 1.0).abs());
    worst = worst.max((token_entropy(&u4) - 2.0).abs());
    worst = worst.max(token_entropy(&point).abs());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut monotone_violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..12);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let dist = TokenDistribution::new(raw.iter().enumerate().map(|(i, p)| (i as u32, p / sum)).collect()).unwrap();
        let id = perturb(&dist, 1.0).unwrap();
        for (a, b) in id.probs().iter().zip(dist.probs()) {
            worst = worst.max((a.1 - b.1).abs());
        }
        let t1 = rng.random_range(0.3..3.0);
        let t2 = rng.random_range(0.3..3.0);
        let twice = perturb(&perturb(&dist, t1).unwrap(), t2).unwrap();
        let once = perturb(&dist, t1 * t2).unwrap();
        for (a, b) in twice.probs().iter().zip(once.probs()) {
            worst = worst.max((a.1 - b.1).abs());
        }
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let h_lo = token_entropy(&perturb(&dist, lo).unwrap());
        let h_hi = token_entropy(&perturb(&dist, hi).unwrap());
        if h_lo > h_hi + 1e-9 {
            monotone_violations += 1;
        }
    }
    check(
        worst <= 1e-9 && monotone_violations == 0,
        format!("max deviation {worst:.2e}, monotonicity violations {monotone_violations}/1000"),
    )
}

fn brute_sccs(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b) in edges {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &comp {
            seen[j] = true;
        }
        out.push(comp);
    }
    out
}

fn stat_map(stats: &[(u64, u64)], edges: &[(usize, usize, u64, u64)]) -> CognitiveMap<f64> {
    let d = stats.len().max(1);
    let states = stats
        .iter()
        .enumerate()
        .map(|(id, &(visits, successes))| CognitiveState {
            id,
            centroid: basis(d, id),
            visits,
            successes,
            trust: successes as f64 / visits as f64,
            exemplar: format!("state {id}"),
        })
        .collect();
    let edges = edges
        .iter()
        .map(|&(src, dst, success, total)| TransitionEdge { src, dst, success, total })
        .collect();
    CognitiveMap::from_parts(MapConfig::new(d), states, edges).unwrap()
}

fn topology() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut scc_mismatch = 0;
    let mut nest_fail = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=25);
        let m = rng.random_range(0..=3 * n);
        let mut edges = BTreeSet::new();
        for _ in 0..m {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                edges.insert((a, b));
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        if topo::strongly_connected_components(n, &edges) != brute_sccs(n, &edges) {
            scc_mismatch += 1;
        }
        let stats: Vec<(u64, u64)> = (0..n).map(|_| (10, rng.random_range(0..=10))).collect();
        let full: Vec<_> = edges
            .iter()
            .map(|&(a, b)| {
                let t = rng.random_range(1..8);
                (a, b, rng.random_range(0..=t), t)
            })
            .collect();
        let map = stat_map(&stats, &full);
        let s2 = topo::skeleton(&map, 2).unwrap();
        let s3 = topo::skeleton(&map, 3).unwrap();
        let e2: BTreeSet<_> = s2.edges.iter().collect();
        if !s3.edges.iter().all(|e| e2.contains(e)) || !s3.nodes.is_subset(&s2.nodes) {
            nest_fail += 1;
        }
    }
    // visits [10, 20, 30, 40] → lower median 20; strict on both sides
    let map = stat_map(&[(10, 1), (20, 2), (30, 15), (40, 19), (40, 4)], &[]);
    let blue = topo::blue_nodes(&map);
    let blue_ok = blue == vec![3, 4];
    check(
        scc_mismatch == 0 && nest_fail == 0 && blue_ok,
        format!("SCC mismatches {scc_mismatch}/200, skeleton nesting failures {nest_fail}, blue nodes {blue:?}"),
    )
}

fn navigator_check() -> Outcome {
    let mut label_errors = 0;
    let mut grid = Vec::new();
    for total in 1..=40u64 {
        for success in 0..=total {
            let r = Ratio::new(success, total);
            let want = if total < 5 {
                None
            } else if r >= Ratio::new(7, 10) {
                Some(true)
            } else if r <= Ratio::new(3, 10) {
                Some(false)
            } else {
                None
            };
            if edge_label(success, total) != want {
                label_errors += 1;
            }
            grid.push((success, total, want));
        }
    }
    // a star map holding a sample of the grid as edges
    let sample: Vec<_> = grid.iter().step_by(7).take(60).collect();
    let n = sample.len() + 1;
    let stats = vec![(10, 5); n];
    let edges: Vec<_> = sample
        .iter()
        .enumerate()
        .map(|(i, &&(s, t, _))| (0, i + 1, s, t))
        .collect();
    let map = stat_map(&stats, &edges);
    let set = extract_training_set(&map);
    let want_rows = sample.iter().filter(|g| g.2.is_some()).count();
    let want_pos = sample.iter().filter(|g| g.2 == Some(true)).count();
    let extraction_ok = set.rows.len() == want_rows && set.positives() == want_pos;

    let started = Instant::now();
    let data = simtraj::separable_training_set::<f64>(384, 200, 0.3, 5);
    let cfg = TrainConfig::default();
    let a = navigator::train(&data, &cfg).unwrap();
    let b = navigator::train(&data, &cfg).unwrap();
    let elapsed = started.elapsed();
    check(
        label_errors == 0 && extraction_ok && a.train_accuracy == 1.0 && a == b,
        format!(
            "label grid errors {label_errors}/{}, extraction ok {extraction_ok}, accuracy {} on {} rows, bit-identical rerun {}, training {:.1?}",
            grid.len(),
            a.train_accuracy,
            data.rows.len(),
            a == b,
            elapsed
        ),
    )
}

const RELIABLE: &str = "alpha beta gamma delta epsilon";
const MIDDLE: &str = "middle ground ordinary routine step";
const STUCK: &str = "stuck loop again same thing";

fn trust_map(stub: &StubEmbedder) -> CognitiveMap<f64> {
    let states = [(RELIABLE, 0.8), (MIDDLE, 0.5), (STUCK, 0.2)]
        .iter()
        .enumerate()
        .map(|(id, (text, trust))| CognitiveState {
            id,
            centroid: stub.embed_one(text).unwrap(),
            visits: 10,
            successes: (trust * 10.0) as u64,
            trust: *trust,
            exemplar: (*text).to_owned(),
        })
        .collect();
    CognitiveMap::from_parts(MapConfig::new(64), states, vec![]).unwrap()
}

struct Counting<B> {
    inner: B,
    calls: std::sync::atomic::AtomicUsize,
}

impl<B: GenerationBackend> GenerationBackend for Counting<B> {
    fn generate(&self, r: &GenerationRequest<'_>) -> Result<engine::Generation, engine::BackendError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.generate(r)
    }
}

fn algorithm_one() -> Outcome {
    let stub = StubEmbedder::new(64);
    let map = trust_map(&stub);
    let cfg = |p| SolveConfig::<f64> {
        intervention_prob: p,
        ..SolveConfig::default()
    };
    let hint_backend = ScriptedBackend::new(vec![
        ScenarioEntry::new(format!("{MIDDLE}\n\n#### 1")).when_prompt_contains(HINT_PREFIX),
        ScenarioEntry::new(format!("{RELIABLE}\n\n#### 2")),
    ]);
    let r = solve("q", &map, None, &hint_backend, &stub, &cfg(0.5)).unwrap();
    let hint_ok = r.rounds[0].action
        == InterventionAction::Hint {
            hint_text: hint_text(RELIABLE),
            target: Some(0),
        }
        && r.candidates.iter().all(|c| c.round != 1);
    let perturb_backend = ScriptedBackend::new(vec![
        ScenarioEntry::new(format!("{MIDDLE}\n\n#### 3")).temperature_band(1.5, 1.5),
        ScenarioEntry::new(format!("{STUCK}\n\n#### 4")),
    ]);
    let r = solve("q", &map, None, &perturb_backend, &stub, &cfg(1.0)).unwrap();
    let perturb_ok = r.rounds[0].action == InterventionAction::Perturb { temperature: 1.5 }
        && r.rounds[1].temperature == 1.5
        && r.candidates.iter().all(|c| c.round != 1);

    let c = |a: &str, t: f64, r: usize| Candidate::new(format!("work\n#### {a}"), t, r);
    let sets: Vec<(Vec<Candidate<f64>>, &str)> = vec![
        (vec![c("42", 0.5, 1), c("42", 0.5, 2), c("17", 0.5, 3)], "42"),
        (vec![c("42", 0.4, 1), c("17", 0.9, 2)], "17"),
        (vec![c("42.0000000", 0.3, 1), c("42.00000001", 0.3, 2), c("7", 0.9, 3)], "42.0000000"),
        (vec![c("5", 0.5, 2), c("6", 0.5, 1)], "6"),
        (vec![c("1", 0.1, 1)], "1"),
        (vec![c("3", 0.9, 1), c("3", 0.1, 2), c("3", 0.5, 3)], "3"),
        (vec![c("8", 0.6, 1), c("9", 0.6, 2), c("9", 0.2, 3), c("8", 0.5, 4)], "8"),
        (vec![c("8", 0.5, 1), c("9", 0.6, 2), c("9", 0.2, 3), c("8", 0.5, 4)], "9"),
        (vec![c("10", 0.3, 1), c("20", 0.3, 2), c("30", 0.35, 3)], "30"),
        (vec![c("-4", 0.5, 1), c("-4.00005", 0.5, 2), c("4", 0.9, 3)], "-4"),
        (vec![c("1,000", 0.5, 1), c("1000", 0.5, 2), c("999", 0.5, 3)], "1,000"),
        (vec![c("0.5", 0.5, 1), c(".5", 0.5, 2), c("5", 0.99, 3)], "0.5"),
        (vec![c("2", 0.7, 5), c("3", 0.7, 4)], "3"),
        (vec![c("11", 0.2, 1), c("12", 0.2, 2), c("12", 0.1, 3), c("11", 0.3, 4)], "11"),
        (vec![c("100", 0.0, 1), c("100.0001", 0.0, 2), c("100.0002", 1.0, 3)], "100"),
        (vec![c("6", 0.4, 1), c("7", 0.4, 2), c("7", 0.4, 3), c("6", 0.4, 4), c("8", 1.0, 5)], "6"),
        (vec![c("13", 0.5, 3), c("14", 0.5, 1), c("13", 0.5, 2)], "13"),
        (vec![c("21", 0.9, 1), c("22", 0.1, 2), c("22", 0.1, 3)], "22"),
        (vec![c("+5", 0.5, 1), c("5", 0.5, 2), c("6", 0.5, 3)], "+5"),
        (vec![c("0", 0.5, 1), c("-0", 0.5, 2), c("0.00001", 0.5, 3), c("1", 1.0, 4)], "0"),
    ];
    let mut vote_errors = Vec::new();
    for (i, (set, want)) in sets.iter().enumerate() {
        let got = set[majority_vote(set).unwrap()].extracted_answer.to_string();
        if got != *want {
            vote_errors.push(format!("set {i}: {got} != {want}"));
        }
    }

    let mut max_calls = 0;
    let mut bound_ok = true;
    for (t_max, backend) in [(5, &hint_backend), (5, &perturb_backend), (3, &perturb_backend), (8, &hint_backend)] {
        let counting = Counting {
            inner: backend.clone(),
            calls: Default::default(),
        };
        let cfg = SolveConfig {
            t_max,
            ..cfg(1.0)
        };
        solve("q", &map, None, &counting, &stub, &cfg).unwrap();
        let calls = counting.calls.load(std::sync::atomic::Ordering::SeqCst);
        max_calls = max_calls.max(calls);
        bound_ok &= calls <= 2 * t_max;
    }
    check(
        hint_ok && perturb_ok && vote_errors.is_empty() && bound_ok,
        format!(
            "hint branch {hint_ok}, perturb branch {perturb_ok}, vote sets {}/20 {:?}, calls within 2*T_max {bound_ok} (max {max_calls})",
            20 - vote_errors.len(),
            vote_errors
        ),
    )
}

fn evaluation() -> Outcome {
    let stub = StubEmbedder::new(32);
    let eval = |p: &str, g: &str| engine::evaluate_answer::<f64, _>(p, g, &stub).unwrap();
    let boundary = [
        ("#### 42.0001", true),
        ("#### 41.9999", true),
        ("#### 42.00010000001", false),
        ("#### 41.99989999999", false),
        ("#### 42.00009999999", true),
        ("#### 41.99990000001", true),
    ];
    let mut errors = Vec::new();
    for (p, want) in boundary {
        if eval(p, "#### 42") != want || eval("#### 42", p) != want {
            errors.push(p.to_owned());
        }
    }
    let extraction = [
        ("#### 42", Some("42")),
        ("The answer is 5.\n#### 6", Some("6")),
        ("#### 3 apples and 4 pears", Some("4")),
        ("a #### 1 b #### 2", Some("2")),
        ("x = 10, so\n####-7", Some("-7")),
        ("#### $1,234", Some("1,234")),
        ("#### 0.25", Some("0.25")),
        ("#### .5", Some(".5")),
        ("#### +3", Some("+3")),
        ("no marker 12 then 13", Some("13")),
        ("#### none, but 9 earlier", Some("9")),
        ("nothing here", None),
        ("#### 100%", Some("100")),
        ("#### 2/3", Some("3")),
        ("####\n\n17\n", Some("17")),
        ("#### 3.14159 radians", Some("3.14159")),
        ("#### -0.0001", Some("-0.0001")),
        ("steps 1 2 3 #### 4 5", Some("5")),
        ("#### 1e5", Some("5")),
        ("#### 7.", Some("7.")),
    ];
    for (text, want) in extraction {
        if extract_number(text).map(|d| d.literal) != want.map(str::to_owned) {
            errors.push(text.to_owned());
        }
    }
    check(
        errors.is_empty(),
        format!("{} tolerance cases, {} extraction cases, failures {errors:?}", boundary.len(), extraction.len()),
    )
}

fn learning_loop() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let task = SimTask::new(TaskConfig::default()).unwrap();
    let backend = task.backend();
    let d = 128;
    let stub = StubEmbedder::new(d);
    let mut cfg = LearnConfig::<f64>::new(dir.path());
    cfg.train = TrainConfig::default();
    let mut map = CognitiveMap::<f64>::new(MapConfig::new(d)).unwrap();
    let report = engine::run_learning_loop(task.problems(), &mut map, &backend, &stub, &cfg).unwrap();
    let sizes: Vec<usize> = report.rounds.iter().map(|r| r.states).collect();
    let non_decreasing = sizes.windows(2).all(|w| w[0] <= w[1]);
    let retrained = report.rounds.iter().all(|r| r.navigator_trained);
    let reloadable = report.rounds.iter().all(|r| {
        hippocampus::cogmap::load_map::<f64>(&r.map_path).is_ok_and(|m| m.num_states() == r.states)
            && r.model_path
                .as_ref()
                .is_some_and(|p| navigator::load_model::<f64>(p).is_ok())
    });
    let last = report.rounds.last().unwrap();
    let final_slice = &task.problems()[800..1000];
    let empty = CognitiveMap::<f64>::new(MapConfig::new(d)).unwrap();
    let baseline = engine::batch_eval(final_slice, &empty, None, &backend, &stub, &cfg.solve).unwrap();
    let gain = last.success_rate - baseline.success_rate;
    let rates: Vec<String> = report.rounds.iter().map(|r| format!("{:.3}", r.success_rate)).collect();
    check(
        report.rounds.len() == 5 && non_decreasing && retrained && reloadable && gain >= 0.05,
        format!(
            "round success {rates:?}, states {sizes:?}, retrained every round {retrained}, reloadable {reloadable}, final {:.3} vs no-map baseline {:.3} (gain {:+.3})",
            last.success_rate, baseline.success_rate, gain
        ),
    )
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let stub = StubEmbedder::new(32);
    let cfg = SimConfig {
        vortex_size: 3,
        paraphrase_noise: 0.2,
        ..SimConfig::default()
    };
    let mut map = CognitiveMap::<f64>::new(MapConfig::new(32)).unwrap();
    for r in simtraj::generate(&cfg).unwrap() {
        map.ingest_trajectory(&r.steps, r.outcome, &stub).unwrap();
    }
    let map_path = dir.path().join("map.json");
    hippocampus::cogmap::save_map(&map, &map_path).unwrap();
    let back: CognitiveMap<f64> = hippocampus::cogmap::load_map(&map_path).unwrap();
    let mut probes_ok = back == map;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..200 {
        let text = format!("c{}t{} c{}t{} f{i}", rng.random_range(0..12), rng.random_range(0..6), rng.random_range(0..12), rng.random_range(0..6));
        let v = stub.embed_one::<f64>(&text).unwrap();
        let a = map.nearest_state(&v).unwrap().map(|(s, c)| (s, c.to_bits()));
        let b = back.nearest_state(&v).unwrap().map(|(s, c)| (s, c.to_bits()));
        let (mut m1, mut m2) = (map.clone(), back.clone());
        probes_ok &= a == b && m1.assign_state(&v, &text).unwrap() == m2.assign_state(&v, &text).unwrap() && m1 == m2;
    }
    let set = simtraj::separable_training_set::<f64>(32, 30, 0.3, 2);
    let model = navigator::train(
        &set,
        &TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let model_path = dir.path().join("navigator.json");
    navigator::save_model(&model, &model_path).unwrap();
    let loaded: navigator::NavigatorModel<f64> = navigator::load_model(&model_path).unwrap();
    let scores_ok = loaded == model
        && set
            .rows
            .iter()
            .all(|(f, _)| loaded.score(f).unwrap().to_bits() == model.score(f).unwrap().to_bits());
    check(
        probes_ok && scores_ok,
        format!("{} states, 200 probe assignments identical {probes_ok}, {} scores bit-identical {scores_ok}", map.num_states(), set.rows.len()),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1", "trust dynamics", trust_dynamics, Duration::from_secs(1)),
        ("2", "clustering", clustering, Duration::from_secs(30)),
        ("3", "entropy and perturbation", entropy_perturbation, Duration::from_secs(5)),
        ("4", "topology", topology, Duration::from_secs(30)),
        ("5", "navigator", navigator_check, Duration::from_secs(120)),
        ("6", "map-guided solving", algorithm_one, Duration::from_secs(10)),
        ("7", "answer evaluation", evaluation, Duration::from_secs(1)),
        ("8", "learning loop", learning_loop, Duration::from_secs(120)),
        ("9", "persistence", persistence, Duration::from_secs(1)),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = 0;
    for (id, name, run, budget) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let started = Instant::now();
        let outcome = run();
        let elapsed = started.elapsed();
        let in_time = elapsed <= budget;
        let pass = outcome.pass && in_time;
        let expected = EXPECTED_FAILURES
            .iter()
            .find(|(e, _)| *e == id)
            .filter(|_| outcome.known_issue_only && in_time);
        let status = match (pass, expected) {
            (true, _) => "PASS",
            (false, Some(_)) => "FAIL (expected)",
            (false, None) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!(
            "criterion {id} [{name}]: {status} in {elapsed:.2?} (budget {budget:?}) - {}",
            outcome.detail
        );
        if let (false, Some((_, why))) = (pass, expected) {
            println!("    reason: {why}");
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criterion/criteria failed");
        std::process::exit(1);
    }
}
