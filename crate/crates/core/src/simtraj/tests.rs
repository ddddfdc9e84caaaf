use super::*;
use crate::cogmap::{CognitiveMap, MapConfig};
use crate::embed::StubEmbedder;
use crate::engine::{GenerationBackend, GenerationRequest};
use crate::navigator::HINT_PREFIX;
use crate::topo;

const D: usize = 64;

fn ingest(records: &[TrajectoryRecord]) -> CognitiveMap<f64> {
    let stub = StubEmbedder::new(D);
    let mut map = CognitiveMap::new(MapConfig::new(D)).unwrap();
    for r in records {
        map.ingest_trajectory(&r.steps, r.outcome, &stub).unwrap();
    }
    map
}

/// State id of each concept, from its canonical text.
fn concept_state(map: &CognitiveMap<f64>, concept: usize) -> usize {
    let v = StubEmbedder::new(D).embed_one(&concept_text(concept)).unwrap();
    map.nearest_state(&v).unwrap().unwrap().0
}

#[test]
fn deterministic_for_seed() {
    let cfg = SimConfig {
        vortex_size: 3,
        paraphrase_noise: 0.2,
        ..SimConfig::default()
    };
    assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    let other = SimConfig { seed: 7, ..cfg.clone() };
    assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
}

#[test]
fn concepts_get_their_own_states() {
    let cfg = SimConfig {
        n_trajectories: 100,
        ..SimConfig::default()
    };
    let map = ingest(&generate(&cfg).unwrap());
    assert_eq!(map.num_states(), cfg.n_concepts);
}

#[test]
fn vortex_forms_a_blue_cycle() {
    let cfg = SimConfig {
        n_trajectories: 300,
        vortex_size: 3,
        vortex_fraction: 1.0,
        vortex_cycles: 3,
        default_success_rate: 0.5,
        ..SimConfig::default()
    };
    let map = ingest(&generate(&cfg).unwrap());
    let vortex: Vec<usize> = (0..3).map(|c| concept_state(&map, c)).collect();
    let sccs = topo::find_sccs(&map);
    let holder = sccs.iter().find(|c| c.contains(&vortex[0])).unwrap();
    assert!(vortex.iter().all(|v| holder.contains(v)));
    let blue = topo::blue_nodes(&map);
    for v in vortex {
        assert_eq!(map.state(v).unwrap().trust, 0.0);
        assert!(blue.contains(&v));
    }
}

#[test]
fn certain_concept_has_full_trust() {
    let mut rates = BTreeMap::new();
    rates.insert(5, 1.0);
    let cfg = SimConfig {
        success_rate_by_concept: rates,
        vortex_size: 2,
        n_trajectories: 150,
        ..SimConfig::default()
    };
    let map = ingest(&generate(&cfg).unwrap());
    let s = concept_state(&map, 5);
    assert!(map.state(s).unwrap().visits > 0);
    assert_eq!(map.state(s).unwrap().trust, 1.0);
}

#[test]
fn trust_converges_to_rate() {
    let rates: BTreeMap<usize, f64> = [(0, 0.2), (1, 0.5), (2, 0.8)].into_iter().collect();
    let cfg = SimConfig {
        n_concepts: 3,
        success_rate_by_concept: rates.clone(),
        n_trajectories: 3000,
        min_length: 1,
        max_length: 1,
        ..SimConfig::default()
    };
    let generated = generate_with_concepts(&cfg).unwrap();
    let records: Vec<_> = generated.iter().map(|(r, _)| r.clone()).collect();
    let map = ingest(&records);
    for (c, p) in rates {
        let n = generated.iter().filter(|(_, cs)| cs.contains(&c)).count() as f64;
        let trust = map.state(concept_state(&map, c)).unwrap().trust;
        assert!((trust - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt(), "concept {c}: {trust} vs {p}");
    }
}

#[test]
fn config_validation() {
    let bad = [
        SimConfig { vortex_size: 13, ..SimConfig::default() },
        SimConfig { vortex_size: 12, ..SimConfig::default() },
        SimConfig { min_length: 0, ..SimConfig::default() },
        SimConfig { min_length: 5, max_length: 4, ..SimConfig::default() },
        SimConfig { paraphrase_noise: 1.5, ..SimConfig::default() },
        SimConfig {
            success_rate_by_concept: [(99, 0.5)].into_iter().collect(),
            ..SimConfig::default()
        },
    ];
    for cfg in bad {
        assert!(generate(&cfg).is_err(), "{cfg:?}");
    }
}

#[test]
fn separable_set_shape() {
    let set = separable_training_set::<f64>(8, 25, 0.2, 1);
    assert_eq!(set.rows.len(), 50);
    assert_eq!((set.positives(), set.negatives()), (25, 25));
    for (f, label) in &set.rows {
        assert_eq!(f.len(), 18);
        let r = f.rate();
        assert!(if *label { r >= 0.7 } else { r <= 0.3 });
    }
}

#[test]
fn simulated_task_behaviour() {
    let task = SimTask::new(TaskConfig {
        n_problems: 40,
        ..TaskConfig::default()
    })
    .unwrap();
    let backend = task.backend();
    let (i, trap) = task
        .problems()
        .iter()
        .enumerate()
        .find(|(i, _)| task.kinds()[*i] == ProblemKind::Trap)
        .unwrap();
    let gold: i64 = trap.gold_answer[5..].parse().unwrap();
    fn req(prompt: &str, temperature: f64, call_index: usize) -> GenerationRequest<'_> {
        GenerationRequest {
            prompt,
            temperature,
            call_index,
        }
    }
    let a = backend.generate(&req(&trap.question, 0.7, 0)).unwrap();
    assert_eq!(a, backend.generate(&req(&trap.question, 0.7, 0)).unwrap());
    let count = |prompt: &str, t: f64, want: i64| {
        (0..200)
            .filter(|&k| {
                let g = backend.generate(&req(prompt, t, k)).unwrap();
                g.text.ends_with(&format!("#### {want}"))
            })
            .count()
    };
    assert!(count(&trap.question, 0.7, gold + 1) > 150);
    assert!(count(&trap.question, 1.5, gold) > 160);
    let hinted = format!("{}\n\n{HINT_PREFIX}something", trap.question);
    assert!(count(&hinted, 0.7, gold) > 160);
    assert!(backend.generate(&req("unknown", 0.7, 0)).is_err());
    assert_eq!(task.problems()[i].domain_tag, "trap");
}
