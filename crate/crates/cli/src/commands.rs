use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hippocampus::cogmap::{load_map, save_map, CognitiveMap, MapConfig};
use hippocampus::embed::{EmbeddingProvider, RemoteEmbedder, RemoteEmbedderConfig, StubEmbedder};
use hippocampus::engine::{
    self, batch_eval, run_learning_loop, solve, ChatBackend, ChatBackendConfig, GenerationBackend, LearnConfig,
    ScriptedBackend, SolveConfig,
};
use hippocampus::ingest::{self, FieldMapping, Problem};
use hippocampus::navigator::{self, load_model, save_model, NavigatorModel, PolicyThresholds, TrainConfig};
use hippocampus::simtraj::{self, SimConfig, SimTask, TaskConfig};
use hippocampus::topo::{self, AnalyzeOptions, ExportFormat, Subgraph};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::Command;

type Provider = Box<dyn EmbeddingProvider<f64>>;
type Backend = Box<dyn GenerationBackend>;

fn provider(cfg: &RunConfig) -> anyhow::Result<Provider> {
    match cfg.embedder.as_str() {
        "stub" => Ok(Box::new(StubEmbedder::new(cfg.dimension))),
        "remote" => {
            let url = cfg
                .embed_url
                .clone()
                .context("remote embedder needs embed_url or HIPPO_EMBED_URL")?;
            let mut rc = RemoteEmbedderConfig::new(url, cfg.dimension);
            rc.bearer_token = std::env::var(hippocampus::embed::EMBED_TOKEN_ENV).ok();
            Ok(Box::new(RemoteEmbedder::new(rc)))
        }
        other => bail!("unknown embedder {other:?}"),
    }
}

fn read_task(path: &Path) -> anyhow::Result<SimTask> {
    let text = fs::read_to_string(path).with_context(|| format!("reading task {}", path.display()))?;
    let tc: TaskConfig = serde_json::from_str(&text).with_context(|| format!("parsing task {}", path.display()))?;
    Ok(SimTask::new(tc)?)
}

/// The configured backend, plus the simulated task when it is a `sim:` backend.
fn backend(cfg: &RunConfig) -> anyhow::Result<(Backend, Option<SimTask>)> {
    let spec = cfg
        .backend
        .as_deref()
        .context("no generation backend configured (use --backend scripted:<file>, sim:<task.json> or openai)")?;
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok((Box::new(ScriptedBackend::from_file(path)?), None));
    }
    if let Some(path) = spec.strip_prefix("sim:") {
        let task = read_task(Path::new(path))?;
        return Ok((Box::new(task.backend()), Some(task)));
    }
    if spec == "openai" {
        let mut cc = ChatBackendConfig::from_env().unwrap_or_else(|| ChatBackendConfig::new("", "default"));
        if let Some(url) = &cfg.llm_url {
            cc.url = url.clone();
        }
        if let Some(model) = &cfg.llm_model {
            cc.model = model.clone();
        }
        if cc.url.is_empty() {
            bail!("openai backend needs llm_url or HIPPO_LLM_URL");
        }
        return Ok((Box::new(ChatBackend::new(cc)), None));
    }
    bail!("unknown backend {spec:?}")
}

fn map_config(cfg: &RunConfig) -> MapConfig<f64> {
    MapConfig::new(cfg.dimension)
        .with_tau(cfg.tau_cluster)
        .with_trust_mode(cfg.trust_mode)
        .with_alpha(cfg.alpha)
}

fn solve_config(cfg: &RunConfig) -> SolveConfig<f64> {
    SolveConfig {
        t_max: cfg.t_max,
        hint_trust: cfg.hint_trust,
        perturb_trust: cfg.deadlock_trust,
        perturb_temperature: cfg.perturb_temperature,
        intervention_prob: cfg.intervention_prob,
        base_temperature: cfg.base_temperature,
        gate: cfg.gate,
        seed: cfg.seed,
        ..SolveConfig::default()
    }
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        hidden: [cfg.hidden, cfg.hidden],
        seed: cfg.seed,
        ..TrainConfig::default()
    }
}

fn policy(cfg: &RunConfig) -> PolicyThresholds<f64> {
    PolicyThresholds {
        hint: cfg.nav_hint,
        perturb: cfg.nav_perturb,
        temperature: cfg.perturb_temperature,
    }
}

fn open_map(cfg: &RunConfig, path: Option<&Path>) -> anyhow::Result<CognitiveMap<f64>> {
    let map = match path {
        Some(p) => load_map(p).with_context(|| format!("loading map {}", p.display()))?,
        None => CognitiveMap::new(map_config(cfg))?,
    };
    if map.dimension() != cfg.dimension {
        bail!(
            "map dimension {} does not match embedder dimension {} (set --dim)",
            map.dimension(),
            cfg.dimension
        );
    }
    Ok(map)
}

fn open_model(cfg: &RunConfig, path: Option<&Path>) -> anyhow::Result<Option<NavigatorModel<f64>>> {
    path.map(|p| {
        let mut m: NavigatorModel<f64> = load_model(p).with_context(|| format!("loading model {}", p.display()))?;
        m.policy = policy(cfg);
        Ok(m)
    })
    .transpose()
}

fn dataset(path: Option<&Path>, fields: &str, task: Option<&SimTask>) -> anyhow::Result<Vec<Problem>> {
    match (path, task) {
        (Some(p), _) => {
            let (problems, report) = ingest::load_problems(p, &FieldMapping::preset(fields)?)?;
            if !report.rejections.is_empty() {
                log::warn!("rejection report: {}", serde_json::to_string(&report)?);
            }
            Ok(problems)
        }
        (None, Some(t)) => Ok(t.problems().to_vec()),
        (None, None) => bail!("--dataset is required unless the backend is sim:<task.json>"),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn out_path(cfg: &RunConfig, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.out_dir.join(default))
}

pub fn run(cfg: &RunConfig, command: &Command) -> anyhow::Result<()> {
    match command {
        Command::BuildMap { trajectories, out } => {
            let records = ingest::load_trajectories(trajectories)?;
            let provider = provider(cfg)?;
            let mut map = CognitiveMap::new(map_config(cfg))?;
            for r in &records {
                map.ingest_trajectory(&r.steps, r.outcome, &*provider)
                    .with_context(|| format!("ingesting trajectory {}", r.id))?;
            }
            let path = out_path(cfg, out, "map.json");
            save_map(&map, &path)?;
            log::info!("{} trajectories -> {} states, {} edges", records.len(), map.num_states(), map.num_edges());
            print_json(&json!({
                "map": path,
                "trajectories": records.len(),
                "states": map.num_states(),
                "edges": map.num_edges(),
            }))
        }
        Command::Analyze {
            map,
            format,
            red_k,
            min_success,
        } => {
            let format: ExportFormat = format.parse()?;
            let map = load_map::<f64>(map)?;
            let opts = AnalyzeOptions {
                red_k: red_k.unwrap_or(cfg.red_k),
                min_success: min_success.unwrap_or(cfg.min_success),
            };
            let report = topo::analyze(&map, &opts)?;
            let graph = cfg.out_dir.join(format!("graph.{}", format.extension()));
            topo::export_graph(&map, &Subgraph::full(&map), format, &graph)?;
            write_json(&cfg.out_dir.join("stats.json"), &report)?;
            print_json(&report)
        }
        Command::Export {
            map,
            format,
            out,
            skeleton,
            min_success,
        } => {
            let format: ExportFormat = format.parse()?;
            let map = load_map::<f64>(map)?;
            let sub = if *skeleton {
                topo::skeleton(&map, min_success.unwrap_or(cfg.min_success))?
            } else {
                Subgraph::full(&map)
            };
            let path = out_path(cfg, out, &format!("graph.{}", format.extension()));
            topo::export_graph(&map, &sub, format, &path)?;
            print_json(&json!({"graph": path, "nodes": sub.nodes.len(), "edges": sub.edges.len()}))
        }
        Command::TrainNav { map, out } => {
            let map = load_map::<f64>(map)?;
            let set = navigator::extract_training_set(&map);
            log::info!("training set: {} positive, {} negative", set.positives(), set.negatives());
            let mut model = navigator::train(&set, &train_config(cfg))?;
            model.policy = policy(cfg);
            let path = out_path(cfg, out, "navigator.json");
            save_model(&model, &path)?;
            print_json(&json!({
                "model": path,
                "rows": set.rows.len(),
                "positives": set.positives(),
                "negatives": set.negatives(),
                "train_accuracy": model.train_accuracy,
                "train_loss": model.train_loss,
            }))
        }
        Command::Solve {
            question,
            map,
            model,
            gold,
        } => {
            let provider = provider(cfg)?;
            let (backend, _) = backend(cfg)?;
            let map = open_map(cfg, map.as_deref())?;
            let model = open_model(cfg, model.as_deref())?;
            let mut result = solve(question, &map, model.as_ref(), &*backend, &*provider, &solve_config(cfg))?;
            if let Some(g) = gold {
                result.correct = Some(engine::evaluate_answer::<f64, _>(&result.final_answer, g, &*provider)?);
            }
            write_json(&cfg.out_dir.join("solve.json"), &result)?;
            print_json(&result)
        }
        Command::BatchEval {
            dataset: ds,
            fields,
            map,
            model,
            limit,
        } => {
            let provider = provider(cfg)?;
            let (backend, task) = backend(cfg)?;
            let mut problems = dataset(ds.as_deref(), fields, task.as_ref())?;
            problems.truncate(limit.unwrap_or(usize::MAX));
            let map = open_map(cfg, map.as_deref())?;
            let model = open_model(cfg, model.as_deref())?;
            let report = batch_eval(&problems, &map, model.as_ref(), &*backend, &*provider, &solve_config(cfg))?;
            write_json(&cfg.out_dir.join("batch_report.json"), &report)?;
            print_json(&json!({
                "total": report.total,
                "correct": report.correct,
                "success_rate": report.success_rate,
                "average_rounds": report.average_rounds,
                "hints": report.hint_count,
                "perturbations": report.perturb_count,
                "errors": report.error_count,
            }))
        }
        Command::LearnLoop {
            dataset: ds,
            fields,
            rounds,
            samples,
            map,
        } => {
            let provider = provider(cfg)?;
            let (backend, task) = backend(cfg)?;
            let problems = dataset(ds.as_deref(), fields, task.as_ref())?;
            let mut map = open_map(cfg, map.as_deref())?;
            let mut lc = LearnConfig::new(&cfg.out_dir);
            lc.rounds = *rounds;
            lc.samples_per_round = *samples;
            lc.solve = solve_config(cfg);
            lc.train = train_config(cfg);
            let report = run_learning_loop(&problems, &mut map, &*backend, &*provider, &lc)?;
            print_json(&report)
        }
        Command::Simulate {
            spec,
            task,
            n,
            n_concepts,
            vortex_size,
            noise,
            out,
        } => {
            let spec_text = spec
                .as_ref()
                .map(|p| fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
                .transpose()?;
            if *task {
                let mut tc: TaskConfig = match &spec_text {
                    Some(t) => serde_json::from_str(t)?,
                    None => TaskConfig {
                        seed: cfg.seed,
                        ..TaskConfig::default()
                    },
                };
                if let Some(n) = n {
                    tc.n_problems = *n;
                }
                if let Some(v) = vortex_size {
                    tc.vortex_size = *v;
                }
                let sim = SimTask::new(tc.clone())?;
                let path = out_path(cfg, out, "problems.jsonl");
                let lines: Vec<String> = sim
                    .problems()
                    .iter()
                    .map(|p| {
                        json!({"id": p.id, "question": p.question, "answer": p.gold_answer, "domain": p.domain_tag})
                            .to_string()
                    })
                    .collect();
                fs::write(&path, lines.join("\n") + "\n")?;
                let task_path = cfg.out_dir.join("task.json");
                write_json(&task_path, &tc)?;
                return print_json(&json!({"problems": path, "task": task_path, "count": lines.len()}));
            }
            let mut sc: SimConfig = match &spec_text {
                Some(t) => serde_json::from_str(t)?,
                None => SimConfig {
                    seed: cfg.seed,
                    ..SimConfig::default()
                },
            };
            if let Some(n) = n {
                sc.n_trajectories = *n;
            }
            if let Some(c) = n_concepts {
                sc.n_concepts = *c;
            }
            if let Some(v) = vortex_size {
                sc.vortex_size = *v;
            }
            if let Some(x) = noise {
                sc.paraphrase_noise = *x;
            }
            let records = simtraj::generate(&sc)?;
            let path = out_path(cfg, out, "trajectories.jsonl");
            ingest::write_trajectories(&path, &records)?;
            write_json(&cfg.out_dir.join("sim_config.json"), &sc)?;
            print_json(&json!({"trajectories": path, "count": records.len()}))
        }
        Command::Sweep {
            dataset: ds,
            fields,
            map,
            model,
            p_values,
            limit,
        } => {
            if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
                bail!("p values must lie in [0, 1]");
            }
            let provider = provider(cfg)?;
            let (backend, task) = backend(cfg)?;
            let mut problems = dataset(ds.as_deref(), fields, task.as_ref())?;
            problems.truncate(limit.unwrap_or(usize::MAX));
            let map = open_map(cfg, map.as_deref())?;
            let model = open_model(cfg, model.as_deref())?;
            let mut writer = csv::Writer::from_path(cfg.out_dir.join("sweep.csv"))?;
            writer.write_record(["p", "success_rate", "average_rounds", "hints", "perturbations"])?;
            let mut rows = Vec::new();
            for &p in p_values {
                let sc = SolveConfig {
                    intervention_prob: p,
                    ..solve_config(cfg)
                };
                let r = batch_eval(&problems, &map, model.as_ref(), &*backend, &*provider, &sc)?;
                log::info!("P={p}: success {:.3}", r.success_rate);
                writer.write_record([
                    p.to_string(),
                    r.success_rate.to_string(),
                    r.average_rounds.to_string(),
                    r.hint_count.to_string(),
                    r.perturb_count.to_string(),
                ])?;
                rows.push(json!({
                    "p": p,
                    "success_rate": r.success_rate,
                    "average_rounds": r.average_rounds,
                    "hints": r.hint_count,
                    "perturbations": r.perturb_count,
                }));
            }
            writer.flush()?;
            write_json(&cfg.out_dir.join("sweep.json"), &rows)?;
            print_json(&rows)
        }
    }
}
