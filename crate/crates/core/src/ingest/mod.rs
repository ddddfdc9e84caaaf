//! Problem and trajectory corpora.
//!
//! Problems come from JSONL files whose field names differ per dataset, so a
//! [`FieldMapping`] picks the question and answer keys. Over-long questions and
//! malformed lines are rejected with their line numbers rather than failing the
//! whole load.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Questions longer than this many Unicode scalar values are dropped.
pub const MAX_QUESTION_CHARS: usize = 20_000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} has no valid records")]
    NoValidLines { path: String },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("unknown dataset preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub domain_tag: String,
}

/// JSON keys holding each problem field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub domain: String,
    /// Tag used when a record has no domain field.
    pub default_domain: String,
}

impl FieldMapping {
    /// `question` / `answer`, as in GSM8K.
    pub fn gsm8k() -> Self {
        Self {
            id: "id".into(),
            question: "question".into(),
            answer: "answer".into(),
            domain: "domain".into(),
            default_domain: "math".into(),
        }
    }

    /// `problem` / `solution`, as in MATH.
    pub fn math() -> Self {
        Self {
            question: "problem".into(),
            answer: "solution".into(),
            ..Self::gsm8k()
        }
    }

    pub fn preset(name: &str) -> Result<Self, IngestError> {
        match name.to_ascii_lowercase().as_str() {
            "gsm8k" | "default" => Ok(Self::gsm8k()),
            "math" => Ok(Self::math()),
            _ => Err(IngestError::UnknownPreset(name.to_owned())),
        }
    }
}

impl Default for FieldMapping {
    fn default() -> Self {
        Self::gsm8k()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    /// Non-blank lines seen.
    pub total_lines: usize,
    pub accepted: usize,
    pub too_long: usize,
    pub malformed: usize,
    pub rejections: Vec<Rejection>,
}

impl RejectionReport {
    fn reject(&mut self, line: usize, reason: String, too_long: bool) {
        if too_long {
            self.too_long += 1;
        } else {
            self.malformed += 1;
        }
        self.rejections.push(Rejection { line, reason });
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Yields `(line_number, text)` for non-blank lines, numbering from 1 over all lines.
fn lines(path: &Path) -> Result<Vec<(usize, String)>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn string_field(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_problem(text: &str, line: usize, fields: &FieldMapping) -> Result<Problem, (String, bool)> {
    let value: Value = serde_json::from_str(text).map_err(|e| (format!("invalid JSON: {e}"), false))?;
    let obj = value.as_object().ok_or_else(|| ("not a JSON object".to_owned(), false))?;
    let question = string_field(obj, &fields.question)
        .ok_or_else(|| (format!("missing string field {:?}", fields.question), false))?;
    let gold_answer = string_field(obj, &fields.answer)
        .ok_or_else(|| (format!("missing string field {:?}", fields.answer), false))?;
    let chars = question.chars().count();
    if chars > MAX_QUESTION_CHARS {
        return Err((format!("question has {chars} characters (limit {MAX_QUESTION_CHARS})"), true));
    }
    Ok(Problem {
        id: string_field(obj, &fields.id).unwrap_or_else(|| format!("line-{line}")),
        question,
        gold_answer,
        domain_tag: string_field(obj, &fields.domain).unwrap_or_else(|| fields.default_domain.clone()),
    })
}

/// Loads problems in file order. Blank lines are skipped and not counted.
pub fn load_problems(
    path: impl AsRef<Path>,
    fields: &FieldMapping,
) -> Result<(Vec<Problem>, RejectionReport), IngestError> {
    let path = path.as_ref();
    let mut report = RejectionReport::default();
    let mut problems = Vec::new();
    for (line, text) in lines(path)? {
        report.total_lines += 1;
        match parse_problem(&text, line, fields) {
            Ok(p) => problems.push(p),
            Err((reason, too_long)) => report.reject(line, reason, too_long),
        }
    }
    report.accepted = problems.len();
    if problems.is_empty() {
        return Err(IngestError::NoValidLines {
            path: path.display().to_string(),
        });
    }
    if !report.rejections.is_empty() {
        log::warn!(
            "{}: rejected {} of {} lines",
            path.display(),
            report.rejections.len(),
            report.total_lines
        );
    }
    Ok((problems, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub steps: Vec<String>,
    pub outcome: bool,
}

#[derive(Deserialize)]
struct RawTrajectory {
    id: Option<Value>,
    steps: Option<Vec<String>>,
    outcome: Option<bool>,
}

fn parse_trajectory(text: &str, line: usize) -> Result<TrajectoryRecord, IngestError> {
    let schema = |reason: String| IngestError::Schema { line, reason };
    let raw: RawTrajectory = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    let steps = raw.steps.ok_or_else(|| schema("missing steps".into()))?;
    if steps.is_empty() {
        return Err(schema("steps is empty".into()));
    }
    if steps.iter().any(|s| s.trim().is_empty()) {
        return Err(schema("blank step".into()));
    }
    let outcome = raw.outcome.ok_or_else(|| schema("missing outcome".into()))?;
    let id = match raw.id {
        Some(Value::String(s)) => s,
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(schema("id must be a string or number".into())),
        None => format!("line-{line}"),
    };
    Ok(TrajectoryRecord { id, steps, outcome })
}

/// Loads trajectories; any schema violation fails the load with its line number.
pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>, IngestError> {
    let path = path.as_ref();
    let records = lines(path)?
        .into_iter()
        .map(|(line, text)| parse_trajectory(&text, line))
        .collect::<Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(IngestError::NoValidLines {
            path: path.display().to_string(),
        });
    }
    Ok(records)
}

pub fn write_trajectories(path: impl AsRef<Path>, records: &[TrajectoryRecord]) -> Result<(), IngestError> {
    let path = path.as_ref();
    let io = |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("trajectory serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Seeded sample of `n` problems keeping each domain's share (largest
/// remainder rounding). Output is in input order.
pub fn stratified_sample(problems: &[Problem], n: usize, seed: u64) -> Vec<Problem> {
    if n >= problems.len() {
        return problems.to_vec();
    }
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in problems.iter().enumerate() {
        strata.entry(p.domain_tag.as_str()).or_default().push(i);
    }
    let total = problems.len();
    let mut quotas: Vec<(&str, usize, usize)> = strata
        .iter()
        .map(|(k, v)| (*k, v.len() * n / total, v.len() * n % total))
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut by_remainder: Vec<usize> = (0..quotas.len()).collect();
    by_remainder.sort_by(|&a, &b| quotas[b].2.cmp(&quotas[a].2).then(a.cmp(&b)));
    for &i in by_remainder.iter().take(n - assigned) {
        quotas[i].1 += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(n);
    for (key, quota, _) in quotas {
        let mut idx = strata[key].clone();
        idx.shuffle(&mut rng);
        chosen.extend(idx.into_iter().take(quota));
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| problems[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_valid_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "p.jsonl",
            "{\"question\": \"1+1?\", \"answer\": \"#### 2\"}\n\n{\"id\": 7, \"question\": \"2+2?\", \"answer\": \"#### 4\", \"domain\": \"general\"}\n{\"question\": \"3+3?\", \"answer\": 6}\n",
        );
        let (probs, report) = load_problems(&p, &FieldMapping::gsm8k()).unwrap();
        assert_eq!(probs.len(), 3);
        assert_eq!(report.total_lines, 3);
        assert!(report.rejections.is_empty());
        assert_eq!(probs[0].id, "line-1");
        assert_eq!(probs[1].id, "7");
        assert_eq!(probs[1].domain_tag, "general");
        assert_eq!(probs[2].gold_answer, "6");
        assert_eq!(probs[2].domain_tag, "math");
    }

    #[test]
    fn length_limit_in_chars() {
        let dir = tempfile::tempdir().unwrap();
        let ok = "é".repeat(MAX_QUESTION_CHARS);
        let long = "a".repeat(MAX_QUESTION_CHARS + 1);
        let body = format!(
            "{}\n{}\nnot json\n",
            serde_json::json!({"question": ok, "answer": "1"}),
            serde_json::json!({"question": long, "answer": "1"})
        );
        let (probs, report) = load_problems(write(&dir, "p.jsonl", &body), &FieldMapping::gsm8k()).unwrap();
        assert_eq!(probs.len(), 1);
        assert_eq!((report.too_long, report.malformed), (1, 1));
        assert_eq!(report.rejections.iter().map(|r| r.line).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(report.accepted + report.rejections.len(), report.total_lines);
    }

    #[test]
    fn math_mapping_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "m.jsonl", "{\"problem\": \"x?\", \"solution\": \"#### 1\"}\n");
        assert_eq!(load_problems(&p, &FieldMapping::math()).unwrap().0[0].question, "x?");
        assert!(matches!(
            load_problems(&p, &FieldMapping::gsm8k()),
            Err(IngestError::NoValidLines { .. })
        ));
        let empty = write(&dir, "e.jsonl", "");
        assert!(matches!(
            load_problems(&empty, &FieldMapping::gsm8k()),
            Err(IngestError::NoValidLines { .. })
        ));
        assert!(matches!(
            load_problems(dir.path().join("missing"), &FieldMapping::gsm8k()),
            Err(IngestError::Io { .. })
        ));
        assert!(FieldMapping::preset("MATH").is_ok());
        assert!(FieldMapping::preset("nope").is_err());
    }

    #[test]
    fn trajectory_validation() {
        let dir = tempfile::tempdir().unwrap();
        let good = write(&dir, "g.jsonl", "{\"id\": \"a\", \"steps\": [\"s1\", \"s2\"], \"outcome\": true}\n");
        assert_eq!(
            load_trajectories(&good).unwrap(),
            vec![TrajectoryRecord {
                id: "a".into(),
                steps: vec!["s1".into(), "s2".into()],
                outcome: true
            }]
        );
        let no_steps = write(&dir, "n.jsonl", "{\"id\": \"a\", \"steps\": [\"s\"], \"outcome\": false}\n{\"id\": \"b\", \"steps\": [], \"outcome\": true}\n");
        assert!(matches!(load_trajectories(&no_steps), Err(IngestError::Schema { line: 2, .. })));
        let no_outcome = write(&dir, "o.jsonl", "{\"id\": \"a\", \"steps\": [\"s\"]}\n");
        assert!(matches!(load_trajectories(&no_outcome), Err(IngestError::Schema { line: 1, .. })));
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![
            TrajectoryRecord {
                id: "x".into(),
                steps: vec!["a \"quoted\" step".into()],
                outcome: false,
            },
            TrajectoryRecord {
                id: "y".into(),
                steps: vec!["b".into(), "c".into()],
                outcome: true,
            },
        ];
        let p = dir.path().join("t.jsonl");
        write_trajectories(&p, &recs).unwrap();
        assert_eq!(load_trajectories(&p).unwrap(), recs);
    }

    #[test]
    fn stratified_sample_keeps_shares() {
        let problems: Vec<Problem> = (0..100)
            .map(|i| Problem {
                id: i.to_string(),
                question: format!("q{i}"),
                gold_answer: "#### 1".into(),
                domain_tag: if i % 4 == 0 { "code" } else { "math" }.into(),
            })
            .collect();
        let s = stratified_sample(&problems, 20, 42);
        assert_eq!(s.len(), 20);
        assert_eq!(s.iter().filter(|p| p.domain_tag == "code").count(), 5);
        assert_eq!(s, stratified_sample(&problems, 20, 42));
        assert_ne!(s, stratified_sample(&problems, 20, 43));
        assert_eq!(stratified_sample(&problems, 500, 1).len(), 100);
    }
}
