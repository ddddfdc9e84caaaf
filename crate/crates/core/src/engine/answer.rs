//! Answer extraction, matching and voting.

use std::fmt;
use std::sync::LazyLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use regex::Regex;
use serde::{Serialize, Serializer};

use super::EngineError;
use crate::embed::{self, EmbeddingProvider};
use crate::Scalar;

pub const ANSWER_MARKER: &str = "####";
/// Cosine similarity at which two free-text answers count as equivalent.
pub const SEMANTIC_MATCH_THRESHOLD: f64 = 0.75;

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?(?:\d+(?:,\d{3})*(?:\.\d*)?|\.\d+)").expect("valid pattern"));

/// Numeric tolerance for answer equivalence, 1/10000.
pub fn numeric_tolerance() -> BigRational {
    BigRational::new(BigInt::from(1), BigInt::from(10_000))
}

/// A decimal literal kept as an exact rational.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decimal {
    pub literal: String,
    pub value: BigRational,
}

impl Decimal {
    /// Parses `[-+]digits[.digits]` with optional thousands commas.
    pub fn parse(literal: &str) -> Option<Self> {
        let cleaned: String = literal.chars().filter(|c| *c != ',').collect();
        let (negative, body) = match cleaned.as_bytes().first()? {
            b'-' => (true, &cleaned[1..]),
            b'+' => (false, &cleaned[1..]),
            _ => (false, cleaned.as_str()),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        let mut numer: BigInt = digits.parse().ok()?;
        if negative {
            numer = -numer;
        }
        let denom = num_traits::pow(BigInt::from(10), frac_part.len());
        Some(Self {
            literal: literal.to_owned(),
            value: BigRational::new(numer, denom),
        })
    }

    pub fn within_tolerance(&self, other: &Decimal) -> bool {
        (&self.value - &other.value).abs() <= numeric_tolerance()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractedAnswer {
    Numeric(Decimal),
    /// Lowercased, whitespace-collapsed answer text.
    Text(String),
}

impl ExtractedAnswer {
    /// Same group for voting: numbers within 1e-4, otherwise identical text.
    pub fn equivalent(&self, other: &ExtractedAnswer) -> bool {
        match (self, other) {
            (ExtractedAnswer::Numeric(a), ExtractedAnswer::Numeric(b)) => a.within_tolerance(b),
            (ExtractedAnswer::Text(a), ExtractedAnswer::Text(b)) => a == b,
            _ => false,
        }
    }

    pub fn as_decimal(&self) -> Option<&Decimal> {
        match self {
            ExtractedAnswer::Numeric(d) => Some(d),
            ExtractedAnswer::Text(_) => None,
        }
    }
}

impl fmt::Display for ExtractedAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractedAnswer::Numeric(d) => f.write_str(&d.literal),
            ExtractedAnswer::Text(t) => f.write_str(t),
        }
    }
}

impl Serialize for ExtractedAnswer {
    fn serialize<Z: Serializer>(&self, s: Z) -> Result<Z::Ok, Z::Error> {
        self.to_string().serialize(s)
    }
}

fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Last numeric literal after the final `####`, or anywhere in the text when
/// there is no marker or nothing numeric follows it.
pub fn extract_number(text: &str) -> Option<Decimal> {
    let last_in = |s: &str| NUMBER.find_iter(s).filter_map(|m| Decimal::parse(m.as_str())).last();
    if let Some(pos) = text.rfind(ANSWER_MARKER) {
        if let Some(d) = last_in(&text[pos + ANSWER_MARKER.len()..]) {
            return Some(d);
        }
    }
    last_in(text)
}

/// Answer used for voting: numeric when any number is present, else the
/// normalized text after the final marker (or the whole text).
pub fn extract_answer(text: &str) -> ExtractedAnswer {
    if let Some(d) = extract_number(text) {
        return ExtractedAnswer::Numeric(d);
    }
    let tail = text
        .rfind(ANSWER_MARKER)
        .map(|p| &text[p + ANSWER_MARKER.len()..])
        .unwrap_or(text);
    ExtractedAnswer::Text(normalize_text(tail))
}

/// Correctness check. A gold answer containing `####` selects numeric mode
/// (tolerance 1e-4, false when the prediction has no number); otherwise both
/// texts are embedded and compared at cosine ≥ 0.75.
pub fn evaluate_answer<S, P>(predicted: &str, gold: &str, provider: &P) -> Result<bool, EngineError>
where
    S: Scalar,
    P: EmbeddingProvider<S> + ?Sized,
{
    if gold.trim().is_empty() {
        return Err(EngineError::EmptyGold);
    }
    if gold.contains(ANSWER_MARKER) {
        return Ok(match extract_number(gold) {
            Some(g) => extract_number(predicted).is_some_and(|p| p.within_tolerance(&g)),
            None => extract_answer(predicted).equivalent(&extract_answer(gold)),
        });
    }
    if predicted.trim().is_empty() {
        return Ok(false);
    }
    let p = embed::embed_text::<S, P>(predicted, provider)?;
    let g = embed::embed_text::<S, P>(gold, provider)?;
    let sim = embed::cosine(&p, &g)?;
    Ok(sim >= S::lit(SEMANTIC_MATCH_THRESHOLD))
}

/// A non-intervened round's response.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct Candidate<S: Scalar> {
    pub answer_text: String,
    pub extracted_answer: ExtractedAnswer,
    pub trust: S,
    /// One-based round index.
    pub round: usize,
}

impl<S: Scalar> Candidate<S> {
    pub fn new(answer_text: impl Into<String>, trust: S, round: usize) -> Self {
        let answer_text = answer_text.into();
        Self {
            extracted_answer: extract_answer(&answer_text),
            answer_text,
            trust,
            round,
        }
    }
}

/// Index of the winning candidate. Candidates are grouped by answer equivalence
/// against each group's first member; the largest group wins, then the group
/// holding the highest trust, then the group whose first round is earliest.
/// The winner is that group's earliest candidate.
pub fn majority_vote<S: Scalar>(candidates: &[Candidate<S>]) -> Result<usize, EngineError> {
    if candidates.is_empty() {
        return Err(EngineError::NoCandidates);
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| candidates[i].round);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        let c = &candidates[i].extracted_answer;
        match groups.iter_mut().find(|g| candidates[g[0]].extracted_answer.equivalent(c)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let max_trust = |g: &[usize]| {
        g.iter()
            .map(|&i| candidates[i].trust)
            .fold(S::neg_infinity(), S::max)
    };
    let mut best = 0;
    for gi in 1..groups.len() {
        let (g, b) = (&groups[gi], &groups[best]);
        let better = g.len() > b.len()
            || (g.len() == b.len()
                && (max_trust(g) > max_trust(b)
                    || (max_trust(g) == max_trust(b) && candidates[g[0]].round < candidates[b[0]].round)));
        if better {
            best = gi;
        }
    }
    Ok(groups[best][0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::StubEmbedder;

    fn num(s: &str) -> Decimal {
        Decimal::parse(s).unwrap()
    }

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(num("42").value, BigRational::from_integer(42.into()));
        assert_eq!(num("-0.5").value, BigRational::new((-1).into(), 2.into()));
        assert_eq!(num("1,234.50").value, BigRational::new(24690.into(), 20.into()));
        assert_eq!(num(".25").value, BigRational::new(1.into(), 4.into()));
        assert_eq!(num("+7.").value, BigRational::from_integer(7.into()));
        assert!(Decimal::parse("-").is_none());
        assert!(Decimal::parse(".").is_none());
    }

    #[test]
    fn tolerance_boundary() {
        let base = num("42");
        assert!(base.within_tolerance(&num("42.0001")));
        assert!(base.within_tolerance(&num("41.9999")));
        assert!(!base.within_tolerance(&num("42.00010001")));
        assert!(!base.within_tolerance(&num("41.99989999")));
    }

    #[test]
    fn marker_extraction() {
        let cases = [
            ("so 3 + 4 = 7\n#### 7", Some("7")),
            ("#### 12 apples then 15", Some("15")),
            ("first #### 3 then #### 4", Some("4")),
            ("no marker, 10 then 20", Some("20")),
            ("#### none here but 5 before", Some("5")),
            ("nothing numeric", None),
            ("#### -3.5", Some("-3.5")),
            ("#### 1,000", Some("1,000")),
        ];
        for (text, want) in cases {
            assert_eq!(extract_number(text).map(|d| d.literal), want.map(str::to_owned), "{text}");
        }
        assert_eq!(extract_answer("####  Paris  France"), ExtractedAnswer::Text("paris france".into()));
    }

    #[test]
    fn numeric_evaluation() {
        let stub = StubEmbedder::new(16);
        let eval = |p: &str, g: &str| evaluate_answer::<f64, _>(p, g, &stub).unwrap();
        assert!(eval("... #### 42", "#### 42.00000001"));
        assert!(!eval("#### 43", "#### 42"));
        assert!(!eval("I do not know", "#### 42"));
        assert!(matches!(
            evaluate_answer::<f64, _>("x", "  ", &stub),
            Err(EngineError::EmptyGold)
        ));
    }

    #[test]
    fn semantic_evaluation() {
        let stub = StubEmbedder::new(64);
        let gold = "the capital of france is paris";
        assert!(evaluate_answer::<f64, _>(gold, gold, &stub).unwrap());
        assert!(!evaluate_answer::<f64, _>("bananas grow on trees", gold, &stub).unwrap());
        assert!(!evaluate_answer::<f64, _>("", gold, &stub).unwrap());
    }

    #[test]
    fn voting_rules() {
        let c = |a: &str, t: f64, r: usize| Candidate::new(format!("#### {a}"), t, r);
        let set = [c("42", 0.5, 1), c("17", 0.5, 2), c("42", 0.5, 3)];
        assert_eq!(set[majority_vote(&set).unwrap()].extracted_answer.to_string(), "42");
        let tie = [c("42", 0.4, 1), c("17", 0.9, 2)];
        assert_eq!(majority_vote(&tie).unwrap(), 1);
        let close = [c("42.0000000", 0.1, 1), c("42.00000001", 0.1, 2), c("7", 0.9, 3)];
        assert_eq!(majority_vote(&close).unwrap(), 0);
        let same_trust = [c("5", 0.5, 2), c("6", 0.5, 1)];
        assert_eq!(majority_vote(&same_trust).unwrap(), 1);
        assert!(matches!(majority_vote::<f64>(&[]), Err(EngineError::NoCandidates)));
    }
}
