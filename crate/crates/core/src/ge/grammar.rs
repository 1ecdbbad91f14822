//! BNF grammars and genotype-to-phenotype decoding.
//!
//! File format: one rule per line, `<name> ::= alt | alt | ...`. Symbols in
//! angle brackets are nonterminals; every other whitespace-separated token is
//! a terminal. Double-quoted terminals may contain spaces. Blank lines and
//! lines starting with `#` are ignored. The first rule's left-hand side is the
//! start symbol.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::env::{EnvSpec, FeatureKind};

use super::Genotype;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("nonterminal <{0}> is used but has no production")]
    Undefined(String),
    #[error("nonterminal <{name}> is defined twice (line {line})")]
    Duplicate { name: String, line: usize },
    #[error("grammar has no rules")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symbol {
    Terminal(String),
    Nonterminal(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Rule {
    name: String,
    alternatives: Vec<Vec<Symbol>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    rules: Vec<Rule>,
}

/// Codons ran out before every nonterminal was expanded.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("derivation incomplete after {consumed} codons")]
pub struct IncompleteDerivation {
    pub consumed: usize,
}

/// Terminal string produced by a complete derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub tokens: Vec<String>,
    pub codons_used: usize,
}

impl Derivation {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

fn tokenize(rhs: &str, line: usize) -> Result<Vec<String>, GrammarError> {
    let mut out = Vec::new();
    let mut chars = rhs.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let start = i;
        let mut end = rhs.len();
        if c == '"' {
            chars.next();
            let mut closed = false;
            while let Some((j, ch)) = chars.next() {
                if ch == '\\' {
                    chars.next();
                } else if ch == '"' {
                    end = j + 1;
                    closed = true;
                    break;
                }
            }
            if !closed {
                return Err(GrammarError::Syntax { line, message: "unterminated quoted terminal".into() });
            }
        } else {
            while let Some(&(j, ch)) = chars.peek() {
                if ch.is_whitespace() {
                    end = j;
                    break;
                }
                chars.next();
            }
        }
        out.push(rhs[start..end].to_string());
    }
    Ok(out)
}

fn nonterminal_name(tok: &str) -> Option<&str> {
    tok.strip_prefix('<')?.strip_suffix('>').filter(|n| !n.is_empty() && !n.contains(['<', '>']))
}

/// Splits on `|` outside quoted terminals.
fn split_alternatives(rhs: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut in_quote = false;
    let mut escaped = false;
    for (i, c) in rhs.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if in_quote => escaped = true,
            '"' => in_quote = !in_quote,
            '|' if !in_quote => {
                parts.push(&rhs[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&rhs[start..]);
    parts
}

impl Grammar {
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        let mut raw: Vec<(String, Vec<Vec<String>>, usize)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (lhs, rhs) =
                trimmed.split_once("::=").ok_or_else(|| GrammarError::Syntax { line: line_no, message: "missing `::=`".into() })?;
            let name = nonterminal_name(lhs.trim())
                .ok_or_else(|| GrammarError::Syntax { line: line_no, message: format!("bad left-hand side {:?}", lhs.trim()) })?
                .to_string();
            if index.contains_key(&name) {
                return Err(GrammarError::Duplicate { name, line: line_no });
            }
            let mut alts = Vec::new();
            for alt in split_alternatives(rhs) {
                let toks = tokenize(alt, line_no)?;
                if toks.is_empty() {
                    return Err(GrammarError::Syntax { line: line_no, message: "empty alternative".into() });
                }
                alts.push(toks);
            }
            index.insert(name.clone(), raw.len());
            raw.push((name, alts, line_no));
        }
        if raw.is_empty() {
            return Err(GrammarError::Empty);
        }
        let mut rules = Vec::with_capacity(raw.len());
        for (name, alts, _) in raw {
            let mut alternatives = Vec::with_capacity(alts.len());
            for alt in alts {
                let mut syms = Vec::with_capacity(alt.len());
                for tok in alt {
                    match nonterminal_name(&tok) {
                        Some(nt) => {
                            let i = *index.get(nt).ok_or_else(|| GrammarError::Undefined(nt.to_string()))?;
                            syms.push(Symbol::Nonterminal(i));
                        }
                        None => syms.push(Symbol::Terminal(tok)),
                    }
                }
                alternatives.push(syms);
            }
            rules.push(Rule { name, alternatives });
        }
        Ok(Grammar { rules })
    }

    /// Default decision-tree grammar for an observation schema: numeric
    /// features split at `thresholds` evenly spaced interior points of their
    /// range, categorical features test equality with each category.
    pub fn for_spec(spec: &EnvSpec, thresholds: usize) -> Self {
        let mut text = String::from("<dt> ::= leaf | if <cond> then <dt> else <dt>\n<cond> ::= ");
        let conds: Vec<String> = spec
            .features()
            .iter()
            .enumerate()
            .map(|(i, f)| match f.kind {
                FeatureKind::Numeric { .. } => format!("x{i} > <v{i}>"),
                FeatureKind::Categorical { .. } => format!("x{i} == <v{i}>"),
            })
            .collect();
        text.push_str(&conds.join(" | "));
        text.push('\n');
        for (i, f) in spec.features().iter().enumerate() {
            let values: Vec<String> = match &f.kind {
                FeatureKind::Numeric { low, high } => {
                    let n = thresholds.max(1);
                    let mut vs: Vec<f64> = (1..=n).map(|k| low + (high - low) * k as f64 / (n + 1) as f64).collect();
                    vs.dedup();
                    vs.iter().map(|v| format!("{v:?}")).collect()
                }
                FeatureKind::Categorical { categories } => (0..categories.len()).map(|c| c.to_string()).collect(),
            };
            let _ = writeln!(text, "<v{i}> ::= {}", values.join(" | "));
        }
        Grammar::parse(&text).expect("generated grammar is well-formed")
    }

    pub fn start(&self) -> &str {
        &self.rules[0].name
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.name.as_str())
    }

    pub fn alternatives(&self, name: &str) -> Option<usize> {
        self.rules.iter().find(|r| r.name == name).map(|r| r.alternatives.len())
    }

    /// Left-most derivation from the start symbol. Every nonterminal expansion
    /// consumes the next codon `c` and picks alternative `c mod k`. No wrapping.
    pub fn derive(&self, genotype: &Genotype) -> Result<Derivation, IncompleteDerivation> {
        let codons = genotype.codons();
        let mut used = 0usize;
        let mut tokens = Vec::new();
        let mut stack = vec![Symbol::Nonterminal(0)];
        while let Some(sym) = stack.pop() {
            match sym {
                Symbol::Terminal(t) => tokens.push(t),
                Symbol::Nonterminal(r) => {
                    let Some(&c) = codons.get(used) else {
                        return Err(IncompleteDerivation { consumed: used });
                    };
                    used += 1;
                    let alts = &self.rules[r].alternatives;
                    let choice = &alts[c as usize % alts.len()];
                    stack.extend(choice.iter().rev().cloned());
                }
            }
        }
        Ok(Derivation { tokens, codons_used: used })
    }
}

impl std::fmt::Display for Grammar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in &self.rules {
            let alts: Vec<String> = r
                .alternatives
                .iter()
                .map(|alt| {
                    alt.iter()
                        .map(|s| match s {
                            Symbol::Terminal(t) => t.clone(),
                            Symbol::Nonterminal(i) => format!("<{}>", self.rules[*i].name),
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            writeln!(f, "<{}> ::= {}", r.name, alts.join(" | "))?;
        }
        Ok(())
    }
}
