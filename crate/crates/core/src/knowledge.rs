//! Weighted spatial rules and their grounding over a leaf frontier.
//!
//! Rules are written one per line:
//!
//! ```text
//! param e=60
//! uphill w=1.0: Flood(A) & Adjacent(A,B) & Lower(B,A) -> Flood(B)
//! w=1.0: HighElevation(A) -> !Flood(A)
//! ```
//!
//! `Flood` is the only open predicate; it becomes one inference atom per
//! leaf cell. `Adjacent`, `Lower` and `HighElevation` are closed: grounding
//! evaluates them to crisp 0/1 constants from the frontier geometry and the
//! cell-mean elevation. Blank lines and `#` comments are ignored; the
//! optional leading word names the rule.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::hierarchy::{cell_mean, leaf_adjacency, Frontier};
use crate::raster::SparseLabels;

/// The flood-domain rule set used when no rule file is given.
pub const DEFAULT_KB: &str = "\
# elevation threshold for HighElevation, in metres
param e=60
# flooded cells flood their lower neighbours
uphill_flood w=1.0: Flood(A) & Adjacent(A,B) & Lower(B,A) -> Flood(B)
# dry cells keep their higher neighbours dry
dry_uphill w=1.0: !Flood(A) & Adjacent(A,B) & Lower(A,B) -> !Flood(B)
smoothness w=0.2: Flood(A) & Adjacent(A,B) -> Flood(B)
high_ground w=1.0: HighElevation(A) -> !Flood(A)
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Predicate {
    Flood,
    Adjacent,
    Lower,
    HighElevation,
}

impl Predicate {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "Flood" => Predicate::Flood,
            "Adjacent" => Predicate::Adjacent,
            "Lower" => Predicate::Lower,
            "HighElevation" => Predicate::HighElevation,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Predicate::Flood | Predicate::HighElevation => 1,
            Predicate::Adjacent | Predicate::Lower => 2,
        }
    }

    /// Open predicates are inferred; closed ones are facts of the raster.
    pub fn is_open(self) -> bool {
        matches!(self, Predicate::Flood)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Predicate::Flood => "Flood",
            Predicate::Adjacent => "Adjacent",
            Predicate::Lower => "Lower",
            Predicate::HighElevation => "HighElevation",
        })
    }
}

/// A possibly negated predicate over rule variables (indices into
/// [`Rule::variables`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Literal {
    pub predicate: Predicate,
    pub negated: bool,
    pub args: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub weight: f64,
    pub body: Vec<Literal>,
    pub head: Literal,
    /// Variable names in order of first appearance.
    pub variables: Vec<String>,
}

impl Rule {
    pub fn is_pairwise(&self) -> bool {
        self.variables.len() == 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    rules: Vec<Rule>,
    params: BTreeMap<String, f64>,
}

impl KnowledgeBase {
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    pub fn default_flood() -> Self {
        parse_kb(DEFAULT_KB).expect("built-in rule set parses")
    }

    /// Keeps only the named rules, in their original order.
    pub fn subset(&self, names: &[&str]) -> Self {
        Self {
            rules: self
                .rules
                .iter()
                .filter(|r| names.contains(&r.name.as_str()))
                .cloned()
                .collect(),
            params: self.params.clone(),
        }
    }
}

pub fn parse_kb(text: &str) -> Result<KnowledgeBase> {
    let mut rules = Vec::new();
    let mut params = BTreeMap::new();
    let mut needs_e = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Rule { line: line_no, msg };

        if let Some(rest) = line.strip_prefix("param ") {
            let (name, value) = rest
                .split_once('=')
                .ok_or_else(|| err("expected `param <name>=<value>`".into()))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(format!("bad parameter value {:?}", value.trim())))?;
            if !value.is_finite() {
                return Err(err("parameter must be finite".into()));
            }
            params.insert(name.trim().to_string(), value);
            continue;
        }

        let rule = parse_rule(line, rules.len()).map_err(err)?;
        if needs_e.is_none()
            && rule
                .body
                .iter()
                .chain(std::iter::once(&rule.head))
                .any(|l| l.predicate == Predicate::HighElevation)
        {
            needs_e = Some(line_no);
        }
        rules.push(rule);
    }

    if rules.is_empty() {
        return Err(Error::Rule {
            line: 0,
            msg: "knowledge base has no rules".into(),
        });
    }
    if let Some(line) = needs_e {
        if !params.contains_key("e") {
            return Err(Error::Rule {
                line,
                msg: "HighElevation needs `param e=<metres>`".into(),
            });
        }
    }
    Ok(KnowledgeBase { rules, params })
}

fn parse_rule(line: &str, index: usize) -> std::result::Result<Rule, String> {
    let (prefix, rest) = line
        .split_once(':')
        .ok_or("expected `w=<float>: body -> head`")?;
    let mut words = prefix.split_whitespace();
    let (name, weight_text) = match (words.next(), words.next(), words.next()) {
        (Some(w), None, None) => (format!("rule{}", index + 1), w),
        (Some(n), Some(w), None) => (n.to_string(), w),
        _ => return Err(format!("bad rule prefix {prefix:?}")),
    };
    let weight_text = weight_text
        .strip_prefix("w=")
        .ok_or_else(|| format!("expected w=<float>, got {weight_text:?}"))?;
    let weight: f64 = weight_text
        .parse()
        .map_err(|_| format!("bad weight {weight_text:?}"))?;
    if !weight.is_finite() {
        return Err("weight must be finite".into());
    }
    if weight < 0.0 {
        return Err(format!("negative weight {weight}"));
    }

    let (body_text, head_text) = rest.split_once("->").ok_or("missing `->`")?;
    let mut variables = Vec::new();
    let body = body_text
        .split('&')
        .map(|t| parse_literal(t, &mut variables))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let head = parse_literal(head_text, &mut variables)?;

    if variables.len() > 2 {
        return Err(format!(
            "rules may use at most two cell variables, found {}",
            variables.len()
        ));
    }
    if variables.len() == 2 {
        let linked = body.iter().any(|l| {
            l.predicate == Predicate::Adjacent && !l.negated && l.args[0] != l.args[1]
        });
        if !linked {
            return Err("two-variable rules need a positive Adjacent(X,Y) in the body".into());
        }
    }
    Ok(Rule {
        name,
        weight,
        body,
        head,
        variables,
    })
}

fn parse_literal(text: &str, variables: &mut Vec<String>) -> std::result::Result<Literal, String> {
    let text = text.trim();
    let (negated, text) = match text.strip_prefix('!') {
        Some(t) => (true, t.trim_start()),
        None => (false, text),
    };
    let open = text.find('(').ok_or_else(|| format!("expected Pred(...) in {text:?}"))?;
    if !text.ends_with(')') {
        return Err(format!("unclosed literal {text:?}"));
    }
    let name = text[..open].trim();
    let predicate = Predicate::parse(name).ok_or_else(|| format!("unknown predicate {name:?}"))?;
    let mut args = Vec::new();
    for var in text[open + 1..text.len() - 1].split(',') {
        let var = var.trim();
        if var.is_empty() || !var.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("bad variable {var:?}"));
        }
        let idx = match variables.iter().position(|v| v == var) {
            Some(i) => i,
            None => {
                variables.push(var.to_string());
                variables.len() - 1
            }
        };
        args.push(idx);
    }
    if args.len() != predicate.arity() {
        return Err(format!(
            "{predicate} takes {} argument(s), got {}",
            predicate.arity(),
            args.len()
        ));
    }
    Ok(Literal {
        predicate,
        negated,
        args,
    })
}

/// A ground literal: an open atom or a pre-evaluated closed predicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroundLiteral {
    Atom { index: usize, negated: bool },
    Const(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundRule {
    /// Index of the source rule in the knowledge base.
    pub rule: usize,
    pub weight: f64,
    pub body: Vec<GroundLiteral>,
    pub head: GroundLiteral,
    /// Leaf indices bound to the rule's variables.
    pub cells: [usize; 2],
}

/// Grounded rules over one atom per leaf cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundProgram {
    n_atoms: usize,
    observed: Vec<Option<f64>>,
    conflicted: Vec<usize>,
    rules: Vec<GroundRule>,
}

impl GroundProgram {
    /// Builds a program directly; used for hand-made test programs.
    pub fn from_parts(
        n_atoms: usize,
        observed: Vec<Option<f64>>,
        rules: Vec<GroundRule>,
    ) -> Result<Self> {
        if observed.len() != n_atoms {
            return Err(Error::Length {
                expected: n_atoms,
                got: observed.len(),
            });
        }
        for r in &rules {
            if !(r.weight.is_finite() && r.weight >= 0.0) {
                return Err(Error::Contract(format!("rule weight {} is not >= 0", r.weight)));
            }
            for lit in r.body.iter().chain(std::iter::once(&r.head)) {
                match *lit {
                    GroundLiteral::Atom { index, .. } if index >= n_atoms => {
                        return Err(Error::Contract(format!("atom {index} out of range")));
                    }
                    GroundLiteral::Const(c) if !(0.0..=1.0).contains(&c) => {
                        return Err(Error::Contract(format!("constant {c} outside [0, 1]")));
                    }
                    _ => {}
                }
            }
        }
        Ok(Self {
            n_atoms,
            observed,
            conflicted: Vec::new(),
            rules,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Observed truth for clamped atoms.
    pub fn observed(&self) -> &[Option<f64>] {
        &self.observed
    }

    /// Leaves whose sparse labels disagree with no majority.
    pub fn conflicted(&self) -> &[usize] {
        &self.conflicted
    }

    pub fn rules(&self) -> &[GroundRule] {
        &self.rules
    }

    pub fn counts(&self) -> GroundCounts {
        count_ground_atoms(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GroundCounts {
    pub n_atoms: usize,
    pub n_ground_rules: usize,
    pub n_clamped: usize,
}

pub fn count_ground_atoms(program: &GroundProgram) -> GroundCounts {
    GroundCounts {
        n_atoms: program.n_atoms,
        n_ground_rules: program.rules.len(),
        n_clamped: program.observed.iter().filter(|o| o.is_some()).count(),
    }
}

/// Grounds every rule over the whole frontier.
pub fn ground(
    kb: &KnowledgeBase,
    frontier: &Frontier,
    elevation: &[f32],
    sparse: &SparseLabels,
) -> GroundProgram {
    ground_active(kb, frontier, elevation, sparse, None)
}

/// Grounds rules, keeping only groundings that bind at least one leaf
/// flagged in `active` (all leaves when `None`).
///
/// Groundings whose closed literals make the rule trivially satisfied (a
/// false body constant or a true head constant) are dropped: their distance
/// to satisfaction is zero for every assignment.
pub fn ground_active(
    kb: &KnowledgeBase,
    frontier: &Frontier,
    elevation: &[f32],
    sparse: &SparseLabels,
    active: Option<&[bool]>,
) -> GroundProgram {
    let n = frontier.len();
    let cols = frontier.cols();
    let elev: Vec<f64> = frontier
        .leaves()
        .iter()
        .map(|c| cell_mean(elevation, cols, c))
        .collect();
    let threshold = kb.param("e").unwrap_or(f64::INFINITY);

    let adjacency = leaf_adjacency(frontier);
    let mut ordered: Vec<(usize, usize)> = adjacency
        .iter()
        .flat_map(|&(a, b)| [(a, b), (b, a)])
        .collect();
    ordered.sort_unstable();

    let is_active = |i: usize| active.is_none_or(|mask| mask[i]);
    let adjacent = |a: usize, b: usize| a != b && adjacency.binary_search(&(a.min(b), a.max(b))).is_ok();

    let mut rules = Vec::new();
    for (ri, rule) in kb.rules.iter().enumerate() {
        let mut emit = |binding: [usize; 2]| {
            let eval = |lit: &Literal| -> GroundLiteral {
                let x = binding[lit.args[0]];
                let closed = |truth: bool| {
                    let t = if truth { 1.0 } else { 0.0 };
                    GroundLiteral::Const(if lit.negated { 1.0 - t } else { t })
                };
                match lit.predicate {
                    Predicate::Flood => GroundLiteral::Atom {
                        index: x,
                        negated: lit.negated,
                    },
                    Predicate::HighElevation => closed(elev[x] > threshold),
                    Predicate::Lower => closed(elev[x] <= elev[binding[lit.args[1]]]),
                    Predicate::Adjacent => closed(adjacent(x, binding[lit.args[1]])),
                }
            };
            let body: Vec<GroundLiteral> = rule.body.iter().map(eval).collect();
            let head = eval(&rule.head);
            let body_false = body.contains(&GroundLiteral::Const(0.0));
            let head_true = head == GroundLiteral::Const(1.0);
            if !(body_false || head_true) {
                rules.push(GroundRule {
                    rule: ri,
                    weight: rule.weight,
                    body,
                    head,
                    cells: binding,
                });
            }
        };

        if rule.is_pairwise() {
            for &(a, b) in &ordered {
                if is_active(a) || is_active(b) {
                    emit([a, b]);
                }
            }
        } else {
            for i in (0..n).filter(|&i| is_active(i)) {
                emit([i, i]);
            }
        }
    }

    let (observed, conflicted) = clamp_from_labels(frontier, sparse);
    GroundProgram {
        n_atoms: n,
        observed,
        conflicted,
        rules,
    }
}

/// Majority label per leaf; ties leave the leaf free and are reported.
fn clamp_from_labels(frontier: &Frontier, sparse: &SparseLabels) -> (Vec<Option<f64>>, Vec<usize>) {
    let owner = frontier.owner_grid();
    let cols = frontier.cols();
    let mut votes = vec![(0usize, 0usize); frontier.len()];
    for e in sparse.entries() {
        let leaf = owner[e.row * cols + e.col] as usize;
        if e.flood {
            votes[leaf].1 += 1;
        } else {
            votes[leaf].0 += 1;
        }
    }
    let mut conflicted = Vec::new();
    let observed = votes
        .iter()
        .enumerate()
        .map(|(i, &(dry, flood))| match dry.cmp(&flood) {
            _ if dry + flood == 0 => None,
            std::cmp::Ordering::Less => Some(1.0),
            std::cmp::Ordering::Greater => Some(0.0),
            std::cmp::Ordering::Equal => {
                conflicted.push(i);
                None
            }
        })
        .collect();
    (observed, conflicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_root, build_uniform, HierarchyConfig};
    use crate::raster::SparseLabel;

    #[test]
    fn parses_uphill_rule() {
        let kb = parse_kb("w=1.0: Flood(A) & Adjacent(A,B) & Lower(B,A) -> Flood(B)").unwrap();
        assert_eq!(kb.len(), 1);
        let r = &kb.rules()[0];
        assert_eq!(r.body.len(), 3);
        assert_eq!(r.variables, vec!["A", "B"]);
        assert_eq!(r.body[2].args, vec![1, 0]);
        assert_eq!(r.name, "rule1");
    }

    #[test]
    fn parses_negated_head() {
        let kb = parse_kb("param e=50\nw=2.0: HighElevation(A) -> !Flood(A)").unwrap();
        let r = &kb.rules()[0];
        assert!(r.head.negated);
        assert_eq!(r.head.predicate, Predicate::Flood);
        assert_eq!(r.weight, 2.0);
        assert_eq!(kb.param("e"), Some(50.0));
    }

    #[test]
    fn rejects_bad_rules() {
        let cases = [
            ("w=-1: Flood(A) -> Flood(A)", 1),
            ("w=1: River(A) -> Flood(A)", 1),
            ("# c\nw=1 Flood(A) -> Flood(A)", 2),
            ("w=1: Flood(A) & Flood(B) -> Flood(B)", 1),
            ("w=1: Flood(A) & Adjacent(A,B) & Adjacent(B,C) -> Flood(C)", 1),
            ("w=1: Flood(A,B) -> Flood(A)", 1),
            ("w=1: HighElevation(A) -> !Flood(A)", 1),
        ];
        for (text, line) in cases {
            match parse_kb(text) {
                Err(Error::Rule { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: unexpected {other:?}"),
            }
        }
        assert!(parse_kb("# nothing\n").is_err());
    }

    #[test]
    fn default_kb_parses() {
        let kb = KnowledgeBase::default_flood();
        assert_eq!(kb.len(), 4);
        let names: Vec<&str> = kb.rules().iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["uphill_flood", "dry_uphill", "smoothness", "high_ground"]);
        assert_eq!(kb.rules()[2].weight, 0.2);
    }

    #[test]
    fn adjacency_rule_on_two_by_two() {
        let kb = parse_kb("w=1: Flood(A) & Adjacent(A,B) -> Flood(B)").unwrap();
        let f = build_root(8, 8, HierarchyConfig::new(2, 2).unwrap()).unwrap();
        let p = ground(&kb, &f, &[0.0; 64], &SparseLabels::default());
        assert_eq!(p.rules().len(), 8);
        assert_eq!(p.n_atoms(), 4);
    }

    #[test]
    fn majority_clamp() {
        let kb = KnowledgeBase::default_flood();
        let f = build_root(4, 4, HierarchyConfig::new(2, 1).unwrap()).unwrap();
        let labels = SparseLabels::new(
            vec![
                SparseLabel { row: 0, col: 0, flood: true },
                SparseLabel { row: 0, col: 1, flood: true },
                SparseLabel { row: 1, col: 0, flood: false },
                SparseLabel { row: 2, col: 2, flood: true },
                SparseLabel { row: 3, col: 3, flood: false },
            ],
            4,
            4,
        )
        .unwrap();
        let p = ground(&kb, &f, &[0.0; 16], &labels);
        assert_eq!(p.observed()[0], Some(1.0));
        assert_eq!(p.observed()[3], None);
        assert_eq!(p.conflicted(), &[3]);
        assert_eq!(p.counts().n_clamped, 1);
    }

    #[test]
    fn closed_predicates_are_crisp() {
        let kb = KnowledgeBase::default_flood();
        let f = build_uniform(6, 6, HierarchyConfig::new(2, 1).unwrap(), 0).unwrap();
        let elevation: Vec<f32> = (0..36).map(|i| ((i * 37) % 100) as f32).collect();
        let p = ground(&kb, &f, &elevation, &SparseLabels::default());
        for r in p.rules() {
            for lit in r.body.iter().chain(std::iter::once(&r.head)) {
                if let GroundLiteral::Const(c) = lit {
                    assert!(*c == 0.0 || *c == 1.0);
                }
            }
        }
    }

    #[test]
    fn full_finest_grounding_count() {
        let kb = parse_kb("w=1: Flood(A) & Adjacent(A,B) -> Flood(B)").unwrap();
        let f = build_uniform(64, 64, HierarchyConfig::new(2, 2).unwrap(), 0).unwrap();
        let p = ground(&kb, &f, &vec![0.0; 64 * 64], &SparseLabels::default());
        let c = p.counts();
        assert_eq!(c.n_atoms, 4096);
        assert_eq!(c.n_ground_rules, 2 * (2 * 64 * 63));
    }

    #[test]
    fn grounding_is_deterministic() {
        let kb = KnowledgeBase::default_flood();
        let f = build_root(16, 16, HierarchyConfig::new(2, 2).unwrap()).unwrap();
        let f = f.refine(&f.leaves()[..3]).unwrap();
        let elevation: Vec<f32> = (0..256).map(|i| ((i * 91) % 97) as f32).collect();
        let a = ground(&kb, &f, &elevation, &SparseLabels::default());
        let b = ground(&kb, &f, &elevation, &SparseLabels::default());
        assert_eq!(a, b);
        let keys: Vec<_> = a.rules().iter().map(|r| (r.rule, r.cells)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
