//! Skeletons and candidate rules.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::GenConfig;
use crate::adapters::{Dialect, DialectFeatures};
use crate::ir::{
    check_safety, Annotation, Atom, BinOp, CmpOp, Constraint, FactStore, Literal, Program, RelationDecl, Rule, RuleId,
    SubsumptionRule, Term, Value, ValueKind,
};

/// What the generator may emit for one engine: the configured features
/// cut down to what the dialect can express.
#[derive(Clone, Debug)]
pub struct Palette {
    pub kinds: Vec<ValueKind>,
    pub comparisons: Vec<CmpOp>,
    pub arithmetic: bool,
    pub wildcard_in_negation: bool,
    pub subsumption: bool,
    pub annotations: bool,
    pub nonnegative: bool,
    pub stratified: bool,
}

impl Palette {
    pub fn new(cfg: &GenConfig, dialect: Dialect, features: &DialectFeatures) -> Palette {
        let mut kinds: Vec<ValueKind> = cfg.kinds.iter().copied().filter(|k| features.kinds.contains(k)).collect();
        if kinds.is_empty() {
            kinds = features.kinds.clone();
        }
        Palette {
            kinds,
            comparisons: features.comparisons.clone(),
            arithmetic: features.supports_arithmetic,
            wildcard_in_negation: features.supports_wildcard_in_negation,
            subsumption: features.supports_subsumption,
            annotations: dialect == Dialect::SouffleLike,
            nonnegative: dialect == Dialect::MuZLike,
            stratified: !features.supports_negation_in_recursion,
        }
    }
}

pub fn random_value(cfg: &GenConfig, palette: &Palette, kind: ValueKind, rng: &mut impl Rng) -> Value {
    let pools = &cfg.pools;
    match kind {
        ValueKind::Number => {
            let lo = if palette.nonnegative { pools.number.0.max(0) } else { pools.number.0 };
            Value::Number(rng.random_range(lo..=pools.number.1.max(lo)))
        }
        ValueKind::Unsigned => Value::Unsigned(rng.random_range(pools.unsigned.0..=pools.unsigned.1)),
        ValueKind::Float => Value::Float(*pools.floats.choose(rng).unwrap_or(&0.0)),
        ValueKind::Symbol => Value::Symbol(pools.symbols.choose(rng).cloned().unwrap_or_else(|| "a".into())),
    }
}

pub fn skeleton_relation_name(i: usize) -> String {
    format!("e{i}")
}

pub fn fresh_relation_name(id: RuleId) -> String {
    format!("q{}", id.0)
}

/// Input relations with random kinds, arities and facts.
pub fn gen_skeleton(cfg: &GenConfig, palette: &Palette, rng: &mut impl Rng) -> (Vec<RelationDecl>, FactStore) {
    let sk = &cfg.skeleton;
    let n = rng.random_range(sk.relations.0..=sk.relations.1);
    let mut decls = Vec::with_capacity(n);
    let mut facts = FactStore::new();
    for i in 0..n {
        let arity = rng.random_range(sk.arity.0..=sk.arity.1);
        let kinds: Vec<ValueKind> = (0..arity).map(|_| *palette.kinds.choose(rng).expect("kinds")).collect();
        let decl = RelationDecl::new(skeleton_relation_name(i), &kinds);
        facts.ensure(&decl.name);
        for _ in 0..rng.random_range(sk.facts.0..=sk.facts.1) {
            let tuple = kinds.iter().map(|k| random_value(cfg, palette, *k, rng)).collect();
            facts.insert(&decl.name, tuple);
        }
        decls.push(decl);
    }
    (decls, facts)
}

/// A rule plus whatever it introduces alongside itself.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub rule: Rule,
    pub fresh: Option<RelationDecl>,
    pub subsumption: Option<SubsumptionRule>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("no existing relation matches a head the body can bind")]
pub struct NoCompatibleHead;

fn var_name(i: usize) -> String {
    let letter = char::from(b'A' + (i % 26) as u8);
    if i < 26 {
        letter.to_string()
    } else {
        format!("{letter}{}", i / 26)
    }
}

#[derive(Default)]
struct Scope {
    vars: Vec<(String, ValueKind)>,
}

impl Scope {
    fn fresh(&mut self, kind: ValueKind) -> Term {
        let name = var_name(self.vars.len());
        self.vars.push((name.clone(), kind));
        Term::Var(name)
    }

    fn of_kind(&self, kind: ValueKind) -> Vec<&str> {
        self.vars.iter().filter(|(_, k)| *k == kind).map(|(v, _)| v.as_str()).collect()
    }

    fn pick(&self, kind: ValueKind, rng: &mut impl Rng) -> Option<Term> {
        self.of_kind(kind).choose(rng).map(|v| Term::var(*v))
    }
}

struct Synth<'a, R> {
    cfg: &'a GenConfig,
    palette: &'a Palette,
    rng: &'a mut R,
    scope: Scope,
}

const OPS: [(BinOp, u32); 6] =
    [(BinOp::Add, 4), (BinOp::Sub, 3), (BinOp::Mul, 3), (BinOp::Div, 1), (BinOp::Mod, 1), (BinOp::Pow, 1)];

impl<R: Rng> Synth<'_, R> {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.random_bool(p.clamp(0.0, 1.0))
    }

    fn constant(&mut self, kind: ValueKind) -> Term {
        Term::Const(random_value(self.cfg, self.palette, kind, self.rng))
    }

    /// `base` or, with the arithmetic probability, `base op operand`.
    fn maybe_arith(&mut self, base: Term, kind: ValueKind) -> Term {
        if !kind.is_numeric() || !self.palette.arithmetic || !self.chance(self.cfg.features.arithmetic) {
            return base;
        }
        let op = OPS.choose_weighted(self.rng, |(_, w)| *w).expect("ops").0;
        let operand = match self.scope.pick(kind, self.rng) {
            Some(v) if self.rng.random_bool(0.5) => v,
            _ => self.constant(kind),
        };
        Term::binary(op, base, operand)
    }

    fn body_arg(&mut self, kind: ValueKind) -> Term {
        let r: f64 = self.rng.random();
        let pw = self.cfg.features.wildcard;
        if r < pw {
            Term::Wildcard
        } else if r < pw + self.cfg.features.constant_arg {
            self.constant(kind)
        } else if let Some(v) = self.scope.pick(kind, self.rng).filter(|_| self.rng.random_bool(0.5)) {
            v
        } else {
            self.scope.fresh(kind)
        }
    }

    fn positive_atom(&mut self, decl: &RelationDecl) -> Literal {
        let args = decl.kinds().into_iter().map(|k| self.body_arg(k)).collect();
        Literal::Positive(Atom::new(decl.name.clone(), args))
    }

    fn negative_atom(&mut self, decl: &RelationDecl) -> Literal {
        let args = decl
            .kinds()
            .into_iter()
            .map(|k| match self.scope.pick(k, self.rng) {
                Some(v) if self.rng.random_bool(0.7) => v,
                _ if self.palette.wildcard_in_negation && self.rng.random_bool(0.3) => Term::Wildcard,
                _ => self.constant(k),
            })
            .collect();
        Literal::Negative(Atom::new(decl.name.clone(), args))
    }

    fn constraint(&mut self) -> Option<Literal> {
        let (name, kind) = self.scope.vars.choose(self.rng)?.clone();
        let ops: Vec<CmpOp> = self
            .palette
            .comparisons
            .iter()
            .copied()
            .filter(|op| kind != ValueKind::Symbol || matches!(op, CmpOp::Eq | CmpOp::Ne))
            .collect();
        let op = *ops.choose(self.rng)?;
        let lhs = self.maybe_arith(Term::Var(name.clone()), kind);
        let rhs = match self.scope.pick(kind, self.rng) {
            Some(Term::Var(v)) if v != name && self.rng.random_bool(0.4) => Term::Var(v),
            _ => self.constant(kind),
        };
        Some(Literal::Constraint(Constraint::new(op, lhs, rhs)))
    }

    fn fresh_head(&mut self, name: String) -> Atom {
        let mut vars = self.scope.vars.clone();
        vars.shuffle(self.rng);
        let arity = if vars.is_empty() { 0 } else { self.rng.random_range(1..=vars.len().min(3)) };
        let args = vars[..arity].iter().map(|(v, k)| self.maybe_arith(Term::var(v.as_str()), *k)).collect();
        Atom::new(name, args)
    }

    fn existing_head(&mut self, program: &Program) -> Result<Atom, NoCompatibleHead> {
        let subsumed: Vec<&str> = program.subsumptions.iter().map(|s| s.relation.as_str()).collect();
        let options: Vec<&RelationDecl> = program
            .decls
            .iter()
            .filter(|d| !subsumed.contains(&d.name.as_str()))
            .filter(|d| d.kinds().iter().all(|k| !self.scope.of_kind(*k).is_empty()))
            .collect();
        let decl = *options.choose(self.rng).ok_or(NoCompatibleHead)?;
        let args = decl
            .kinds()
            .into_iter()
            .map(|k| {
                let v = self.scope.pick(k, self.rng).expect("kind checked");
                self.maybe_arith(v, k)
            })
            .collect();
        Ok(Atom::new(decl.name.clone(), args))
    }

    /// `rel(.., D, ..) <= rel(.., E, ..) :- D < E` on one numeric column;
    /// the other columns are either shared or ignored.
    fn subsumption(&mut self, decl: &RelationDecl) -> Option<SubsumptionRule> {
        let numeric: Vec<usize> = (0..decl.arity()).filter(|i| decl.attrs[*i].kind.is_numeric()).collect();
        let col = *numeric.choose(self.rng)?;
        let mut dominated = Vec::new();
        let mut dominating = Vec::new();
        for i in 0..decl.arity() {
            let (lo, hi) = if i == col {
                (Term::var("D"), Term::var("E"))
            } else if self.rng.random_bool(0.5) {
                (Term::var(format!("S{i}")), Term::var(format!("S{i}")))
            } else {
                (Term::Wildcard, Term::Wildcard)
            };
            dominated.push(lo);
            dominating.push(hi);
        }
        let op = if self.rng.random_bool(0.5) { CmpOp::Lt } else { CmpOp::Gt };
        Some(SubsumptionRule {
            relation: decl.name.clone(),
            dominated,
            dominating,
            condition: vec![Constraint::new(op, Term::var("D"), Term::var("E"))],
        })
    }
}

/// Body first, then a head over the body's variables: a fresh relation,
/// or with probability `p_head` an existing one of matching kinds.
pub fn gen_candidate_rule(
    program: &Program,
    id: RuleId,
    cfg: &GenConfig,
    palette: &Palette,
    rng: &mut impl Rng,
) -> Candidate {
    assert!(!program.decls.is_empty(), "no relation to build a body from");
    let mut s = Synth { cfg, palette, rng, scope: Scope::default() };
    let mut body = Vec::new();
    let n_atoms = s.rng.random_range(1..=cfg.max_body_atoms.max(1));
    for _ in 0..n_atoms {
        let decl = program.decls.choose(s.rng).expect("decls");
        body.push(s.positive_atom(decl));
    }
    if s.chance(cfg.features.negation) {
        let decl = program.decls.choose(s.rng).expect("decls");
        body.push(s.negative_atom(decl));
    }
    for _ in 0..2 {
        if !s.chance(cfg.features.constraint) {
            break;
        }
        if let Some(c) = s.constraint() {
            body.push(c);
        }
    }

    let existing = if s.chance(cfg.p_head) { s.existing_head(program).ok() } else { None };
    let candidate = match existing {
        Some(head) => Candidate { rule: Rule { id, head, body }, fresh: None, subsumption: None },
        None => {
            let head = s.fresh_head(fresh_relation_name(id));
            let kinds: Vec<ValueKind> = head
                .args
                .iter()
                .map(|t| {
                    let v = t.vars()[0];
                    s.scope.vars.iter().find(|(n, _)| n == v).expect("bound").1
                })
                .collect();
            let mut decl = RelationDecl::new(head.relation.clone(), &kinds);
            if palette.annotations && s.chance(cfg.features.annotation) {
                let a =
                    *[Annotation::Magic, Annotation::NoMagic, Annotation::Inline].choose(s.rng).expect("annotations");
                decl.annotations.insert(a);
            }
            let subsumption =
                if palette.subsumption && s.chance(cfg.features.subsumption) { s.subsumption(&decl) } else { None };
            Candidate { rule: Rule { id, head, body }, fresh: Some(decl), subsumption }
        }
    };
    debug_assert!(check_safety(&candidate.rule).is_ok(), "unsafe candidate {}", candidate.rule);
    candidate
}
