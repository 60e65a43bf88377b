//! Rules compiled to slot-addressed join plans.

use std::collections::HashMap;

use crate::ir::{
    apply_binop, compare, negate, BinOp, CmpOp, Literal, Rule, RuleId, SemanticError, Term, UnaryOp, Value,
};

#[derive(Clone, Debug)]
pub(crate) enum SlotTerm {
    Slot(usize),
    Const(Value),
    Unary(UnaryOp, Box<SlotTerm>),
    Binary(BinOp, Box<SlotTerm>, Box<SlotTerm>),
}

impl SlotTerm {
    pub(crate) fn eval(&self, env: &[Option<Value>]) -> Result<Value, SemanticError> {
        match self {
            SlotTerm::Slot(s) => Ok(env[*s].clone().expect("plan binds slot before use")),
            SlotTerm::Const(c) => Ok(c.clone()),
            SlotTerm::Unary(UnaryOp::Neg, t) => negate(t.eval(env)?),
            SlotTerm::Binary(op, l, r) => apply_binop(*op, l.eval(env)?, r.eval(env)?),
        }
    }

    fn slots(&self, out: &mut Vec<usize>) {
        match self {
            SlotTerm::Slot(s) => out.push(*s),
            SlotTerm::Const(_) => {}
            SlotTerm::Unary(_, t) => t.slots(out),
            SlotTerm::Binary(_, l, r) => {
                l.slots(out);
                r.slots(out);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum ArgMatch {
    /// First occurrence of a variable: bind the column.
    Bind(usize),
    /// Column must equal an already bound slot.
    Check(usize),
    Const(Value),
    Ignore,
}

#[derive(Clone, Debug)]
pub(crate) struct PlannedAtom {
    pub relation: String,
    pub args: Vec<ArgMatch>,
    /// Columns whose value is known before this atom is scanned.
    pub key: Vec<usize>,
}

impl PlannedAtom {
    pub(crate) fn key_values(&self, env: &[Option<Value>]) -> Vec<Value> {
        self.key
            .iter()
            .map(|&i| match &self.args[i] {
                ArgMatch::Check(s) => env[*s].clone().expect("bound"),
                ArgMatch::Const(c) => c.clone(),
                _ => unreachable!("key column is bound"),
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Filter {
    Compare {
        op: CmpOp,
        lhs: SlotTerm,
        rhs: SlotTerm,
        loose: bool,
    },
    Absent {
        relation: String,
        /// `None` for wildcard columns.
        args: Vec<Option<SlotTerm>>,
    },
}

impl Filter {
    fn slots(&self) -> Vec<usize> {
        let mut out = Vec::new();
        match self {
            Filter::Compare { lhs, rhs, .. } => {
                lhs.slots(&mut out);
                rhs.slots(&mut out);
            }
            Filter::Absent { args, .. } => args.iter().flatten().for_each(|t| t.slots(&mut out)),
        }
        out
    }

    pub(crate) fn absent_key(&self) -> Option<(&str, Vec<usize>)> {
        match self {
            Filter::Absent { relation, args } => {
                Some((relation, args.iter().enumerate().filter(|(_, a)| a.is_some()).map(|(i, _)| i).collect()))
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct CompiledRule {
    pub id: RuleId,
    pub head_relation: String,
    pub head: Vec<SlotTerm>,
    pub atoms: Vec<PlannedAtom>,
    /// Filters checked before any atom is scanned (ground filters).
    pub pre_filters: Vec<Filter>,
    /// `filters[k]` runs right after atom `k` binds its columns.
    pub filters: Vec<Vec<Filter>>,
    pub slot_count: usize,
}

impl CompiledRule {
    /// Compile a safe rule. Arithmetic arguments of positive atoms become
    /// fresh slots checked by an equality filter once all inputs are bound.
    pub(crate) fn compile(rule: &Rule) -> CompiledRule {
        let mut slots: HashMap<String, usize> = HashMap::new();
        let mut slot_count = 0usize;
        let mut atoms = Vec::new();
        let mut deferred: Vec<Filter> = Vec::new();

        let mut bound = Vec::new();
        for lit in &rule.body {
            let Literal::Positive(atom) = lit else {
                continue;
            };
            let mut args = Vec::with_capacity(atom.args.len());
            let mut key = Vec::new();
            let bound_before = bound.len();
            for (col, t) in atom.args.iter().enumerate() {
                let m = match t {
                    Term::Wildcard => ArgMatch::Ignore,
                    Term::Const(c) => {
                        key.push(col);
                        ArgMatch::Const(c.clone())
                    }
                    Term::Var(v) => match slots.get(v) {
                        Some(&s) if bound.contains(&s) => {
                            // A repeat within this atom is checked during the scan.
                            if bound[..bound_before].contains(&s) {
                                key.push(col);
                            }
                            ArgMatch::Check(s)
                        }
                        Some(&s) => {
                            bound.push(s);
                            ArgMatch::Bind(s)
                        }
                        None => {
                            let s = slot_count;
                            slot_count += 1;
                            slots.insert(v.clone(), s);
                            bound.push(s);
                            ArgMatch::Bind(s)
                        }
                    },
                    Term::Unary(..) | Term::Binary(..) => {
                        let s = slot_count;
                        slot_count += 1;
                        bound.push(s);
                        deferred.push(Filter::Compare {
                            op: CmpOp::Eq,
                            lhs: SlotTerm::Slot(s),
                            rhs: to_slot_term(t, &mut slots, &mut slot_count),
                            loose: false,
                        });
                        ArgMatch::Bind(s)
                    }
                };
                args.push(m);
            }
            atoms.push(PlannedAtom { relation: atom.relation.clone(), args, key });
        }

        for lit in &rule.body {
            match lit {
                Literal::Positive(_) => {}
                Literal::Negative(atom) => deferred.push(Filter::Absent {
                    relation: atom.relation.clone(),
                    args: atom
                        .args
                        .iter()
                        .map(|t| match t {
                            Term::Wildcard => None,
                            t => Some(to_slot_term(t, &mut slots, &mut slot_count)),
                        })
                        .collect(),
                }),
                Literal::Constraint(c) => deferred.push(Filter::Compare {
                    op: c.op,
                    lhs: to_slot_term(&c.lhs, &mut slots, &mut slot_count),
                    rhs: to_slot_term(&c.rhs, &mut slots, &mut slot_count),
                    loose: c.loose_float,
                }),
            }
        }

        // Slot -> index of the atom that binds it.
        let mut bound_at = vec![usize::MAX; slot_count];
        for (k, a) in atoms.iter().enumerate() {
            for m in &a.args {
                if let ArgMatch::Bind(s) = m {
                    bound_at[*s] = k;
                }
            }
        }
        let mut pre_filters = Vec::new();
        let mut filters = vec![Vec::new(); atoms.len()];
        for f in deferred {
            let needed = f.slots();
            match needed.iter().map(|s| bound_at[*s]).max() {
                None => pre_filters.push(f),
                Some(k) => {
                    assert!(k != usize::MAX, "rule {} is unsafe", rule.id);
                    filters[k].push(f);
                }
            }
        }

        let head = rule.head.args.iter().map(|t| to_slot_term(t, &mut slots, &mut slot_count)).collect();
        CompiledRule {
            id: rule.id,
            head_relation: rule.head.relation.clone(),
            head,
            atoms,
            pre_filters,
            filters,
            slot_count,
        }
    }
}

fn to_slot_term(t: &Term, slots: &mut HashMap<String, usize>, count: &mut usize) -> SlotTerm {
    match t {
        Term::Var(v) => SlotTerm::Slot(*slots.entry(v.clone()).or_insert_with(|| {
            *count += 1;
            *count - 1
        })),
        Term::Const(c) => SlotTerm::Const(c.clone()),
        Term::Wildcard => unreachable!("wildcards are rejected by validation outside atoms"),
        Term::Unary(op, inner) => SlotTerm::Unary(*op, Box::new(to_slot_term(inner, slots, count))),
        Term::Binary(op, l, r) => {
            SlotTerm::Binary(*op, Box::new(to_slot_term(l, slots, count)), Box::new(to_slot_term(r, slots, count)))
        }
    }
}

pub(crate) fn check_compare(
    op: CmpOp,
    lhs: &SlotTerm,
    rhs: &SlotTerm,
    loose: bool,
    env: &[Option<Value>],
) -> Result<bool, SemanticError> {
    compare(op, &lhs.eval(env)?, &rhs.eval(env)?, loose)
}
