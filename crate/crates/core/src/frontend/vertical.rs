//! Expansion of `pred(Id, Val@Col)` into one rule per non-id column.

use super::ast::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerticalError {
    #[error("`@` over {0}, which has no declared schema")]
    NoSchema(String),
    #[error("`@` over {0} needs at least two columns")]
    TooNarrow(String),
    #[error("more than one `@` literal in a rule")]
    Several,
    #[error("rule has no `@` literal")]
    None,
}

/// Expands the rule's single `@` literal over a predicate of arity `m` into
/// `m - 1` rules. Column 1 is the id; rule `j` reads column `j + 1` into the
/// value variable and replaces the column variable by the constant `j`.
pub fn expand_verticalize(rule: &Rule, schemas: &[Schema]) -> Result<Vec<Rule>, VerticalError> {
    let mut at = None;
    for (i, l) in rule.body.iter().enumerate() {
        if matches!(l, Literal::Vertical { .. }) {
            if at.is_some() {
                return Err(VerticalError::Several);
            }
            at = Some(i);
        }
    }
    let at = at.ok_or(VerticalError::None)?;
    let Literal::Vertical { pred, id, val, col } = &rule.body[at] else {
        unreachable!()
    };
    let schema = schemas
        .iter()
        .find(|s| &s.pred == pred)
        .ok_or_else(|| VerticalError::NoSchema(pred.clone()))?;
    let m = schema.columns.len();
    if m < 2 {
        return Err(VerticalError::TooNarrow(pred.clone()));
    }
    let mut out = Vec::with_capacity(m - 1);
    for j in 1..m {
        let mut subst = |v: &str| {
            if v == col {
                Term::int(j as i64)
            } else {
                Term::Var(v.to_string())
            }
        };
        let mut args = vec![Term::Anon; m];
        args[0] = id.rename(&mut subst);
        args[j] = Term::Var(val.clone());
        let head = Head {
            pred: rule.head.pred.clone(),
            args: rule
                .head
                .args
                .iter()
                .map(|a| match a {
                    HeadArg::Term(t) => HeadArg::Term(t.rename(&mut subst)),
                    a => a.clone(),
                })
                .collect(),
        };
        let mut body = Vec::with_capacity(rule.body.len());
        for (i, l) in rule.body.iter().enumerate() {
            if i == at {
                body.push(Literal::pos(Atom::new(pred, args.clone())));
            } else {
                body.push(rename_literal(l, &mut subst));
            }
        }
        out.push(Rule { head, body });
    }
    Ok(out)
}

fn rename_cmp(c: &Comparison, f: &mut impl FnMut(&str) -> Term) -> Comparison {
    Comparison {
        op: c.op,
        left: c.left.rename(f),
        right: c.right.rename(f),
    }
}

/// Renames the variables of a literal. Variables inside extrema goals are
/// only renamed to other variables.
pub fn rename_literal(l: &Literal, f: &mut impl FnMut(&str) -> Term) -> Literal {
    let var_only = |v: &String, f: &mut dyn FnMut(&str) -> Term| match f(v) {
        Term::Var(n) => n,
        _ => v.clone(),
    };
    match l {
        Literal::Atom { atom, negated } => Literal::Atom {
            atom: Atom {
                pred: atom.pred.clone(),
                args: atom.args.iter().map(|t| t.rename(f)).collect(),
            },
            negated: *negated,
        },
        Literal::Cmp(c) => Literal::Cmp(rename_cmp(c, f)),
        Literal::Extrema { kind, group, cost } => Literal::Extrema {
            kind: *kind,
            group: group.iter().map(|v| var_only(v, f)).collect(),
            cost: cost.iter().map(|v| var_only(v, f)).collect(),
        },
        Literal::IfThenElse {
            cond,
            then_bind,
            else_bind,
        } => Literal::IfThenElse {
            cond: rename_cmp(cond, f),
            then_bind: rename_cmp(then_bind, f),
            else_bind: rename_cmp(else_bind, f),
        },
        Literal::Vertical { pred, id, val, col } => Literal::Vertical {
            pred: pred.clone(),
            id: id.rename(f),
            val: var_only(val, f),
            col: var_only(col, f),
        },
    }
}

/// Replaces every rule holding an `@` literal by its expansion.
pub fn expand_program(prog: &Program) -> Result<Program, VerticalError> {
    let mut out = prog.clone();
    out.rules.clear();
    for r in &prog.rules {
        if r.body.iter().any(|l| matches!(l, Literal::Vertical { .. })) {
            out.rules.extend(expand_verticalize(r, &prog.schemas)?);
        } else {
            out.rules.push(r.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_program, parse_rule};

    #[test]
    fn six_column_table() {
        let p = parse_program(
            "database({train(ID:Integer, A:String, B:String, C:String, D:String, E:String)}).\n\
             vtrain(ID, Col, Val) <- train(ID, Val@Col).",
        )
        .unwrap();
        let rs = expand_verticalize(&p.rules[0], &p.schemas).unwrap();
        assert_eq!(rs.len(), 5);
        assert_eq!(rs[0], parse_rule("vtrain(ID, 1, Val) <- train(ID, Val, _, _, _, _).").unwrap());
    }

    #[test]
    fn two_column_table() {
        let p = parse_program("database({t(ID:Integer, A:Integer)}).\nv(ID, C, V) <- t(ID, V@C).").unwrap();
        let rs = expand_verticalize(&p.rules[0], &p.schemas).unwrap();
        assert_eq!(rs, vec![parse_rule("v(ID, 1, V) <- t(ID, V).").unwrap()]);
    }

    #[test]
    fn undeclared_schema() {
        let r = parse_rule("v(ID, C, V) <- t(ID, V@C).").unwrap();
        assert_eq!(expand_verticalize(&r, &[]), Err(VerticalError::NoSchema("t".into())));
    }
}
