//! Hand-written lexer and recursive-descent parser for program text.

use std::collections::HashMap;

use super::ast::*;
use crate::storage::Ty;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Anon,
    Int(i64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Arrow,
    Tilde,
    At,
    Colon,
    Plus,
    Minus,
    Star,
    Slash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Var(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Float(x) => format!("`{x}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Eof => "end of input".into(),
            Tok::Anon => "`_`".into(),
            t => format!("`{}`", punct(t)),
        }
    }
}

fn punct(t: &Tok) -> &'static str {
    match t {
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBrace => "{",
        Tok::RBrace => "}",
        Tok::Comma => ",",
        Tok::Dot => ".",
        Tok::Arrow => "<-",
        Tok::Tilde => "~",
        Tok::At => "@",
        Tok::Colon => ":",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Slash => "/",
        Tok::Eq => "=",
        Tok::Ne => "!=",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        _ => "?",
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ParseError { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let adv = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            adv(1, &mut i, &mut col);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let next = chars.get(i + 1).copied();
        let push = |out: &mut Vec<Spanned>, tok| {
            out.push(Spanned {
                tok,
                line: l0,
                col: c0,
            })
        };
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            let word: String = chars[start..i].iter().collect();
            let tok = if word == "_" {
                Tok::Anon
            } else if c.is_ascii_uppercase() || c == '_' {
                Tok::Var(word)
            } else {
                Tok::Ident(word)
            };
            push(&mut out, tok);
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            col += i - start;
            let s: String = chars[start..i].iter().collect();
            let tok = if is_float {
                Tok::Float(s.parse().map_err(|_| err(l0, c0, format!("bad number {s}")))?)
            } else {
                Tok::Int(
                    s.parse()
                        .map_err(|_| err(l0, c0, format!("integer {s} out of range")))?,
                )
            };
            push(&mut out, tok);
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(err(l0, c0, "unterminated string".into())),
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        let e = chars.get(i + 1).copied();
                        s.push(match e {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(err(line, col, "bad escape".into())),
                        });
                        i += 2;
                        col += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            push(&mut out, Tok::Str(s));
            continue;
        }
        let (tok, n) = match (c, next) {
            ('<', Some('-')) => (Tok::Arrow, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('~', Some('=')) => (Tok::Ne, 2),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('=', _) => (Tok::Eq, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            (',', _) => (Tok::Comma, 1),
            ('.', _) => (Tok::Dot, 1),
            ('~', _) => (Tok::Tilde, 1),
            ('@', _) => (Tok::At, 1),
            (':', _) => (Tok::Colon, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            _ => return Err(err(l0, c0, format!("unexpected character {c:?}"))),
        };
        push(&mut out, tok);
        i += n;
        col += n;
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    /// (pred, arity, line, col) of every atom, for the schema arity check.
    uses: Vec<(String, usize, usize, usize)>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.error(format!(
                "expected `{}`, found {}",
                punct(&t),
                self.peek().describe()
            ))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.error(format!("expected a predicate name, found {}", t.describe())),
        }
    }

    fn var(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Var(s) => {
                self.bump();
                Ok(s)
            }
            t => self.error(format!("expected a variable, found {}", t.describe())),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut p = Program::default();
        while *self.peek() != Tok::Eof {
            if matches!(self.peek(), Tok::Ident(s) if s == "database")
                && *self.peek_at(1) == Tok::LParen
                && *self.peek_at(2) == Tok::LBrace
            {
                self.database(&mut p)?;
                continue;
            }
            self.statement(&mut p)?;
        }
        Ok(p)
    }

    fn database(&mut self, p: &mut Program) -> PResult<()> {
        self.bump();
        self.expect(Tok::LParen)?;
        self.expect(Tok::LBrace)?;
        loop {
            let (line, col) = self.here();
            let pred = self.ident()?;
            let mut columns = Vec::new();
            self.expect(Tok::LParen)?;
            if *self.peek() != Tok::RParen {
                loop {
                    let name = match self.bump() {
                        Tok::Var(s) | Tok::Ident(s) => s,
                        t => return self.error(format!("expected a column name, found {}", t.describe())),
                    };
                    self.expect(Tok::Colon)?;
                    let tname = match self.bump() {
                        Tok::Var(s) | Tok::Ident(s) => s,
                        t => return self.error(format!("expected a type, found {}", t.describe())),
                    };
                    let ty = match Ty::from_name(&tname) {
                        Some(t) => t,
                        None => return self.error(format!("unknown type {tname}")),
                    };
                    columns.push((name, ty));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            if p.schema(&pred).is_some() {
                return Err(ParseError {
                    line,
                    col,
                    msg: format!("schema for {pred} declared twice"),
                });
            }
            p.schemas.push(Schema { pred, columns });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBrace)?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Dot)?;
        Ok(())
    }

    fn statement(&mut self, p: &mut Program) -> PResult<()> {
        let (line, col) = self.here();
        let head = self.head()?;
        if self.eat(&Tok::Dot) {
            if let Some(atom) = head.as_atom() {
                if atom.is_ground() {
                    p.facts.push(atom);
                    return Ok(());
                }
            }
            return Err(ParseError {
                line,
                col,
                msg: format!("fact {head} must be ground"),
            });
        }
        self.expect(Tok::Arrow)?;
        let mut body = vec![self.literal()?];
        while self.eat(&Tok::Comma) {
            body.push(self.literal()?);
        }
        self.expect(Tok::Dot)?;
        p.rules.push(Rule { head, body });
        Ok(())
    }

    fn head(&mut self) -> PResult<Head> {
        let (line, col) = self.here();
        let pred = self.ident()?;
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.head_arg()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
        }
        if args.iter().filter(|a| matches!(a, HeadArg::Agg(_))).count() > 1 {
            return Err(ParseError {
                line,
                col,
                msg: "at most one aggregate per head".into(),
            });
        }
        self.uses.push((pred.clone(), args.len(), line, col));
        Ok(Head { pred, args })
    }

    fn head_arg(&mut self) -> PResult<HeadArg> {
        if let (Tok::Ident(name), Tok::Lt) = (self.peek().clone(), self.peek_at(1).clone()) {
            let func = match AggFunc::from_name(&name) {
                Some(f) => f,
                None => return self.error(format!("unknown aggregate {name}")),
            };
            self.bump();
            self.bump();
            let mut vars = Vec::new();
            let tupled = self.eat(&Tok::LParen);
            loop {
                vars.push(self.var()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            if tupled {
                self.expect(Tok::RParen)?;
            }
            self.expect(Tok::Gt)?;
            if func.is_extremum() && vars.len() != 1 {
                return self.error(format!("{} takes exactly one variable", func.name()));
            }
            return Ok(HeadArg::Agg(AggregateSpec { func, vars }));
        }
        Ok(HeadArg::Term(self.expr()?))
    }

    fn var_group(&mut self) -> PResult<Vec<String>> {
        if self.eat(&Tok::LParen) {
            let mut v = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    v.push(self.var()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            Ok(v)
        } else {
            Ok(vec![self.var()?])
        }
    }

    fn literal(&mut self) -> PResult<Literal> {
        if self.eat(&Tok::Tilde) {
            let atom = self.atom()?;
            return Ok(Literal::neg(atom));
        }
        if let Tok::Ident(name) = self.peek().clone() {
            if *self.peek_at(1) == Tok::LParen {
                match name.as_str() {
                    "is_min" | "is_max" => {
                        self.bump();
                        self.bump();
                        let group = self.var_group()?;
                        self.expect(Tok::Comma)?;
                        let cost = self.var_group()?;
                        self.expect(Tok::RParen)?;
                        let kind = if name == "is_min" {
                            ExtremaKind::Min
                        } else {
                            ExtremaKind::Max
                        };
                        return Ok(Literal::Extrema { kind, group, cost });
                    }
                    "if" => {
                        self.bump();
                        self.bump();
                        let cond = self.comparison()?;
                        self.keyword("then")?;
                        let then_bind = self.comparison()?;
                        self.keyword("else")?;
                        let else_bind = self.comparison()?;
                        self.expect(Tok::RParen)?;
                        return Ok(Literal::IfThenElse {
                            cond,
                            then_bind,
                            else_bind,
                        });
                    }
                    _ => return self.atom_or_vertical(),
                }
            }
            // A bare lower-case word followed by a comparison operator is a constant.
            if !matches!(
                self.peek_at(1),
                Tok::Eq | Tok::Ne | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge | Tok::Plus | Tok::Minus | Tok::Star | Tok::Slash
            ) {
                return self.atom_or_vertical();
            }
        }
        Ok(Literal::Cmp(self.comparison()?))
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            t => self.error(format!("expected `{kw}`, found {}", t.describe())),
        }
    }

    fn atom_or_vertical(&mut self) -> PResult<Literal> {
        let (line, col) = self.here();
        let pred = self.ident()?;
        let mut args = Vec::new();
        let mut vertical: Option<(usize, String, String)> = None;
        if self.eat(&Tok::LParen) {
            if *self.peek() != Tok::RParen {
                loop {
                    if let (Tok::Var(v), Tok::At) = (self.peek().clone(), self.peek_at(1).clone()) {
                        self.bump();
                        self.bump();
                        let c = self.var()?;
                        if vertical.is_some() {
                            return self.error("only one `@` per literal");
                        }
                        vertical = Some((args.len(), v, c));
                        args.push(Term::Anon);
                    } else {
                        args.push(self.expr()?);
                    }
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
        }
        if let Some((at, val, c)) = vertical {
            if args.len() != 2 || at != 1 {
                return Err(ParseError {
                    line,
                    col,
                    msg: "`@` literal must have the form pred(Id, Val@Col)".into(),
                });
            }
            return Ok(Literal::Vertical {
                pred,
                id: args.swap_remove(0),
                val,
                col: c,
            });
        }
        self.uses.push((pred.clone(), args.len(), line, col));
        Ok(Literal::pos(Atom { pred, args }))
    }

    fn atom(&mut self) -> PResult<Atom> {
        match self.atom_or_vertical()? {
            Literal::Atom { atom, .. } => Ok(atom),
            _ => self.error("`@` cannot be negated"),
        }
    }

    fn comparison(&mut self) -> PResult<Comparison> {
        let left = self.expr()?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            t => return self.error(format!("expected a comparison operator, found {}", t.describe())),
        };
        self.bump();
        let right = self.expr()?;
        Ok(Comparison { op, left, right })
    }

    fn expr(&mut self) -> PResult<Term> {
        let mut t = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(t),
            };
            self.bump();
            let r = self.mul()?;
            t = Term::Arith(op, Box::new(t), Box::new(r));
        }
    }

    fn mul(&mut self) -> PResult<Term> {
        let mut t = self.primary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(t),
            };
            self.bump();
            let r = self.primary()?;
            t = Term::Arith(op, Box::new(t), Box::new(r));
        }
    }

    fn primary(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.bump();
                Ok(Term::Var(v))
            }
            Tok::Anon => {
                self.bump();
                Ok(Term::Anon)
            }
            Tok::Int(i) => {
                self.bump();
                Ok(Term::Const(Const::Int(i)))
            }
            Tok::Float(x) => {
                self.bump();
                Ok(Term::Const(Const::Float(x)))
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(i) => Ok(Term::Const(Const::Int(-i))),
                    Tok::Float(x) => Ok(Term::Const(Const::Float(-x))),
                    t => self.error(format!("expected a number after `-`, found {}", t.describe())),
                }
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Term::Const(Const::Str(s)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Term::Const(Const::Str(s)))
            }
            Tok::LParen => {
                self.bump();
                let t = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            t => self.error(format!("expected a term, found {}", t.describe())),
        }
    }

    fn check_arities(&self, p: &Program) -> PResult<()> {
        let schemas: HashMap<&str, usize> =
            p.schemas.iter().map(|s| (s.pred.as_str(), s.columns.len())).collect();
        for (pred, arity, line, col) in &self.uses {
            if let Some(&n) = schemas.get(pred.as_str()) {
                if n != *arity {
                    return Err(ParseError {
                        line: *line,
                        col: *col,
                        msg: format!("{pred} has arity {n} in its schema but is used with {arity} arguments"),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        uses: Vec::new(),
    };
    let prog = p.program()?;
    p.check_arities(&prog)?;
    Ok(prog)
}

pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        uses: Vec::new(),
    };
    let goal = p.atom()?;
    p.eat(&Tok::Dot);
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after query", p.peek().describe()));
    }
    Ok(Query { goal })
}

/// Parses a single rule, for tests and programmatic construction.
pub fn parse_rule(text: &str) -> Result<Rule, ParseError> {
    let prog = parse_program(text)?;
    match (prog.rules.len(), prog.facts.len()) {
        (1, 0) => Ok(prog.rules.into_iter().next().unwrap()),
        _ => Err(ParseError {
            line: 1,
            col: 1,
            msg: "expected exactly one rule".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TC: &str = "database({arc(X:Integer,Y:Integer)}). tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).";

    #[test]
    fn transitive_closure() {
        let p = parse_program(TC).unwrap();
        assert_eq!(p.rules.len(), 2);
        assert_eq!(p.schemas[0].columns.len(), 2);
        assert_eq!(p.rules[1].body.len(), 2);
    }

    #[test]
    fn self_recursive_without_schema() {
        let p = parse_program("p(X) <- p(X).").unwrap();
        assert_eq!(p.rules.len(), 1);
        assert!(p.schemas.is_empty());
    }

    #[test]
    fn min_head() {
        let r = parse_rule("dpath(X,Z,min<Dxz>) <- darc(X,Z,Dxz), Dxz>0.").unwrap();
        let (i, a) = r.head.aggregate().unwrap();
        assert_eq!(i, 2);
        assert_eq!(a.func, AggFunc::Min);
        assert_eq!(a.vars, vec!["Dxz".to_string()]);
        assert_eq!(r.body[1], Literal::cmp(CmpOp::Gt, Term::var("Dxz"), Term::int(0)));
    }

    #[test]
    fn unknown_aggregate_rejected() {
        let e = parse_program("p(X, avg<Y>) <- q(X,Y).").unwrap_err();
        assert!(e.msg.contains("unknown aggregate"), "{e}");
    }

    #[test]
    fn schema_arity_checked() {
        let e = parse_program("database({arc(X:Integer,Y:Integer)}).\ntc(X) <- arc(X).").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn syntax_error_position() {
        let e = parse_program("p(X) <- q(X)\nr(Y) <- s(Y).").unwrap_err();
        assert_eq!((e.line, e.col), (2, 1));
    }

    #[test]
    fn extrema_if_and_vertical() {
        let r = parse_rule(
            "dpath(X,Z,Dxz) <- dpath(X,Y,Dxy), darc(Y,Z,Dyz), upb(U), \
             if(Dxy+Dyz > U then Dxz = U else Dxz = Dxy+Dyz), is_min((X,Z),(Dxz)).",
        )
        .unwrap();
        assert!(matches!(r.body[3], Literal::IfThenElse { .. }));
        assert!(matches!(r.body[4], Literal::Extrema { kind: ExtremaKind::Min, .. }));
        let v = parse_rule("vtrain(ID, Col, Val) <- train(ID, Val@Col).").unwrap();
        assert!(matches!(v.body[0], Literal::Vertical { .. }));
    }

    #[test]
    fn queries() {
        let q = parse_query("tc(X,Y).").unwrap();
        assert_eq!(q.adornment(), "ff");
        let q = parse_query("spath(a,Z,D).").unwrap();
        assert_eq!(q.adornment(), "bff");
        assert_eq!(q.goal.args[0], Term::Const(Const::Str("a".into())));
        let q = parse_query("tc(X,X).").unwrap();
        assert_eq!(q.goal.args[0], q.goal.args[1]);
    }

    #[test]
    fn comments_and_negatives() {
        let p = parse_program("% header\np(X) <- q(X), X > -3. % trailing\n").unwrap();
        assert_eq!(p.rules[0].body[1], Literal::cmp(CmpOp::Gt, Term::var("X"), Term::int(-3)));
    }

    #[test]
    fn tuple_and_plain_count_forms_agree() {
        let a = parse_rule("t(count<(X,Y)>) <- e(X,Y).").unwrap();
        let b = parse_rule("t(count<X,Y>) <- e(X,Y).").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn printer_round_trip() {
        let src = "database({arc(X:Integer, Y:Integer), w(A:String, B:Float)}).\n\
                   arc(1, 2).\nw(\"Hello world\", 0.5).\n\
                   p(X, Y - (Z - 1) * 2, sum<V, W>) <- q(X, Y, Z, V, W), ~r(X), X != \"a b\", is_max((X), (V)).\n\
                   c(Y, mcount<(X, Z)>) <- e(X, Y, Z), posint(X, Z).\n";
        let p = parse_program(src).unwrap();
        let again = parse_program(&p.to_string()).unwrap();
        assert_eq!(p, again);
    }
}
