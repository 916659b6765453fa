//! Lexer and recursive-descent parser for node formulas.

use super::{BinOp, Expr, Func, IndexBound, IndexItem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    DoubleLBracket,
    DoubleRBracket,
    Comma,
    Colon,
    Assign,
    Op(BinOp),
    Minus,
    Plus,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c == b'.'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'.'
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Token, usize)>> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some(tok) = lx.next_token()? {
            out.push(tok);
        }
        Ok(out)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn next_token(&mut self) -> Result<Option<(Token, usize)>> {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let c = match self.peek() {
            None => return Ok(None),
            Some(c) => c,
        };
        let tok = match c {
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'[' => {
                if self.src.get(self.pos + 1) == Some(&b'[') {
                    self.pos += 2;
                    Token::DoubleLBracket
                } else {
                    return Err(self.err("single '[' (time indexing) is not supported"));
                }
            }
            b']' => {
                if self.src.get(self.pos + 1) == Some(&b']') {
                    self.pos += 2;
                    Token::DoubleRBracket
                } else {
                    return Err(self.err("unmatched ']'"));
                }
            }
            b',' => {
                self.pos += 1;
                Token::Comma
            }
            b':' => {
                self.pos += 1;
                Token::Colon
            }
            b'+' => {
                self.pos += 1;
                Token::Plus
            }
            b'-' => {
                self.pos += 1;
                Token::Minus
            }
            b'*' => {
                self.pos += 1;
                Token::Op(BinOp::Mul)
            }
            b'/' => {
                self.pos += 1;
                Token::Op(BinOp::Div)
            }
            b'<' => {
                self.pos += 1;
                if self.peek() == Some(b'=') {
                    self.pos += 1;
                    Token::Op(BinOp::Le)
                } else {
                    Token::Op(BinOp::Lt)
                }
            }
            b'>' => {
                self.pos += 1;
                if self.peek() == Some(b'=') {
                    self.pos += 1;
                    Token::Op(BinOp::Ge)
                } else {
                    Token::Op(BinOp::Gt)
                }
            }
            b'=' => {
                self.pos += 1;
                if self.peek() == Some(b'=') {
                    self.pos += 1;
                    Token::Op(BinOp::Eq)
                } else {
                    Token::Assign
                }
            }
            b'!' => {
                self.pos += 1;
                if self.peek() == Some(b'=') {
                    self.pos += 1;
                    Token::Op(BinOp::Ne)
                } else {
                    return Err(self.err("expected '!='"));
                }
            }
            c if c.is_ascii_digit() => {
                let mut end = self.pos;
                let mut seen_dot = false;
                while let Some(&d) = self.src.get(end) {
                    if d.is_ascii_digit() {
                        end += 1;
                    } else if d == b'.' && !seen_dot {
                        // '.' is only part of the number if followed by a digit
                        if matches!(self.src.get(end + 1), Some(d2) if d2.is_ascii_digit()) {
                            seen_dot = true;
                            end += 2;
                        } else {
                            break;
                        }
                    } else if (d == b'e' || d == b'E')
                        && matches!(self.src.get(end + 1), Some(b'+') | Some(b'-'))
                        && matches!(self.src.get(end + 2), Some(d2) if d2.is_ascii_digit())
                    {
                        end += 3;
                    } else if (d == b'e' || d == b'E')
                        && matches!(self.src.get(end + 1), Some(d2) if d2.is_ascii_digit())
                    {
                        end += 2;
                    } else {
                        break;
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value: f64 = text
                    .parse()
                    .map_err(|_| self.err(format!("bad number literal {text:?}")))?;
                self.pos = end;
                Token::Num(value)
            }
            c if is_ident_start(c) => {
                let mut end = self.pos + 1;
                while matches!(self.src.get(end), Some(&d) if is_ident_char(d)) {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap().to_string();
                self.pos = end;
                Token::Ident(text)
            }
            other => return Err(self.err(format!("unexpected character {:?}", other as char))),
        };
        Ok(Some((tok, start)))
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    src_len: usize,
}

/// Parse a formula string into an [`Expr`].
pub fn parse(src: &str) -> Result<Expr> {
    let tokens = Lexer::tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        src_len: src.len(),
    };
    let expr = p.parse_cmp()?;
    if let Some((tok, at)) = p.tokens.get(p.pos) {
        return Err(Error::Parse {
            pos: *at,
            msg: format!("unexpected trailing token {tok:?}"),
        });
    }
    Ok(expr)
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(_, at)| *at)
            .unwrap_or(self.src_len)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.here(),
            msg: msg.into(),
        }
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: &Token, what: &str) -> Result<()> {
        if self.peek() == Some(tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn parse_cmp(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_addsub()?;
        while let Some(Token::Op(op)) = self.peek() {
            let op = *op;
            if !matches!(
                op,
                BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq | BinOp::Ne
            ) {
                break;
            }
            self.pos += 1;
            let rhs = self.parse_addsub()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn parse_addsub(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_muldiv()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_muldiv()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn parse_muldiv(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        while let Some(Token::Op(op)) = self.peek() {
            let op = *op;
            if !matches!(op, BinOp::Mul | BinOp::Div) {
                break;
            }
            self.pos += 1;
            let rhs = self.parse_unary()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                Ok(Expr::Unary {
                    negate: true,
                    expr: Box::new(self.parse_unary()?),
                })
            }
            Some(Token::Plus) => {
                self.pos += 1;
                self.parse_unary()
            }
            _ => self.parse_postfix(),
        }
    }

    fn parse_postfix(&mut self) -> Result<Expr> {
        let primary = self.parse_primary()?;
        if self.peek() == Some(&Token::DoubleLBracket) {
            let var = match primary {
                Expr::Var(name) => name,
                _ => return Err(self.err("'[[' may only follow a variable name")),
            };
            self.pos += 1;
            let indices = self.parse_indices()?;
            self.expect(&Token::DoubleRBracket, "']]'")?;
            return Ok(Expr::FriendRef { var, indices });
        }
        Ok(primary)
    }

    fn parse_indices(&mut self) -> Result<Vec<IndexItem>> {
        let mut items = Vec::new();
        loop {
            let lo = self.parse_index_bound()?;
            let item = if self.peek() == Some(&Token::Colon) {
                self.pos += 1;
                let hi = self.parse_index_bound()?;
                IndexItem::Range(lo, hi)
            } else {
                IndexItem::Single(lo)
            };
            if let IndexItem::Range(IndexBound::Lit(lo), IndexBound::Lit(hi)) = item {
                if lo > hi {
                    return Err(self.err(format!("malformed friend index range {lo}:{hi}")));
                }
            }
            items.push(item);
            if self.peek() == Some(&Token::Comma) {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(items)
    }

    fn parse_index_bound(&mut self) -> Result<IndexBound> {
        match self.advance() {
            Some(Token::Num(v)) => {
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    Err(self.err(format!("friend index must be a non-negative integer, got {v}")))
                } else {
                    Ok(IndexBound::Lit(v as u32))
                }
            }
            Some(Token::Ident(name)) if name == super::RESERVED_KMAX => Ok(IndexBound::Kmax),
            Some(Token::Minus) => Err(self.err("negative friend index")),
            _ => Err(self.err("expected friend index (integer or Kmax)")),
        }
    }

    fn parse_primary(&mut self) -> Result<Expr> {
        match self.advance() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let inner = self.parse_cmp()?;
                self.expect(&Token::RParen, "')'")?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                if self.peek() == Some(&Token::LParen) {
                    let func = Func::from_name(&name)
                        .ok_or_else(|| self.err(format!("unknown function {name:?}")))?;
                    self.pos += 1;
                    self.parse_call(func)
                } else {
                    Ok(Expr::Var(name))
                }
            }
            _ => Err(self.err("expected expression")),
        }
    }

    fn parse_call(&mut self, func: Func) -> Result<Expr> {
        let mut args = Vec::new();
        let mut na_rm = false;
        if self.peek() == Some(&Token::RParen) {
            self.pos += 1;
        } else {
            loop {
                // `na.rm=TRUE` is a named flag, not an expression argument
                if let Some(Token::Ident(name)) = self.peek() {
                    if name == "na.rm" {
                        self.pos += 1;
                        self.expect(&Token::Assign, "'=' after na.rm")?;
                        match self.advance() {
                            Some(Token::Ident(v)) if v == "TRUE" => na_rm = true,
                            Some(Token::Ident(v)) if v == "FALSE" => na_rm = false,
                            _ => return Err(self.err("expected TRUE or FALSE after na.rm=")),
                        }
                        if !func.allows_na_rm() {
                            return Err(self.err(format!(
                                "na.rm is only valid on sum/mean, not {}",
                                func.name()
                            )));
                        }
                        self.expect(&Token::RParen, "')' after na.rm flag")?;
                        break;
                    }
                }
                args.push(self.parse_cmp()?);
                match self.advance() {
                    Some(Token::Comma) => continue,
                    Some(Token::RParen) => break,
                    _ => return Err(self.err("expected ',' or ')' in call")),
                }
            }
        }
        let arity = func.arity();
        if !arity.contains(&args.len()) {
            return Err(self.err(format!(
                "{} expects {}{} argument(s), got {}",
                func.name(),
                arity.start(),
                if arity.end() == arity.start() {
                    String::new()
                } else if *arity.end() == usize::MAX {
                    "+".to_string()
                } else {
                    format!("..{}", arity.end())
                },
                args.len()
            )));
        }
        Ok(Expr::Call { func, args, na_rm })
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::parse;

    #[test]
    fn parses_friend_sum() {
        let e = parse("sum(A[[1:Kmax]])").unwrap();
        assert_eq!(
            e,
            Expr::Call {
                func: Func::Sum,
                args: vec![Expr::FriendRef {
                    var: "A".into(),
                    indices: vec![IndexItem::Range(IndexBound::Lit(1), IndexBound::Kmax)],
                }],
                na_rm: false,
            }
        );
    }

    #[test]
    fn parses_zero_index() {
        let e = parse("Var[[0]]").unwrap();
        assert_eq!(
            e,
            Expr::FriendRef {
                var: "Var".into(),
                indices: vec![IndexItem::Single(IndexBound::Lit(0))],
            }
        );
    }

    #[test]
    fn parses_plogis_formula() {
        let e = parse("plogis(-0.2 + W1/3)").unwrap();
        match e {
            Expr::Call { func: Func::Plogis, ref args, .. } => assert_eq!(args.len(), 1),
            other => panic!("unexpected AST {other:?}"),
        }
    }

    #[test]
    fn parses_na_rm_flag() {
        let e = parse("mean(Var[[1:4]], na.rm=TRUE)").unwrap();
        match e {
            Expr::Call { func: Func::Mean, na_rm, .. } => assert!(na_rm),
            other => panic!("unexpected AST {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse("foo(1)").is_err(), "unknown function");
        assert!(parse("A[[-1]]").is_err(), "negative friend index");
        assert!(parse("A[[3:1]]").is_err(), "descending range");
        assert!(parse("A[1]").is_err(), "time indexing not supported");
        assert!(parse("1 +").is_err(), "dangling operator");
        assert!(parse("plogis(1, na.rm=TRUE)").is_err(), "na.rm only on sum/mean");
    }

    #[test]
    fn reports_error_position() {
        match parse("1 + foo(2)").unwrap_err() {
            crate::error::Error::Parse { pos, .. } => assert_eq!(pos, 7),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dependency_extraction() {
        assert_eq!(
            parse("sum(W2[[1:Kmax]])").unwrap().dependencies(),
            ["W2".to_string()].into_iter().collect()
        );
        assert_eq!(
            parse("ifelse(nF > 0, sum(W1[[1:Kmax]])/nF, 0)")
                .unwrap()
                .dependencies(),
            ["W1".to_string()].into_iter().collect()
        );
        assert!(parse("3.5").unwrap().dependencies().is_empty());
    }

    #[test]
    fn print_parse_round_trip() {
        for src in [
            "sum(A[[1:Kmax]])",
            "plogis(5 + -0.5*W1 - 0.58*W2 + 0.15*sum(A[[0:Kmax]]))",
            "ifelse(nF > 0, sum(W1[[1:Kmax]])/nF, 0)",
            "mean(Var[[1:4]], na.rm=TRUE)",
            "min(A, 2) * max(B, 1) + abs(-3)",
        ] {
            let once = parse(src).unwrap();
            let twice = parse(&once.to_string()).unwrap();
            assert_eq!(once, twice, "round trip failed for {src}");
        }
    }
}
