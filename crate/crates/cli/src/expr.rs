//! Form expressions.
//!
//! ```text
//! form    := one | point(t, field) | density(profile, field)
//!          | function(profile, poly) | wedge(form, form, ...) | scale(c, form)
//! field   := dx(i, ..., poly) | sum(field, field, ...)
//! poly    := number | cos([k, ...], a) | sin([k, ...], b) | add(poly, ...) | mul(poly, poly)
//! profile := number | cos(k, a) | sin(k, b) | add(profile, ...)
//! ```
//!
//! `dx(1, 2, p)` is `p dx¹∧dx²` with strictly increasing 1-based indices.

use loopint::fields::{FormField, TrigPoly};
use loopint::loopforms::{Density, IntegralForm};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("form expression: {0}")]
pub struct ExprError(String);

fn fail<T>(msg: impl Into<String>) -> Result<T, ExprError> {
    Err(ExprError(msg.into()))
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    List(Vec<f64>),
    Call(String, Vec<Node>),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            fail(format!("expected '{}' at offset {}", c as char, self.pos))
        }
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        self.skip();
        let start = self.pos;
        while self.pos < self.src.len() && matches!(self.src[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E') {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => fail(format!("bad number '{text}' at offset {start}")),
        }
    }

    fn node(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'[') => {
                self.pos += 1;
                let mut v = Vec::new();
                if self.peek() != Some(b']') {
                    loop {
                        v.push(self.number()?);
                        if self.peek() == Some(b',') {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(b']')?;
                Ok(Node::List(v))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                    self.pos += 1;
                }
                let name = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                let mut args = Vec::new();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    if self.peek() != Some(b')') {
                        loop {
                            args.push(self.node()?);
                            if self.peek() == Some(b',') {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(b')')?;
                }
                Ok(Node::Call(name, args))
            }
            Some(_) => Ok(Node::Num(self.number()?)),
            None => fail("unexpected end of input"),
        }
    }
}

fn parse(src: &str) -> Result<Node, ExprError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    let n = p.node()?;
    if p.peek().is_some() {
        return fail(format!("trailing input at offset {}", p.pos));
    }
    Ok(n)
}

fn integer(x: f64) -> Result<i64, ExprError> {
    if x.fract() != 0.0 || x.abs() > 1e6 {
        return fail(format!("expected an integer, got {x}"));
    }
    Ok(x as i64)
}

fn num(n: &Node) -> Result<f64, ExprError> {
    match n {
        Node::Num(x) => Ok(*x),
        _ => fail(format!("expected a number, got {n:?}")),
    }
}

fn arity(name: &str, args: &[Node], want: usize) -> Result<(), ExprError> {
    if args.len() != want {
        return fail(format!("{name} takes {want} arguments, got {}", args.len()));
    }
    Ok(())
}

fn poly(n: &Node, dim: usize) -> Result<TrigPoly, ExprError> {
    match n {
        Node::Num(c) => Ok(TrigPoly::constant(dim, *c)),
        Node::Call(name, args) => match name.as_str() {
            "cos" | "sin" => {
                arity(name, args, 2)?;
                let k = match &args[0] {
                    Node::List(v) => v.iter().map(|&x| integer(x)).collect::<Result<Vec<_>, _>>()?,
                    Node::Num(x) if dim == 1 => vec![integer(*x)?],
                    other => return fail(format!("expected a wave vector, got {other:?}")),
                };
                if k.len() != dim {
                    return fail(format!("wave vector {k:?} has the wrong dimension (torus dimension {dim})"));
                }
                let a = num(&args[1])?;
                Ok(if name == "cos" { TrigPoly::cos_sin(&k, a, 0.0) } else { TrigPoly::cos_sin(&k, 0.0, a) })
            }
            "add" => {
                if args.is_empty() {
                    return fail("add needs at least one argument");
                }
                args.iter().try_fold(TrigPoly::zero(dim), |acc, a| Ok(acc.add(&poly(a, dim)?)))
            }
            "mul" => {
                arity(name, args, 2)?;
                Ok(poly(&args[0], dim)?.mul(&poly(&args[1], dim)?))
            }
            _ => fail(format!("unknown function '{name}' in a trigonometric polynomial")),
        },
        Node::List(_) => fail("a list is not a trigonometric polynomial"),
    }
}

fn profile(n: &Node) -> Result<Density, ExprError> {
    let p = poly(n, 1)?;
    Density::trig(p).map_err(|e| ExprError(e.to_string()))
}

fn field(n: &Node, dim: usize) -> Result<FormField, ExprError> {
    let Node::Call(name, args) = n else {
        return fail(format!("expected a form field, got {n:?}"));
    };
    match name.as_str() {
        "dx" => {
            let Some((last, idx)) = args.split_last() else {
                return fail("dx needs a coefficient");
            };
            let mut mask = 0usize;
            let mut prev = 0;
            for a in idx {
                let i = integer(num(a)?)?;
                if i <= prev || i as usize > dim {
                    return fail(format!("dx indices must increase within 1..={dim}"));
                }
                prev = i;
                mask |= 1 << (i - 1);
            }
            FormField::monomial(dim, mask, poly(last, dim)?).map_err(|e| ExprError(e.to_string()))
        }
        "sum" => {
            if args.is_empty() {
                return fail("sum needs at least one argument");
            }
            args.iter().try_fold(FormField::zero(dim), |acc, a| acc.add(&field(a, dim)?).map_err(|e| ExprError(e.to_string())))
        }
        _ => fail(format!("unknown form field '{name}'")),
    }
}

fn form(n: &Node, dim: usize) -> Result<IntegralForm, ExprError> {
    let Node::Call(name, args) = n else {
        return fail(format!("expected a form, got {n:?}"));
    };
    let lift = |r: loopint::error::Result<IntegralForm>| r.map_err(|e| ExprError(e.to_string()));
    match name.as_str() {
        "one" => {
            arity(name, args, 0)?;
            Ok(IntegralForm::one(dim))
        }
        "point" => {
            arity(name, args, 2)?;
            lift(IntegralForm::insert_at(num(&args[0])?, &field(&args[1], dim)?))
        }
        "density" => {
            arity(name, args, 2)?;
            lift(IntegralForm::lift_form(profile(&args[0])?, &field(&args[1], dim)?))
        }
        "function" => {
            arity(name, args, 2)?;
            lift(IntegralForm::lift_function(profile(&args[0])?, &poly(&args[1], dim)?))
        }
        "wedge" => {
            let Some((first, rest)) = args.split_first() else {
                return fail("wedge needs at least one argument");
            };
            rest.iter().try_fold(form(first, dim)?, |acc, a| lift(acc.wedge(&form(a, dim)?)))
        }
        "scale" => {
            arity(name, args, 2)?;
            Ok(form(&args[1], dim)?.scale(num(&args[0])?))
        }
        _ => fail(format!("unknown form '{name}'")),
    }
}

pub fn parse_form(src: &str, dim: usize) -> Result<IntegralForm, ExprError> {
    form(&parse(src)?, dim)
}

pub fn parse_poly(src: &str, dim: usize) -> Result<TrigPoly, ExprError> {
    poly(&parse(src)?, dim)
}
