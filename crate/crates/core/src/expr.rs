//! Small arithmetic expression language used by configuration files.
//!
//! Expressions are parsed against a fixed list of variable names, so evaluation
//! is a tree walk over a slice of values. Real expressions can be differentiated
//! symbolically; this is what lifts of diffeomorphisms and metric flows rely on.

use num_complex::Complex64;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn apply_complex(self, v: Complex64) -> Complex64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => Complex64::new(v.norm(), 0.0),
            Func::Sign => Complex64::new(Func::Sign.apply(v.re), 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// The imaginary unit; only meaningful under complex evaluation.
    Imag,
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// A parsed expression together with the variable names it was parsed against.
#[derive(Debug, Clone)]
pub struct Formula {
    pub source: String,
    pub vars: Vec<String>,
    pub expr: Expr,
}

impl Formula {
    pub fn parse(source: &str, vars: &[&str]) -> Result<Formula> {
        let expr = Parser::new(source, vars).parse_all()?;
        Ok(Formula {
            source: source.to_string(),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            expr,
        })
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        if self.expr.uses_imag() {
            return Err(Error::Parse(format!(
                "'{}' is complex-valued where a real expression is required",
                self.source
            )));
        }
        Ok(self.expr.eval(values))
    }

    pub fn eval_complex(&self, values: &[f64]) -> Complex64 {
        let cv: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.expr.eval_complex(&cv)
    }

    pub fn derivative(&self, var: usize) -> Formula {
        let expr = self.expr.derivative(var).simplify();
        Formula {
            source: expr.to_string_with(&self.vars),
            vars: self.vars.clone(),
            expr,
        }
    }

    pub fn is_real(&self) -> bool {
        !self.expr.uses_imag()
    }
}

impl Expr {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Expr::Num(x) => *x,
            Expr::Imag => f64::NAN,
            Expr::Var(i) => v[*i],
            Expr::Neg(a) => -a.eval(v),
            Expr::Add(a, b) => a.eval(v) + b.eval(v),
            Expr::Sub(a, b) => a.eval(v) - b.eval(v),
            Expr::Mul(a, b) => a.eval(v) * b.eval(v),
            Expr::Div(a, b) => a.eval(v) / b.eval(v),
            Expr::Pow(a, b) => {
                let base = a.eval(v);
                match **b {
                    Expr::Num(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(v)),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(v)),
        }
    }

    pub fn eval_complex(&self, v: &[Complex64]) -> Complex64 {
        match self {
            Expr::Num(x) => Complex64::new(*x, 0.0),
            Expr::Imag => Complex64::i(),
            Expr::Var(i) => v[*i],
            Expr::Neg(a) => -a.eval_complex(v),
            Expr::Add(a, b) => a.eval_complex(v) + b.eval_complex(v),
            Expr::Sub(a, b) => a.eval_complex(v) - b.eval_complex(v),
            Expr::Mul(a, b) => a.eval_complex(v) * b.eval_complex(v),
            Expr::Div(a, b) => a.eval_complex(v) / b.eval_complex(v),
            Expr::Pow(a, b) => {
                let base = a.eval_complex(v);
                match **b {
                    Expr::Num(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powc(b.eval_complex(v)),
                }
            }
            Expr::Call(f, a) => f.apply_complex(a.eval_complex(v)),
        }
    }

    fn uses_imag(&self) -> bool {
        match self {
            Expr::Imag => true,
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.uses_imag(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.uses_imag() || b.uses_imag()
            }
        }
    }

    fn depends_on(&self, var: usize) -> bool {
        match self {
            Expr::Var(i) => *i == var,
            Expr::Num(_) | Expr::Imag => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    pub fn derivative(&self, var: usize) -> Expr {
        use Expr::*;
        let b = |e: Expr| Box::new(e);
        match self {
            Num(_) | Imag => Num(0.0),
            Var(i) => Num(if *i == var { 1.0 } else { 0.0 }),
            Neg(a) => Neg(b(a.derivative(var))),
            Add(x, y) => Add(b(x.derivative(var)), b(y.derivative(var))),
            Sub(x, y) => Sub(b(x.derivative(var)), b(y.derivative(var))),
            Mul(x, y) => Add(
                b(Mul(b(x.derivative(var)), y.clone())),
                b(Mul(x.clone(), b(y.derivative(var)))),
            ),
            Div(x, y) => Div(
                b(Sub(
                    b(Mul(b(x.derivative(var)), y.clone())),
                    b(Mul(x.clone(), b(y.derivative(var)))),
                )),
                b(Pow(y.clone(), b(Num(2.0)))),
            ),
            Pow(x, e) => {
                if !e.depends_on(var) {
                    // d(x^e) = e x^(e-1) dx
                    Mul(
                        b(Mul(e.clone(), b(Pow(x.clone(), b(Sub(e.clone(), b(Num(1.0)))))))),
                        b(x.derivative(var)),
                    )
                } else {
                    // x^e = exp(e ln x)
                    Mul(
                        b(self.clone()),
                        b(Add(
                            b(Mul(b(e.derivative(var)), b(Call(Func::Log, x.clone())))),
                            b(Div(b(Mul(e.clone(), b(x.derivative(var)))), x.clone())),
                        )),
                    )
                }
            }
            Call(f, a) => {
                let inner = a.derivative(var);
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(b(Call(Func::Sin, a.clone()))),
                    Func::Tan => Div(b(Num(1.0)), b(Pow(b(Call(Func::Cos, a.clone())), b(Num(2.0))))),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => Div(b(Num(1.0)), a.clone()),
                    Func::Sqrt => Div(b(Num(0.5)), b(Call(Func::Sqrt, a.clone()))),
                    Func::Abs => Call(Func::Sign, a.clone()),
                    Func::Sign => Num(0.0),
                };
                Mul(b(outer), b(inner))
            }
        }
    }

    /// Constant folding and removal of trivial identities.
    pub fn simplify(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) | Imag | Var(_) => self.clone(),
            Neg(a) => match a.simplify() {
                Num(x) => Num(-x),
                Neg(inner) => *inner,
                s => Neg(Box::new(s)),
            },
            Add(x, y) => match (x.simplify(), y.simplify()) {
                (Num(a), Num(c)) => Num(a + c),
                (Num(a), s) | (s, Num(a)) if a == 0.0 => s,
                (p, q) => Add(Box::new(p), Box::new(q)),
            },
            Sub(x, y) => match (x.simplify(), y.simplify()) {
                (Num(a), Num(c)) => Num(a - c),
                (s, Num(a)) if a == 0.0 => s,
                (Num(a), s) if a == 0.0 => Neg(Box::new(s)),
                (p, q) => Sub(Box::new(p), Box::new(q)),
            },
            Mul(x, y) => match (x.simplify(), y.simplify()) {
                (Num(a), Num(c)) => Num(a * c),
                (Num(a), _) | (_, Num(a)) if a == 0.0 => Num(0.0),
                (Num(a), s) | (s, Num(a)) if a == 1.0 => s,
                (p, q) => Mul(Box::new(p), Box::new(q)),
            },
            Div(x, y) => match (x.simplify(), y.simplify()) {
                (Num(a), Num(c)) if c != 0.0 => Num(a / c),
                (Num(a), _) if a == 0.0 => Num(0.0),
                (s, Num(c)) if c == 1.0 => s,
                (p, q) => Div(Box::new(p), Box::new(q)),
            },
            Pow(x, e) => match (x.simplify(), e.simplify()) {
                (Num(a), Num(c)) => Num(a.powf(c)),
                (_, Num(c)) if c == 0.0 => Num(1.0),
                (s, Num(c)) if c == 1.0 => s,
                (p, q) => Pow(Box::new(p), Box::new(q)),
            },
            Call(f, a) => match a.simplify() {
                Num(v) => Num(f.apply(v)),
                s => Call(*f, Box::new(s)),
            },
        }
    }

    fn to_string_with(&self, vars: &[String]) -> String {
        match self {
            Expr::Num(x) => {
                if *x < 0.0 {
                    format!("({x})")
                } else {
                    format!("{x}")
                }
            }
            Expr::Imag => "i".into(),
            Expr::Var(i) => vars[*i].clone(),
            Expr::Neg(a) => format!("(-{})", a.to_string_with(vars)),
            Expr::Add(a, b) => format!("({} + {})", a.to_string_with(vars), b.to_string_with(vars)),
            Expr::Sub(a, b) => format!("({} - {})", a.to_string_with(vars), b.to_string_with(vars)),
            Expr::Mul(a, b) => format!("{} * {}", a.to_string_with(vars), b.to_string_with(vars)),
            Expr::Div(a, b) => format!("{} / ({})", a.to_string_with(vars), b.to_string_with(vars)),
            Expr::Pow(a, b) => format!("({})^({})", a.to_string_with(vars), b.to_string_with(vars)),
            Expr::Call(f, a) => format!("{}({})", f.name(), a.to_string_with(vars)),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
    vars: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, vars: &'a [&'a str]) -> Self {
        Parser {
            src,
            chars: src.chars().collect(),
            pos: 0,
            vars,
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} at offset {} in '{}'", self.pos, self.src))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_all(mut self) -> Result<Expr> {
        let e = self.parse_sum()?;
        if self.peek().is_some() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(e)
    }

    fn parse_sum(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_product()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.parse_product()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.parse_product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_product(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.parse_unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.parse_unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.parse_unary()?)));
        }
        if self.eat('+') {
            return self.parse_unary();
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if self.eat('^') {
            let exp = self.parse_unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.parse_sum()?;
                if !self.eat(')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.parse_number(),
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_')
                {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                if self.peek() == Some('(') {
                    let f = Func::from_name(&name)
                        .ok_or_else(|| self.err(&format!("unknown function '{name}'")))?;
                    self.pos += 1;
                    let arg = self.parse_sum()?;
                    if !self.eat(')') {
                        return Err(self.err("expected ')'"));
                    }
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "i" => Ok(Expr::Imag),
                    _ => Err(self.err(&format!("unknown variable '{name}'"))),
                }
            }
            Some(c) => Err(self.err(&format!("unexpected character '{c}'"))),
        }
    }

    fn parse_number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let n = self.chars.len();
        while self.pos < n && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
            self.pos += 1;
        }
        if self.pos < n && (self.chars[self.pos] == 'e' || self.chars[self.pos] == 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < n && (self.chars[self.pos] == '+' || self.chars[self.pos] == '-') {
                self.pos += 1;
            }
            if self.pos < n && self.chars[self.pos].is_ascii_digit() {
                while self.pos < n && self.chars[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| self.err(&format!("bad number '{text}'")))
    }
}
