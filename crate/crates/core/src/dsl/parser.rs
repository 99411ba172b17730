use super::lexer::{lex, Spanned, Tok};
use super::{Ast, DslError, WordFactor, WordFile, WordTerm};
use crate::ir::{Decl, Expr, NonlinExpr, ScalarRule};

pub(super) struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

type PResult<T> = Result<T, DslError>;

impl Parser {
    pub(super) fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
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
        Err(DslError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.error(format!(
            "expected {wanted}, found {}",
            self.peek().describe()
        ))
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> PResult<()> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            self.unexpected(&format!("`{c}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.unexpected("a name"),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            _ => self.unexpected(&format!("`{kw}`")),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn real(&mut self) -> PResult<f64> {
        let neg = self.eat_sym('-');
        match *self.peek() {
            Tok::Number(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => self.unexpected("a number"),
        }
    }

    fn end_of_line(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => self.unexpected("end of line"),
        }
    }

    fn skip_blank(&mut self) {
        while *self.peek() == Tok::Newline {
            self.bump();
        }
    }

    fn real_list(&mut self) -> PResult<Vec<f64>> {
        self.expect_sym('[')?;
        let mut out = Vec::new();
        if !self.eat_sym(']') {
            loop {
                out.push(self.real()?);
                if self.eat_sym(']') {
                    break;
                }
                self.expect_sym(',')?;
            }
        }
        Ok(out)
    }

    pub(super) fn program(&mut self) -> PResult<Ast> {
        let mut ast = Ast::default();
        loop {
            self.skip_blank();
            if *self.peek() == Tok::Eof {
                return Ok(ast);
            }
            let (line, col) = self.here();
            let d = self.decl()?;
            self.end_of_line()?;
            ast.decls.push(d);
            ast.positions.push((line, col));
        }
    }

    fn decl(&mut self) -> PResult<Decl> {
        if *self.peek_at(1) == Tok::Sym('=') {
            return self.instruction();
        }
        let kw = self.ident()?;
        match kw.as_str() {
            "class" => {
                let name = self.ident()?;
                self.keyword("ratio")?;
                let ratio = self.real()?;
                Ok(Decl::Class { name, ratio })
            }
            "matrix" => {
                let name = self.ident()?;
                self.expect_sym(':')?;
                let rows = self.ident()?;
                self.keyword("x")?;
                let cols = self.ident()?;
                self.keyword("var")?;
                let sigma2 = self.real()?;
                Ok(Decl::Matrix {
                    name,
                    rows,
                    cols,
                    sigma2,
                })
            }
            "vector" => {
                let name = self.ident()?;
                self.expect_sym(':')?;
                let class = self.ident()?;
                let (mut mean, mut var) = (0.0, 1.0);
                if self.at_keyword("mean") {
                    self.bump();
                    mean = self.real()?;
                }
                if self.at_keyword("var") {
                    self.bump();
                    var = self.real()?;
                }
                Ok(Decl::Vector {
                    name,
                    class,
                    mean,
                    var,
                })
            }
            "cov" => {
                let a = self.ident()?;
                let b = self.ident()?;
                let value = self.real()?;
                Ok(Decl::Cov { a, b, value })
            }
            "scalar" => {
                let name = self.ident()?;
                self.keyword("limit")?;
                let limit = self.real()?;
                let rule = if self.at_keyword("rule") {
                    self.bump();
                    let num = self.real_list()?;
                    self.expect_sym('/')?;
                    let den = self.real_list()?;
                    ScalarRule::Rational { num, den }
                } else {
                    ScalarRule::Constant
                };
                Ok(Decl::Scalar { name, limit, rule })
            }
            _ => {
                self.pos -= 1;
                self.unexpected("a declaration or instruction")
            }
        }
    }

    fn instruction(&mut self) -> PResult<Decl> {
        let output = self.ident()?;
        self.expect_sym('=')?;
        let op = self.ident()?;
        match op.as_str() {
            "matmul" => {
                let matrix = self.ident()?;
                let transposed = self.transpose_mark()?;
                let input = self.ident()?;
                Ok(Decl::MatMul {
                    output,
                    matrix,
                    transposed,
                    input,
                })
            }
            "nonlin" | "moment" => {
                let (expr, inputs, params) = self.call()?;
                Ok(if op == "nonlin" {
                    Decl::Nonlin {
                        output,
                        expr,
                        inputs,
                        params,
                    }
                } else {
                    Decl::Moment {
                        output,
                        expr,
                        inputs,
                        params,
                    }
                })
            }
            _ => {
                self.pos -= 1;
                self.unexpected("`matmul`, `nonlin` or `moment`")
            }
        }
    }

    fn transpose_mark(&mut self) -> PResult<bool> {
        if self.eat_sym('^') {
            match self.peek() {
                Tok::Ident(s) if s == "T" => {
                    self.bump();
                    Ok(true)
                }
                _ => self.unexpected("`T`"),
            }
        } else {
            Ok(false)
        }
    }

    /// `FN(args[; params])`, arity fixed by the argument lists.
    fn call(&mut self) -> PResult<(NonlinExpr, Vec<String>, Vec<String>)> {
        let (line, col) = self.here();
        let expr = self.function()?;
        self.expect_sym('(')?;
        let mut inputs = Vec::new();
        let mut params = Vec::new();
        if !matches!(self.peek(), Tok::Sym(')') | Tok::Sym(';')) {
            inputs.push(self.ident()?);
            while self.eat_sym(',') {
                inputs.push(self.ident()?);
            }
        }
        if self.eat_sym(';') {
            params.push(self.ident()?);
            while self.eat_sym(',') {
                params.push(self.ident()?);
            }
        }
        self.expect_sym(')')?;
        let nl = NonlinExpr::new(expr, inputs.len(), params.len())
            .map_err(|error| DslError::Build { line, col, error })?;
        Ok((nl, inputs, params))
    }

    /// A builtin name or a bracketed expression.
    pub(super) fn function(&mut self) -> PResult<Expr> {
        if self.eat_sym('[') {
            let e = self.expr()?;
            self.expect_sym(']')?;
            return Ok(e);
        }
        let x = Expr::input;
        let e = match self.peek() {
            Tok::Ident(s) => match s.as_str() {
                "id" => x(0),
                "add" => x(0) + x(1),
                "sub" => x(0) - x(1),
                "mul" => x(0) * x(1),
                "square" => x(0).pow(2),
                "relu" => x(0).relu(),
                "step" => x(0).step(),
                "tanh" => x(0).tanh(),
                "abs" => x(0).abs(),
                _ => return self.unexpected("a builtin function or `[expression]`"),
            },
            _ => return self.unexpected("a builtin function or `[expression]`"),
        };
        self.bump();
        Ok(e)
    }

    pub(super) fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_sym('+') {
                lhs = lhs + self.term()?;
            } else if self.eat_sym('-') {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while self.eat_sym('*') {
            lhs = lhs * self.unary()?;
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_sym('-') {
            if let Tok::Number(v) = *self.peek() {
                self.bump();
                return self.power(Expr::Const(-v));
            }
            return Ok(-self.unary()?);
        }
        let a = self.atom()?;
        self.power(a)
    }

    fn power(&mut self, mut base: Expr) -> PResult<Expr> {
        while self.eat_sym('^') {
            match *self.peek() {
                Tok::Number(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => {
                    self.bump();
                    base = base.pow(v as u32);
                }
                _ => return self.unexpected("a nonnegative integer exponent"),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Ident(s) => {
                if let Some(e) = slot(&s) {
                    self.bump();
                    return Ok(e);
                }
                let arity = match s.as_str() {
                    "relu" | "step" | "tanh" | "abs" => 1,
                    "max" | "min" => 2,
                    "clamp" => 3,
                    _ => return self.unexpected("`x<k>`, `p<k>`, a number or a function"),
                };
                self.bump();
                self.expect_sym('(')?;
                let a = self.expr()?;
                let e = match arity {
                    1 => match s.as_str() {
                        "relu" => a.relu(),
                        "step" => a.step(),
                        "tanh" => a.tanh(),
                        _ => a.abs(),
                    },
                    2 => {
                        self.expect_sym(',')?;
                        let b = self.expr()?;
                        if s == "max" {
                            a.max(b)
                        } else {
                            a.min(b)
                        }
                    }
                    _ => {
                        self.expect_sym(',')?;
                        let lo = self.real()?;
                        self.expect_sym(',')?;
                        let hi = self.real()?;
                        a.clamp(lo, hi)
                    }
                };
                self.expect_sym(')')?;
                Ok(e)
            }
            _ => self.unexpected("an expression"),
        }
    }

    pub(super) fn word(&mut self) -> PResult<WordFile> {
        let mut file = WordFile::default();
        loop {
            self.skip_blank();
            if *self.peek() == Tok::Eof {
                return Ok(file);
            }
            let kw = self.ident()?;
            match kw.as_str() {
                "mat" => {
                    let mut terms = vec![self.word_term(1.0)?];
                    loop {
                        if self.eat_sym('+') {
                            terms.push(self.word_term(1.0)?);
                        } else if self.eat_sym('-') {
                            terms.push(self.word_term(-1.0)?);
                        } else {
                            break;
                        }
                    }
                    file.factors.push(WordFactor::Mat { terms });
                }
                "diag" => {
                    let mut vectors = vec![self.ident()?];
                    while self.eat_sym(',') {
                        vectors.push(self.ident()?);
                    }
                    let (line, col) = self.here();
                    let e = self.function()?;
                    let expr = NonlinExpr::new(e, vectors.len(), 0)
                        .map_err(|error| DslError::Build { line, col, error })?;
                    let label = if self.at_keyword("as") {
                        self.bump();
                        self.ident()?
                    } else {
                        super::DEFAULT_DIAG_LABEL.to_string()
                    };
                    file.factors.push(WordFactor::Diag {
                        vectors,
                        expr,
                        label,
                    });
                }
                _ => {
                    self.pos -= 1;
                    return self.unexpected("`mat` or `diag`");
                }
            }
            self.end_of_line()?;
        }
    }

    fn word_term(&mut self, sign: f64) -> PResult<WordTerm> {
        let mut coef = sign;
        if let Tok::Number(v) = *self.peek() {
            self.bump();
            coef *= v;
            self.eat_sym('*');
        }
        let mut factors = Vec::new();
        while let Tok::Ident(_) = self.peek() {
            let name = self.ident()?;
            let t = self.transpose_mark()?;
            factors.push((name, t));
        }
        if factors.is_empty() {
            return self.unexpected("a matrix name");
        }
        Ok(WordTerm { coef, factors })
    }
}

fn slot(s: &str) -> Option<Expr> {
    let (head, rest) = s.split_at(1);
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = rest.parse().ok()?;
    match head {
        "x" => Some(Expr::Input(k)),
        "p" => Some(Expr::Param(k)),
        _ => None,
    }
}
