use super::DslError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    Sym(char),
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

/// Token with its 1-based source position.
#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const SYMBOLS: &str = ":=()[],;+-*^/";

pub fn lex(src: &str) -> Result<Vec<Spanned>, DslError> {
    let mut out = Vec::new();
    for (li, line) in src.lines().enumerate() {
        let line_no = li + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Spanned {
                    tok: Tok::Ident(s),
                    line: line_no,
                    col,
                });
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                let digits = |i: &mut usize| {
                    while *i < chars.len() && chars[*i].is_ascii_digit() {
                        *i += 1;
                    }
                };
                digits(&mut i);
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    digits(&mut i);
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let save = i;
                    i += 1;
                    if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                        i += 1;
                    }
                    let before = i;
                    digits(&mut i);
                    if i == before {
                        i = save;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s.parse().map_err(|_| DslError::Syntax {
                    line: line_no,
                    col,
                    msg: format!("bad number `{s}`"),
                })?;
                out.push(Spanned {
                    tok: Tok::Number(v),
                    line: line_no,
                    col,
                });
                continue;
            }
            if SYMBOLS.contains(c) {
                out.push(Spanned {
                    tok: Tok::Sym(c),
                    line: line_no,
                    col,
                });
                i += 1;
                continue;
            }
            return Err(DslError::Syntax {
                line: line_no,
                col,
                msg: format!("unexpected character `{c}`"),
            });
        }
        out.push(Spanned {
            tok: Tok::Newline,
            line: line_no,
            col: chars.len() + 1,
        });
    }
    let last = src.lines().count().max(1);
    out.push(Spanned {
        tok: Tok::Eof,
        line: last,
        col: 1,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let t = lex("x = matmul W^T v # note\n").unwrap();
        let toks: Vec<_> = t.iter().map(|s| s.tok.clone()).collect();
        assert_eq!(
            toks,
            vec![
                Tok::Ident("x".into()),
                Tok::Sym('='),
                Tok::Ident("matmul".into()),
                Tok::Ident("W".into()),
                Tok::Sym('^'),
                Tok::Ident("T".into()),
                Tok::Ident("v".into()),
                Tok::Newline,
                Tok::Eof
            ]
        );
        assert_eq!((t[3].line, t[3].col), (1, 12));
    }

    #[test]
    fn numbers() {
        let t = lex("1.5e-3 2 0.25 3e").unwrap();
        assert_eq!(t[0].tok, Tok::Number(1.5e-3));
        assert_eq!(t[1].tok, Tok::Number(2.0));
        assert_eq!(t[2].tok, Tok::Number(0.25));
        assert_eq!(t[3].tok, Tok::Number(3.0));
        assert_eq!(t[4].tok, Tok::Ident("e".into()));
    }

    #[test]
    fn rejects_stray_characters() {
        assert!(matches!(
            lex("x = $"),
            Err(DslError::Syntax {
                line: 1,
                col: 5,
                ..
            })
        ));
    }
}
