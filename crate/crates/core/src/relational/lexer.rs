use super::RelationalError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Neck,
    Not,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Neck => "`:-`".into(),
            Tok::Not => "`\\+`".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

struct Scanner<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Scanner<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.chars.next();
        if ch == Some('\n') {
            self.line += 1;
            self.col = 1;
        } else if ch.is_some() {
            self.col += 1;
        }
        ch
    }
}

/// `%` starts a comment running to end of line (outside strings).
pub(crate) fn lex(text: &str) -> Result<Vec<Spanned>, RelationalError> {
    let mut out = Vec::new();
    let mut sc = Scanner { chars: text.chars().peekable(), line: 1, col: 1 };
    let err = |line, col, msg: String| RelationalError::Syntax { line, col, msg };

    while let Some(c) = sc.peek() {
        let (l0, c0) = (sc.line, sc.col);
        match c {
            c if c.is_whitespace() => {
                sc.bump();
            }
            '%' => {
                while sc.peek().is_some_and(|c| c != '\n') {
                    sc.bump();
                }
            }
            '(' | ')' | ',' | '.' => {
                sc.bump();
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    _ => Tok::Dot,
                };
                out.push(Spanned { tok, line: l0, col: c0 });
            }
            ':' => {
                sc.bump();
                if sc.bump() != Some('-') {
                    return Err(err(l0, c0, "expected `:-`".into()));
                }
                out.push(Spanned { tok: Tok::Neck, line: l0, col: c0 });
            }
            '\\' => {
                sc.bump();
                if sc.bump() != Some('+') {
                    return Err(err(l0, c0, "expected `\\+`".into()));
                }
                out.push(Spanned { tok: Tok::Not, line: l0, col: c0 });
            }
            '"' => {
                sc.bump();
                let mut s = String::new();
                loop {
                    let (l, c) = (sc.line, sc.col);
                    match sc.bump() {
                        None | Some('\n') => return Err(err(l0, c0, "unterminated string".into())),
                        Some('"') => break,
                        Some('\\') => match sc.bump() {
                            Some(e @ ('"' | '\\')) => s.push(e),
                            _ => return Err(err(l, c, "invalid escape in string".into())),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                out.push(Spanned { tok: Tok::Str(s), line: l0, col: c0 });
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut s = String::new();
                while let Some(c) = sc.peek().filter(|c| c.is_alphanumeric() || *c == '_') {
                    s.push(c);
                    sc.bump();
                }
                out.push(Spanned { tok: Tok::Ident(s), line: l0, col: c0 });
            }
            other => return Err(err(l0, c0, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

/// Cursor over a token stream with positioned diagnostics.
pub(crate) struct Cursor<'a> {
    toks: &'a [Spanned],
    pos: usize,
    end: (usize, usize),
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(toks: &'a [Spanned], text: &str) -> Self {
        let line = text.lines().count().max(1);
        let col = text.lines().last().map_or(0, |l| l.chars().count()) + 1;
        Self { toks, pos: 0, end: (line, col) }
    }

    pub(crate) fn peek(&self) -> Option<&'a Spanned> {
        self.toks.get(self.pos)
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub(crate) fn next(&mut self) -> Option<&'a Spanned> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    pub(crate) fn error_here(&self, msg: impl Into<String>) -> RelationalError {
        let (line, col) = self.peek().map_or(self.end, |s| (s.line, s.col));
        RelationalError::Syntax { line, col, msg: msg.into() }
    }

    pub(crate) fn expect(&mut self, want: &Tok) -> Result<&'a Spanned, RelationalError> {
        match self.peek() {
            Some(s) if &s.tok == want => {
                self.pos += 1;
                Ok(s)
            }
            Some(s) => Err(self.error_here(format!("expected {}, found {}", want.describe(), s.tok.describe()))),
            None => Err(self.error_here(format!("expected {}, found end of input", want.describe()))),
        }
    }

    pub(crate) fn ident(&mut self) -> Result<(&'a str, usize, usize), RelationalError> {
        match self.peek() {
            Some(Spanned { tok: Tok::Ident(s), line, col }) => {
                self.pos += 1;
                Ok((s.as_str(), *line, *col))
            }
            Some(s) => Err(self.error_here(format!("expected identifier, found {}", s.tok.describe()))),
            None => Err(self.error_here("expected identifier, found end of input")),
        }
    }
}
