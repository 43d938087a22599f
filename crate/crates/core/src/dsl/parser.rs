use std::collections::{BTreeMap, HashSet};

use super::{Decl, DeclKind, Literal, ParseError, Positional, WorkflowAst, KNOWN_FUNCS};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Str(String),
    Num(f64),
    Eq,
    LParen,
    RParen,
    Comma,
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn tokenize(src: &str, line: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '#' => break,
            c if c.is_whitespace() => i += 1,
            '=' => {
                out.push(Token::Eq);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(&c) = chars.get(i) else {
                        return Err(syntax(line, "unterminated string literal"));
                    };
                    i += 1;
                    match c {
                        '"' => break,
                        '\\' => {
                            let Some(&esc) = chars.get(i) else {
                                return Err(syntax(line, "unterminated string literal"));
                            };
                            i += 1;
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                '\\' => '\\',
                                '"' => '"',
                                other => {
                                    return Err(syntax(line, format!("unknown escape `\\{other}`")))
                                }
                            });
                        }
                        c => s.push(c),
                    }
                }
                out.push(Token::Str(s));
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let c = chars[i];
                    let exp_sign = (c == '-' || c == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = parse_decimal(&text)
                    .ok_or_else(|| syntax(line, format!("malformed number `{text}`")))?;
                out.push(Token::Num(value));
            }
            c if is_ident_start(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(syntax(line, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

/// Accepts `[+-]digits[.digits][(e|E)[+-]digits]`; rejects `inf`, `nan` and
/// bare dots, which `str::parse::<f64>` would otherwise let through.
fn parse_decimal(text: &str) -> Option<f64> {
    let body = text.strip_prefix(['-', '+']).unwrap_or(text);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], Some(&body[pos + 1..])),
        None => (body, None),
    };
    let (int, frac) = match mantissa.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (mantissa, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    if let Some(e) = exponent {
        if !digits(e.strip_prefix(['-', '+']).unwrap_or(e)) {
            return None;
        }
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            _ => Err(syntax(self.line, format!("expected {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.next() {
            Some(Token::Ident(s)) => Ok(s),
            _ => Err(syntax(self.line, format!("expected {what}"))),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.pos < self.tokens.len() {
            return Err(syntax(self.line, "unexpected trailing input"));
        }
        Ok(())
    }
}

/// Parses workflow source text.
pub fn parse(text: &str) -> Result<WorkflowAst, ParseError> {
    let mut name: Option<String> = None;
    let mut decls: Vec<Decl> = Vec::new();
    let mut declared: HashSet<String> = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens = tokenize(raw, line)?;
        if tokens.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            tokens,
            pos: 0,
            line,
        };

        if name.is_none() {
            match cur.next() {
                Some(Token::Ident(kw)) if kw == "workflow" => {}
                _ => return Err(syntax(line, "program must start with `workflow <name>`")),
            }
            name = Some(cur.ident("workflow name")?);
            cur.finish()?;
            continue;
        }

        let kind_word = cur.ident("declaration kind")?;
        let kind = DeclKind::from_keyword(&kind_word).ok_or(ParseError::UnknownKind {
            kind: kind_word,
            line,
        })?;
        let decl_name = cur.ident("declaration name")?;
        cur.expect(Token::Eq, "`=`")?;
        let func = cur.ident("operator function")?;
        if !KNOWN_FUNCS.contains(&func.as_str()) {
            return Err(ParseError::UnknownFunc { func, line });
        }
        cur.expect(Token::LParen, "`(`")?;

        let mut positional = Vec::new();
        let mut named = BTreeMap::new();
        if cur.peek() == Some(&Token::RParen) {
            cur.next();
        } else {
            loop {
                match cur.next() {
                    Some(Token::Ident(id)) => {
                        if cur.peek() == Some(&Token::Eq) {
                            cur.next();
                            let value = match cur.next() {
                                Some(Token::Str(s)) => Literal::Str(s),
                                Some(Token::Num(n)) => Literal::Num(n),
                                Some(Token::Ident(s)) => Literal::Ident(s),
                                _ => return Err(syntax(line, format!("missing value for `{id}`"))),
                            };
                            if named.insert(id.clone(), value).is_some() {
                                return Err(syntax(line, format!("duplicate keyword `{id}`")));
                            }
                        } else {
                            if !named.is_empty() {
                                return Err(syntax(line, "positional argument after keyword"));
                            }
                            if !declared.contains(&id) {
                                return Err(ParseError::UnknownReference { name: id, line });
                            }
                            positional.push(Positional::Ref(id));
                        }
                    }
                    Some(tok @ (Token::Str(_) | Token::Num(_))) => {
                        if !named.is_empty() {
                            return Err(syntax(line, "positional argument after keyword"));
                        }
                        positional.push(match tok {
                            Token::Str(s) => Positional::Str(s),
                            Token::Num(n) => Positional::Num(n),
                            _ => unreachable!(),
                        });
                    }
                    _ => return Err(syntax(line, "expected argument")),
                }
                match cur.next() {
                    Some(Token::Comma) => continue,
                    Some(Token::RParen) => break,
                    _ => return Err(syntax(line, "expected `,` or `)`")),
                }
            }
        }
        cur.finish()?;

        if !declared.insert(decl_name.clone()) {
            return Err(ParseError::DuplicateName {
                name: decl_name,
                line,
            });
        }
        decls.push(Decl {
            kind,
            name: decl_name,
            func,
            positional,
            named,
            line,
        });
    }

    let name = name.ok_or_else(|| syntax(1, "empty program"))?;
    Ok(WorkflowAst { name, decls })
}
