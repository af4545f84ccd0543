//! Controlled prompt grammar.
//!
//! A prompt describes objects, their pairwise spatial relations, lighting
//! tags and a camera move:
//!
//! ```text
//! prompt   := "scene:" objects ["|" "lighting:" tag+] ["|" "camera:" move (name "=" number)*]
//! objects  := object (";" object)* (";" relation)*
//! object   := "a"? adjective* category ["material" token]
//! relation := category relkind category
//! ```
//!
//! Tokens are `[a-z0-9_.-]+` after ASCII case folding. Relations name
//! categories, which resolve to the first object clause with that category.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    LeftOf,
    RightOf,
    InFrontOf,
    Behind,
    OnTopOf,
    NextTo,
}

impl RelationKind {
    pub const ALL: [RelationKind; 6] = [
        RelationKind::LeftOf,
        RelationKind::RightOf,
        RelationKind::InFrontOf,
        RelationKind::Behind,
        RelationKind::OnTopOf,
        RelationKind::NextTo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::LeftOf => "left_of",
            RelationKind::RightOf => "right_of",
            RelationKind::InFrontOf => "in_front_of",
            RelationKind::Behind => "behind",
            RelationKind::OnTopOf => "on_top_of",
            RelationKind::NextTo => "next_to",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == token)
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Static,
    Orbit,
    Dolly,
    Crane,
    DollyZoom,
}

impl MoveKind {
    pub const ALL: [MoveKind; 5] = [
        MoveKind::Static,
        MoveKind::Orbit,
        MoveKind::Dolly,
        MoveKind::Crane,
        MoveKind::DollyZoom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MoveKind::Static => "static",
            MoveKind::Orbit => "orbit",
            MoveKind::Dolly => "dolly",
            MoveKind::Crane => "crane",
            MoveKind::DollyZoom => "dolly_zoom",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == token)
    }
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectClause {
    pub category: String,
    pub adjectives: Vec<String>,
    pub material: Option<String>,
}

impl ObjectClause {
    /// Category, adjectives and material as one tag list, used for asset
    /// retrieval.
    pub fn tags(&self) -> Vec<String> {
        let mut tags = vec![self.category.clone()];
        tags.extend(self.adjectives.iter().cloned());
        tags.extend(self.material.iter().cloned());
        tags
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationClause {
    pub subject: usize,
    pub relation: RelationKind,
    pub object: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraClause {
    pub move_kind: MoveKind,
    pub params: Vec<(String, f64)>,
}

impl CameraClause {
    pub fn new(move_kind: MoveKind) -> Self {
        Self {
            move_kind,
            params: Vec::new(),
        }
    }

    /// Last value bound to `name`, if any.
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().rev().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAst {
    pub objects: Vec<ObjectClause>,
    pub relations: Vec<RelationClause>,
    pub lighting_tags: Vec<String>,
    pub camera: Option<CameraClause>,
}

impl fmt::Display for PromptAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("scene:")?;
        for (i, obj) in self.objects.iter().enumerate() {
            f.write_str(if i == 0 { " a" } else { "; a" })?;
            for adj in &obj.adjectives {
                write!(f, " {adj}")?;
            }
            write!(f, " {}", obj.category)?;
            if let Some(m) = &obj.material {
                write!(f, " material {m}")?;
            }
        }
        for rel in &self.relations {
            write!(
                f,
                "; {} {} {}",
                self.objects[rel.subject].category, rel.relation, self.objects[rel.object].category
            )?;
        }
        if !self.lighting_tags.is_empty() {
            f.write_str(" | lighting:")?;
            for tag in &self.lighting_tags {
                write!(f, " {tag}")?;
            }
        }
        if let Some(cam) = &self.camera {
            write!(f, " | camera: {}", cam.move_kind)?;
            for (name, value) in &cam.params {
                write!(f, " {name}={value}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("syntax error at byte {position}: expected {}, found {found}", expected.join(" or "))]
    SyntaxError {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown relation '{token}' at byte {position}")]
    UnknownRelation { position: usize, token: String },
    #[error("unknown camera move '{token}' at byte {position}")]
    UnknownMove { position: usize, token: String },
    #[error("relation refers to undeclared object '{category}' at byte {position}")]
    DanglingReference { position: usize, category: String },
    #[error("object '{category}' related to itself at byte {position}")]
    SelfRelation { position: usize, category: String },
}

impl DslError {
    pub fn position(&self) -> Option<usize> {
        match self {
            DslError::EmptyPrompt => None,
            DslError::SyntaxError { position, .. }
            | DslError::UnknownRelation { position, .. }
            | DslError::UnknownMove { position, .. }
            | DslError::DanglingReference { position, .. }
            | DslError::SelfRelation { position, .. } => Some(*position),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Colon,
    Semi,
    Pipe,
    Eq,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("'{w}'"),
            Tok::Colon => "':'".into(),
            Tok::Semi => "';'".into(),
            Tok::Pipe => "'|'".into(),
            Tok::Eq => "'='".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    pos: usize,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'.' | b'-')
}

fn lex(text: &str) -> Result<Vec<Spanned>, DslError> {
    let folded = text.to_ascii_lowercase();
    let bytes = folded.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let single = match b {
            b':' => Some(Tok::Colon),
            b';' => Some(Tok::Semi),
            b'|' => Some(Tok::Pipe),
            b'=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, pos: i });
            i += 1;
        } else if is_word_byte(b) {
            let start = i;
            while i < bytes.len() && is_word_byte(bytes[i]) {
                i += 1;
            }
            out.push(Spanned {
                tok: Tok::Word(folded[start..i].to_string()),
                pos: start,
            });
        } else {
            let ch = folded[i..].chars().next().unwrap_or('?');
            return Err(DslError::SyntaxError {
                position: i,
                expected: vec!["token".into()],
                found: format!("'{ch}'"),
            });
        }
    }
    Ok(out)
}

fn is_number(word: &str) -> bool {
    let digits = word.strip_prefix('-').unwrap_or(word);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    all_digits(int) && frac.is_none_or(all_digits)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |s| s.pos)
    }

    fn error(&self, expected: &[&str]) -> DslError {
        DslError::SyntaxError {
            position: self.here(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self
                .peek()
                .map_or_else(|| "end of input".to_string(), |s| s.tok.describe()),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), DslError> {
        match self.peek() {
            Some(Spanned { tok: Tok::Word(w), .. }) if w == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(&[&format!("'{kw}'")])),
        }
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<(), DslError> {
        match self.peek() {
            Some(s) if s.tok == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(&[label])),
        }
    }

    fn word(&mut self, label: &str) -> Result<(String, usize), DslError> {
        match self.peek() {
            Some(Spanned { tok: Tok::Word(w), pos }) => {
                let out = (w.clone(), *pos);
                self.pos += 1;
                Ok(out)
            }
            _ => Err(self.error(&[label])),
        }
    }

    fn at(&self, tok: &Tok) -> bool {
        self.peek().is_some_and(|s| &s.tok == tok)
    }

    /// Words of one `;`-separated item, stopping before `;`, `|` or the end.
    fn item_words(&mut self) -> Result<Vec<(String, usize)>, DslError> {
        let mut words = Vec::new();
        while let Some(s) = self.peek() {
            match &s.tok {
                Tok::Word(w) => {
                    words.push((w.clone(), s.pos));
                    self.pos += 1;
                }
                Tok::Semi | Tok::Pipe => break,
                _ => {
                    let expected: &[&str] = if words.is_empty() {
                        &["word"]
                    } else {
                        &["word", "';'", "'|'", "end of input"]
                    };
                    return Err(self.error(expected));
                }
            }
        }
        if words.is_empty() {
            return Err(self.error(&["word"]));
        }
        Ok(words)
    }
}

fn parse_object(words: &[(String, usize)], end_pos: usize) -> Result<ObjectClause, DslError> {
    let body = match words.first() {
        Some((w, _)) if w == "a" && words.len() > 1 => &words[1..],
        _ => words,
    };
    let syntax = |position: usize, expected: &[&str], found: String| DslError::SyntaxError {
        position,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found,
    };
    match body.iter().position(|(w, _)| w == "material") {
        Some(0) => Err(syntax(body[0].1, &["category"], "'material'".into())),
        Some(m) => {
            let material = match body.get(m + 1) {
                Some((w, _)) => w.clone(),
                None => return Err(syntax(end_pos, &["material token"], "end of item".into())),
            };
            if let Some((w, p)) = body.get(m + 2) {
                return Err(syntax(*p, &["';'", "'|'", "end of input"], format!("'{w}'")));
            }
            Ok(ObjectClause {
                category: body[m - 1].0.clone(),
                adjectives: body[..m - 1].iter().map(|(w, _)| w.clone()).collect(),
                material: Some(material),
            })
        }
        None => {
            let (last, rest) = body.split_last().expect("item has at least one word");
            Ok(ObjectClause {
                category: last.0.clone(),
                adjectives: rest.iter().map(|(w, _)| w.clone()).collect(),
                material: None,
            })
        }
    }
}

fn looks_like_relation(words: &[(String, usize)], objects: &[ObjectClause]) -> bool {
    words.len() == 3
        && words[0].0 != "a"
        && words[1].0 != "material"
        && (RelationKind::from_token(&words[1].0).is_some() || objects.iter().any(|o| o.category == words[0].0))
}

fn parse_relation(words: &[(String, usize)], objects: &[ObjectClause]) -> Result<RelationClause, DslError> {
    let resolve = |(name, pos): &(String, usize)| {
        objects
            .iter()
            .position(|o| &o.category == name)
            .ok_or_else(|| DslError::DanglingReference {
                position: *pos,
                category: name.clone(),
            })
    };
    let subject = resolve(&words[0])?;
    let relation = RelationKind::from_token(&words[1].0).ok_or_else(|| DslError::UnknownRelation {
        position: words[1].1,
        token: words[1].0.clone(),
    })?;
    let object = resolve(&words[2])?;
    if subject == object {
        return Err(DslError::SelfRelation {
            position: words[2].1,
            category: words[2].0.clone(),
        });
    }
    Ok(RelationClause {
        subject,
        relation,
        object,
    })
}

/// Parse a prompt into its AST. Pure and deterministic; whitespace between
/// tokens is insignificant and ASCII letters are case-folded.
pub fn parse_prompt(text: &str) -> Result<PromptAst, DslError> {
    if text.trim().is_empty() {
        return Err(DslError::EmptyPrompt);
    }
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };

    p.expect_keyword("scene")?;
    p.expect(Tok::Colon, "':'")?;

    let mut objects = Vec::new();
    let mut relations = Vec::new();
    loop {
        let item_start = p.here();
        let words = p.item_words()?;
        let end_pos = p.here();
        if !relations.is_empty() || looks_like_relation(&words, &objects) {
            if !looks_like_relation(&words, &objects) {
                return Err(DslError::SyntaxError {
                    position: item_start,
                    expected: vec!["relation".into()],
                    found: format!("'{}'", words[0].0),
                });
            }
            relations.push(parse_relation(&words, &objects)?);
        } else {
            objects.push(parse_object(&words, end_pos)?);
        }
        if p.at(&Tok::Semi) {
            p.pos += 1;
        } else {
            break;
        }
    }

    let mut lighting_tags = Vec::new();
    let mut camera = None;
    let mut seen_lighting = false;
    while p.at(&Tok::Pipe) {
        p.pos += 1;
        let section = match p.peek() {
            Some(Spanned { tok: Tok::Word(w), .. }) => w.clone(),
            _ => String::new(),
        };
        if section == "lighting" && !seen_lighting && camera.is_none() {
            p.pos += 1;
            p.expect(Tok::Colon, "':'")?;
            seen_lighting = true;
            loop {
                match p.peek() {
                    Some(Spanned { tok: Tok::Word(w), .. }) => {
                        lighting_tags.push(w.clone());
                        p.pos += 1;
                    }
                    _ => break,
                }
            }
            if lighting_tags.is_empty() {
                return Err(p.error(&["word"]));
            }
        } else if section == "camera" && camera.is_none() {
            p.pos += 1;
            p.expect(Tok::Colon, "':'")?;
            let (mv, mv_pos) = p.word("camera move")?;
            let move_kind = MoveKind::from_token(&mv).ok_or(DslError::UnknownMove {
                position: mv_pos,
                token: mv,
            })?;
            let mut params = Vec::new();
            while p.peek().is_some_and(|s| matches!(s.tok, Tok::Word(_))) {
                let (name, _) = p.word("parameter name")?;
                p.expect(Tok::Eq, "'='")?;
                let value = match p.peek() {
                    Some(Spanned { tok: Tok::Word(w), .. }) if is_number(w) => {
                        w.parse::<f64>().map_err(|_| p.error(&["number"]))?
                    }
                    _ => return Err(p.error(&["number"])),
                };
                p.pos += 1;
                params.push((name, value));
            }
            camera = Some(CameraClause { move_kind, params });
        } else {
            let mut expected = Vec::new();
            if !seen_lighting && camera.is_none() {
                expected.push("'lighting'");
            }
            if camera.is_none() {
                expected.push("'camera'");
            }
            return Err(p.error(&expected));
        }
    }

    if p.peek().is_some() {
        let expected: &[&str] = if camera.is_some() {
            &["parameter name", "end of input"]
        } else {
            &["';'", "'|'", "end of input"]
        };
        return Err(p.error(expected));
    }

    Ok(PromptAst {
        objects,
        relations,
        lighting_tags,
        camera,
    })
}
