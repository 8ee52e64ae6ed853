//! Extended token vocabulary and its textual markup.
//!
//! Added tokens are laid out contiguously after a base LLM vocabulary of
//! `B` ids:
//!
//! | token                      | id                         |
//! |----------------------------|----------------------------|
//! | `<\|sound_ssss\|>`         | `B + s`                    |
//! | `<\|duration_dd\|>`        | `B + S + (d - 2)`          |
//! | `<\|text_to_semantic\|>`   | `B + S + (D_max - 1)`      |
//! | `<\|sound_start\|>`        | `B + S + (D_max - 1) + 1`  |
//! | `<\|sound_end\|>`          | `B + S + (D_max - 1) + 2`  |
//!
//! Markup grammar (no whitespace anywhere):
//!
//! ```text
//! stream  := body | "<|sound_start|>" body "<|sound_end|>"
//! body    := group*
//! group   := "<|sound_" DIGIT{4} "|>" [ "<|duration_" DIGIT{2} "|>" ]
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::durcodec::{DurationCodec, Group, TokenStream};

pub const TASK_TOKEN: &str = "<|text_to_semantic|>";
pub const SOUND_START: &str = "<|sound_start|>";
pub const SOUND_END: &str = "<|sound_end|>";

/// Sound ids must fit in four markup digits.
pub const MAX_RENDERABLE_SOUND: u32 = 9999;
/// Durations must fit in two markup digits.
pub const MAX_RENDERABLE_DURATION: u32 = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Sound(u32),
    Duration(u32),
    TextToSemantic,
    SoundStart,
    SoundEnd,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Sound(s) => write!(f, "<|sound_{s:04}|>"),
            Token::Duration(d) => write!(f, "<|duration_{d:02}|>"),
            Token::TextToSemantic => f.write_str(TASK_TOKEN),
            Token::SoundStart => f.write_str(SOUND_START),
            Token::SoundEnd => f.write_str(SOUND_END),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("invalid vocabulary: {0}")]
    InvalidSpec(String),
    #[error("token {0} is not part of the vocabulary")]
    UnknownToken(Token),
    #[error("id {0} is outside the extended range")]
    UnknownId(u32),
    #[error("sound {0} cannot be rendered with four digits")]
    Unrenderable(u32),
    #[error("group {group}: sound {sound} is outside [0, {limit})")]
    SoundOutOfRange { group: usize, sound: u32, limit: u32 },
    #[error("group {group}: run length {run} is outside [1, {max}]")]
    RunOutOfRange { group: usize, run: u32, max: u32 },
    #[error("reading vocabulary file: {0}")]
    File(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    DurationWithoutSound,
    DurationOutOfRange { value: u32, max: u32 },
    SoundOutOfRange { value: u32, limit: u32 },
    MalformedLexeme,
    StrayText,
    UnexpectedToken(Token),
    MissingSoundEnd,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::DurationWithoutSound => f.write_str("duration without sound"),
            ParseErrorKind::DurationOutOfRange { value, max } => {
                write!(f, "duration {value} outside [2, {max}]")
            }
            ParseErrorKind::SoundOutOfRange { value, limit } => {
                write!(f, "sound {value} outside [0, {limit})")
            }
            ParseErrorKind::MalformedLexeme => f.write_str("malformed token"),
            ParseErrorKind::StrayText => f.write_str("stray text between tokens"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected token {t}"),
            ParseErrorKind::MissingSoundEnd => f.write_str("missing <|sound_end|>"),
        }
    }
}

/// A markup parse failure at a byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

/// Result of parsing markup: the stream and whether it was delimited.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub stream: TokenStream,
    pub wrapped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSpec {
    pub base_size: u32,
    pub sound_count: u32,
    pub max_duration: u32,
}

impl Default for VocabSpec {
    fn default() -> Self {
        // LLaMA-3 base vocabulary, 2048 sounds, 48-frame durations
        VocabSpec {
            base_size: 128_256,
            sound_count: 2048,
            max_duration: 48,
        }
    }
}

impl VocabSpec {
    pub fn new(base_size: u32, sound_count: u32, max_duration: u32) -> Result<Self, VocabError> {
        let spec = VocabSpec {
            base_size,
            sound_count,
            max_duration,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), VocabError> {
        if self.sound_count == 0 || self.sound_count > MAX_RENDERABLE_SOUND + 1 {
            return Err(VocabError::InvalidSpec(format!(
                "sound_count {} outside [1, {}]",
                self.sound_count,
                MAX_RENDERABLE_SOUND + 1
            )));
        }
        if self.max_duration < 2 || self.max_duration > MAX_RENDERABLE_DURATION {
            return Err(VocabError::InvalidSpec(format!(
                "max_duration {} outside [2, {MAX_RENDERABLE_DURATION}]",
                self.max_duration
            )));
        }
        if self.base_size.checked_add(self.added()).is_none() {
            return Err(VocabError::InvalidSpec("id space overflows u32".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| VocabError::File(format!("{}: {e}", path.display())))?;
        let spec: VocabSpec = toml::from_str(&text)
            .map_err(|e| VocabError::File(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn codec(&self) -> DurationCodec {
        DurationCodec::new(self.sound_count, self.max_duration).expect("validated spec")
    }

    /// Number of ids added on top of the base vocabulary.
    pub fn added(&self) -> u32 {
        self.sound_count + (self.max_duration - 1) + 3
    }

    fn special_base(&self) -> u32 {
        self.base_size + self.sound_count + (self.max_duration - 1)
    }

    pub fn token_id(&self, token: Token) -> Result<u32, VocabError> {
        match token {
            Token::Sound(s) if s < self.sound_count => Ok(self.base_size + s),
            Token::Duration(d) if (2..=self.max_duration).contains(&d) => {
                Ok(self.base_size + self.sound_count + (d - 2))
            }
            Token::TextToSemantic => Ok(self.special_base()),
            Token::SoundStart => Ok(self.special_base() + 1),
            Token::SoundEnd => Ok(self.special_base() + 2),
            other => Err(VocabError::UnknownToken(other)),
        }
    }

    pub fn id_token(&self, id: u32) -> Result<Token, VocabError> {
        if id < self.base_size || id - self.base_size >= self.added() {
            return Err(VocabError::UnknownId(id));
        }
        let off = id - self.base_size;
        let durations = self.max_duration - 1;
        Ok(if off < self.sound_count {
            Token::Sound(off)
        } else if off < self.sound_count + durations {
            Token::Duration(off - self.sound_count + 2)
        } else {
            match off - self.sound_count - durations {
                0 => Token::TextToSemantic,
                1 => Token::SoundStart,
                _ => Token::SoundEnd,
            }
        })
    }

    /// Every added token in id order.
    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        (self.base_size..self.base_size + self.added()).map(|id| self.id_token(id).unwrap())
    }

    /// Flatten a stream into markup tokens, optionally delimited.
    pub fn stream_tokens(&self, stream: &TokenStream, wrap: bool) -> Result<Vec<Token>, VocabError> {
        let mut out = Vec::with_capacity(stream.emitted_tokens() + 2);
        if wrap {
            out.push(Token::SoundStart);
        }
        for (group, g) in stream.groups.iter().enumerate() {
            if g.sound > MAX_RENDERABLE_SOUND {
                return Err(VocabError::Unrenderable(g.sound));
            }
            if g.sound >= self.sound_count {
                return Err(VocabError::SoundOutOfRange {
                    group,
                    sound: g.sound,
                    limit: self.sound_count,
                });
            }
            if g.run < 1 || g.run > self.max_duration {
                return Err(VocabError::RunOutOfRange {
                    group,
                    run: g.run,
                    max: self.max_duration,
                });
            }
            out.push(Token::Sound(g.sound));
            if g.run >= 2 {
                out.push(Token::Duration(g.run));
            }
        }
        if wrap {
            out.push(Token::SoundEnd);
        }
        Ok(out)
    }

    pub fn render(&self, stream: &TokenStream, wrap: bool) -> Result<String, VocabError> {
        let tokens = self.stream_tokens(stream, wrap)?;
        let mut out = String::with_capacity(tokens.len() * 14);
        for t in tokens {
            use fmt::Write;
            write!(out, "{t}").unwrap();
        }
        Ok(out)
    }

    /// Strict parse of stream markup.
    pub fn parse(&self, text: &str) -> Result<Parsed, ParseError> {
        let err = |offset, kind| ParseError { offset, kind };
        let mut groups: Vec<Group> = Vec::new();
        // whether the last group may still take a duration
        let mut open_sound = false;
        let mut wrapped = false;
        let mut closed = false;
        let mut pos = 0;
        while pos < text.len() {
            let (token, next) = lex(text, pos)?;
            if closed {
                return Err(err(pos, ParseErrorKind::UnexpectedToken(token)));
            }
            match token {
                Token::SoundStart if pos == 0 => wrapped = true,
                Token::SoundEnd if wrapped => closed = true,
                Token::Sound(value) => {
                    if value >= self.sound_count {
                        return Err(err(
                            pos,
                            ParseErrorKind::SoundOutOfRange {
                                value,
                                limit: self.sound_count,
                            },
                        ));
                    }
                    groups.push(Group::new(value, 1));
                    open_sound = true;
                }
                Token::Duration(value) => {
                    if !open_sound {
                        return Err(err(pos, ParseErrorKind::DurationWithoutSound));
                    }
                    if value < 2 || value > self.max_duration {
                        return Err(err(
                            pos,
                            ParseErrorKind::DurationOutOfRange {
                                value,
                                max: self.max_duration,
                            },
                        ));
                    }
                    groups.last_mut().unwrap().run = value;
                    open_sound = false;
                }
                other => return Err(err(pos, ParseErrorKind::UnexpectedToken(other))),
            }
            if !matches!(token, Token::Sound(_)) && !matches!(token, Token::Duration(_)) {
                open_sound = false;
            }
            pos = next;
        }
        if wrapped && !closed {
            return Err(err(text.len(), ParseErrorKind::MissingSoundEnd));
        }
        Ok(Parsed {
            stream: TokenStream::new(groups),
            wrapped,
        })
    }
}

/// Lex one `<|...|>` token starting at `pos`; returns it and the end offset.
fn lex(text: &str, pos: usize) -> Result<(Token, usize), ParseError> {
    let rest = &text[pos..];
    if !rest.starts_with("<|") {
        return Err(ParseError {
            offset: pos,
            kind: ParseErrorKind::StrayText,
        });
    }
    let malformed = ParseError {
        offset: pos,
        kind: ParseErrorKind::MalformedLexeme,
    };
    let close = rest[2..].find("|>").ok_or_else(|| malformed.clone())?;
    let name = &rest[2..2 + close];
    let end = pos + 2 + close + 2;
    let digits = |s: &str, n: usize| -> Option<u32> {
        (s.len() == n && s.bytes().all(|b| b.is_ascii_digit())).then(|| s.parse().unwrap())
    };
    let token = match name {
        "sound_start" => Token::SoundStart,
        "sound_end" => Token::SoundEnd,
        "text_to_semantic" => Token::TextToSemantic,
        _ => {
            if let Some(v) = name.strip_prefix("sound_").and_then(|d| digits(d, 4)) {
                Token::Sound(v)
            } else if let Some(v) = name.strip_prefix("duration_").and_then(|d| digits(d, 2)) {
                Token::Duration(v)
            } else {
                return Err(malformed);
            }
        }
    };
    Ok((token, end))
}
