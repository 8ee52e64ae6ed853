//! Duration codec: runs of a repeated sound token become `(sound, run)` groups.
//!
//! A run longer than `max_duration` is split greedily into full-size groups
//! followed by the remainder. Runs of length 1 carry no duration token, so the
//! emitted token count never exceeds the input length.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("sound id {sound} at position {position} is outside [0, {limit})")]
    SoundOutOfRange { position: usize, sound: u32, limit: u32 },
    #[error("group {group} has run length {run}, allowed range is [1, {max}]")]
    RunOutOfRange { group: usize, run: u32, max: u32 },
    #[error("invalid codec configuration: {0}")]
    InvalidConfig(String),
}

/// One sound token together with the number of frames it spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Group {
    pub sound: u32,
    pub run: u32,
}

impl Group {
    pub fn new(sound: u32, run: u32) -> Self {
        Group { sound, run }
    }

    /// Markup tokens needed for this group: the sound, plus a duration when
    /// the run is longer than one frame.
    pub fn emitted_tokens(&self) -> usize {
        if self.run >= 2 {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct TokenStream {
    pub groups: Vec<Group>,
}

impl TokenStream {
    pub fn new(groups: Vec<Group>) -> Self {
        TokenStream { groups }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Number of frames the stream expands to.
    pub fn frame_count(&self) -> usize {
        self.groups.iter().map(|g| g.run as usize).sum()
    }

    pub fn emitted_tokens(&self) -> usize {
        self.groups.iter().map(Group::emitted_tokens).sum()
    }

    /// Expand into a sound id per frame without any validation.
    pub fn expand(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.frame_count());
        for g in &self.groups {
            out.extend(std::iter::repeat_n(g.sound, g.run as usize));
        }
        out
    }

    pub fn concat(&mut self, other: &TokenStream) {
        self.groups.extend_from_slice(&other.groups);
    }
}

/// Codec parameters: sound vocabulary size `S` and the largest duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DurationCodec {
    sound_count: u32,
    max_duration: u32,
}

impl Default for DurationCodec {
    fn default() -> Self {
        DurationCodec {
            sound_count: 2048,
            max_duration: 48,
        }
    }
}

impl DurationCodec {
    pub fn new(sound_count: u32, max_duration: u32) -> Result<Self, CodecError> {
        if sound_count == 0 {
            return Err(CodecError::InvalidConfig("sound_count must be positive".into()));
        }
        if max_duration < 2 {
            return Err(CodecError::InvalidConfig(format!(
                "max_duration must be at least 2, got {max_duration}"
            )));
        }
        Ok(DurationCodec {
            sound_count,
            max_duration,
        })
    }

    pub fn sound_count(&self) -> u32 {
        self.sound_count
    }

    pub fn max_duration(&self) -> u32 {
        self.max_duration
    }

    pub fn compress(&self, tokens: &[u32]) -> Result<TokenStream, CodecError> {
        let mut groups: Vec<Group> = Vec::new();
        for (position, &sound) in tokens.iter().enumerate() {
            if sound >= self.sound_count {
                return Err(CodecError::SoundOutOfRange {
                    position,
                    sound,
                    limit: self.sound_count,
                });
            }
            match groups.last_mut() {
                Some(g) if g.sound == sound && g.run < self.max_duration => g.run += 1,
                _ => groups.push(Group::new(sound, 1)),
            }
        }
        Ok(TokenStream { groups })
    }

    pub fn validate(&self, stream: &TokenStream) -> Result<(), CodecError> {
        for (group, g) in stream.groups.iter().enumerate() {
            if g.run < 1 || g.run > self.max_duration {
                return Err(CodecError::RunOutOfRange {
                    group,
                    run: g.run,
                    max: self.max_duration,
                });
            }
            if g.sound >= self.sound_count {
                return Err(CodecError::SoundOutOfRange {
                    position: group,
                    sound: g.sound,
                    limit: self.sound_count,
                });
            }
        }
        Ok(())
    }

    pub fn decompress(&self, stream: &TokenStream) -> Result<Vec<u32>, CodecError> {
        self.validate(stream)?;
        Ok(stream.expand())
    }

    /// A stream is canonical when no group shorter than `max_duration` is
    /// followed by a group with the same sound.
    pub fn is_canonical(&self, stream: &TokenStream) -> bool {
        stream
            .groups
            .windows(2)
            .all(|w| w[0].sound != w[1].sound || w[0].run == self.max_duration)
    }

    /// Merge adjacent equal sounds and re-split at `max_duration`.
    pub fn canonicalize(&self, stream: &TokenStream) -> Result<TokenStream, CodecError> {
        self.compress(&self.decompress(stream)?)
    }
}

/// Emitted markup tokens per original frame; `None` for an empty original.
pub fn compression_ratio(stream: &TokenStream, original_len: usize) -> Option<f64> {
    (original_len > 0).then(|| stream.emitted_tokens() as f64 / original_len as f64)
}
