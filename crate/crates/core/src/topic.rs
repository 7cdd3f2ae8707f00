use alloc::sync::Arc;
use core::borrow::Borrow;
use core::fmt;

/// Longest topic name, in UTF-8 bytes.
pub const MAX_TOPIC_LEN: usize = 255;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopicError {
    #[error("topic name is empty")]
    Empty,
    #[error("topic name is {0} bytes, the limit is 255")]
    TooLong(usize),
    #[error("topic name contains a NUL byte")]
    InteriorNul,
}

/// A validated topic name.
///
/// Cloning is cheap: every envelope carries its topic, so the text is shared.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicName(Arc<str>);

impl TopicName {
    pub fn new(name: &str) -> Result<Self, TopicError> {
        Self::validate(name)?;
        Ok(Self(Arc::from(name)))
    }

    pub fn validate(name: &str) -> Result<(), TopicError> {
        if name.is_empty() {
            return Err(TopicError::Empty);
        }
        if name.len() > MAX_TOPIC_LEN {
            return Err(TopicError::TooLong(name.len()));
        }
        if name.bytes().any(|b| b == 0) {
            return Err(TopicError::InteriorNul);
        }
        Ok(())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<&str> for TopicName {
    type Error = TopicError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl Borrow<str> for TopicName {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for TopicName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&*self.0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    #[test]
    fn rejects_empty() {
        assert_eq!(TopicName::new(""), Err(TopicError::Empty));
    }

    #[test]
    fn length_limit_is_in_bytes() {
        let ok = "x".repeat(255);
        assert!(TopicName::new(&ok).is_ok());
        let too_long = "x".repeat(256);
        assert_eq!(TopicName::new(&too_long), Err(TopicError::TooLong(256)));
        // 128 two-byte characters = 256 bytes
        let wide: String = "é".repeat(128);
        assert_eq!(TopicName::new(&wide), Err(TopicError::TooLong(256)));
    }

    #[test]
    fn rejects_nul() {
        assert_eq!(TopicName::new("a\0b"), Err(TopicError::InteriorNul));
    }

    #[test]
    fn equality_is_bytewise() {
        let a = TopicName::new("imu").unwrap();
        let b = TopicName::new("imu").unwrap();
        let c = TopicName::new("IMU").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
