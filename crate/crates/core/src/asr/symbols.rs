use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output alphabet. Ids `0..N` are characters, id `N` is the CTC blank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolTable {
    chars: Vec<char>,
    separator: Option<usize>,
}

impl SymbolTable {
    pub fn new(chars: Vec<char>, separator: Option<char>) -> Result<Self> {
        if chars.len() < 2 {
            return Err(Error::InvalidArgument("need at least two symbols".into()));
        }
        let mut seen = chars.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != chars.len() {
            return Err(Error::InvalidArgument("duplicate symbols".into()));
        }
        let separator = match separator {
            Some(c) => Some(
                chars
                    .iter()
                    .position(|&x| x == c)
                    .ok_or(Error::UnknownSymbol(c))?,
            ),
            None => None,
        };
        Ok(Self { chars, separator })
    }

    /// `letters` lowercase letters followed by a space word separator.
    pub fn letters_with_space(letters: usize) -> Result<Self> {
        if letters == 0 || letters > 26 {
            return Err(Error::InvalidArgument(format!("{letters} letters")));
        }
        let mut chars: Vec<char> = (b'a'..b'a' + letters as u8).map(char::from).collect();
        chars.push(' ');
        Self::new(chars, Some(' '))
    }

    /// Number of non-blank symbols, `N`.
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn blank(&self) -> usize {
        self.chars.len()
    }

    /// CTC output width, `N + 1`.
    pub fn ctc_width(&self) -> usize {
        self.chars.len() + 1
    }

    /// Attention-decoder output width: characters, blank slot, and a shared
    /// start/end token.
    pub fn decoder_width(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn sos_eos(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn separator(&self) -> Option<usize> {
        self.separator
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id(&self, c: char) -> Result<usize> {
        self.chars
            .iter()
            .position(|&x| x == c)
            .ok_or(Error::UnknownSymbol(c))
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars().map(|c| self.id(c)).collect()
    }

    /// Ids to text; the blank is skipped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&i| self.chars.get(i)).collect()
    }

    /// Printable name: the character itself, `<sp>` for a space, `<blank>`.
    pub fn name(&self, id: usize) -> String {
        match self.chars.get(id) {
            Some(' ') => "<sp>".into(),
            Some(c) => c.to_string(),
            None if id == self.blank() => "<blank>".into(),
            None => format!("<{id}>"),
        }
    }

    /// Splits on the separator, dropping empty words.
    pub fn words(&self, ids: &[usize]) -> Vec<Vec<usize>> {
        match self.separator {
            Some(sep) => ids
                .split(|&i| i == sep)
                .filter(|w| !w.is_empty())
                .map(<[usize]>::to_vec)
                .collect(),
            None if ids.is_empty() => vec![],
            None => vec![ids.to_vec()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let s = SymbolTable::letters_with_space(6).unwrap();
        assert_eq!(s.len(), 7);
        assert_eq!(s.blank(), 7);
        assert_eq!(s.ctc_width(), 8);
        assert_eq!(s.decoder_width(), 9);
        assert_eq!(s.separator(), Some(6));
        assert_eq!(s.encode("ab fa").unwrap(), vec![0, 1, 6, 5, 0]);
        assert_eq!(s.decode(&[0, 1, 7, 6, 5]), "ab f");
        assert!(s.encode("az").is_err());
    }

    #[test]
    fn words_drop_empties() {
        let s = SymbolTable::letters_with_space(3).unwrap();
        let ids = s.encode(" ab  c ").unwrap();
        assert_eq!(s.words(&ids), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn rejects_degenerate_tables() {
        assert!(SymbolTable::new(vec!['a'], None).is_err());
        assert!(SymbolTable::new(vec!['a', 'a'], None).is_err());
        assert!(SymbolTable::new(vec!['a', 'b'], Some(' ')).is_err());
    }
}
