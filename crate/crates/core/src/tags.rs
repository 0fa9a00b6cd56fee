//! The seven-letter label alphabet and the fixed-order vectors indexed by it.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Tag letters in canonical (alphabetical) order. Every per-tag vector in the
/// crate is indexed in this order.
pub const TAG_LETTERS: [char; 7] = ['b', 'c', 'f', 'm', 'o', 'p', 'v'];

pub const NUM_TAGS: usize = TAG_LETTERS.len();

/// Index of `letter` in [`TAG_LETTERS`], or `None` if it is not part of the alphabet.
pub fn tag_index(letter: char) -> Option<usize> {
    TAG_LETTERS.iter().position(|&c| c == letter)
}

/// A subset of the alphabet, stored as a bitmask (bit `i` = `TAG_LETTERS[i]`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TagSet(u8);

impl TagSet {
    pub const EMPTY: TagSet = TagSet(0);

    /// Parses a concatenated label string such as `"cmv"`. Duplicate letters
    /// collapse; the first letter outside the alphabet is returned as the error.
    pub fn parse(label: &str) -> Result<TagSet, char> {
        let mut set = TagSet::EMPTY;
        for letter in label.chars() {
            let index = tag_index(letter).ok_or(letter)?;
            set.insert(index);
        }
        Ok(set)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> TagSet {
        let mut set = TagSet::EMPTY;
        for index in indices {
            set.insert(index);
        }
        set
    }

    pub fn insert(&mut self, index: usize) {
        assert!(index < NUM_TAGS, "tag index {index} out of range");
        self.0 |= 1 << index;
    }

    pub fn contains(&self, index: usize) -> bool {
        index < NUM_TAGS && self.0 & (1 << index) != 0
    }

    pub fn contains_letter(&self, letter: char) -> bool {
        tag_index(letter).is_some_and(|i| self.contains(i))
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..NUM_TAGS).filter(|&i| self.contains(i))
    }

    /// Binary reference vector: 1.0 for present tags, 0.0 otherwise.
    pub fn to_vector(&self) -> TagVector {
        let mut values = [0.0; NUM_TAGS];
        for i in self.indices() {
            values[i] = 1.0;
        }
        TagVector(values)
    }
}

impl fmt::Display for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in self.indices() {
            write!(f, "{}", TAG_LETTERS[i])?;
        }
        Ok(())
    }
}

/// Seven values in [`TAG_LETTERS`] order: binary for references, per-tag
/// scores or probabilities for predictions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TagVector(pub [f64; NUM_TAGS]);

impl TagVector {
    pub fn get(&self, letter: char) -> Option<f64> {
        tag_index(letter).map(|i| self.0[i])
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..NUM_TAGS {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl std::ops::Index<usize> for TagVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}
