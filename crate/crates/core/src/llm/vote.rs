use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vote {
    Yes,
    No,
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Yes,
    No,
}

impl BinaryLabel {
    pub fn is_yes(self) -> bool {
        self == BinaryLabel::Yes
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinaryLabel::Yes => "yes",
            BinaryLabel::No => "no",
        })
    }
}

/// Reads the first alphabetic token, case-insensitively.
pub fn parse_response(raw: &str) -> Vote {
    let token: String = raw
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    match token.as_str() {
        "yes" => Vote::Yes,
        "no" => Vote::No,
        _ => Vote::Abstain,
    }
}

/// Majority over non-abstain votes. Ties, including all-abstain, resolve to
/// `No` with the tie flag set.
pub fn majority_vote(votes: &[Vote]) -> (BinaryLabel, bool) {
    let yes = votes.iter().filter(|v| **v == Vote::Yes).count();
    let no = votes.iter().filter(|v| **v == Vote::No).count();
    match yes.cmp(&no) {
        std::cmp::Ordering::Greater => (BinaryLabel::Yes, false),
        std::cmp::Ordering::Less => (BinaryLabel::No, false),
        std::cmp::Ordering::Equal => (BinaryLabel::No, true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Vote::*;

    #[test]
    fn parse_examples() {
        assert_eq!(parse_response("Yes, this raises a privacy concern."), Yes);
        assert_eq!(parse_response("NO"), No);
        assert_eq!(parse_response("The review is about billing."), Abstain);
        assert_eq!(parse_response("  **yes**"), Yes);
        assert_eq!(parse_response("1. No."), No);
        assert_eq!(parse_response(""), Abstain);
        assert_eq!(parse_response("yesterday"), Abstain);
        assert_eq!(parse_response("n/a"), Abstain);
    }

    #[test]
    fn vote_examples() {
        assert_eq!(majority_vote(&[Yes, Yes, No, Yes, No]), (BinaryLabel::Yes, false));
        assert_eq!(majority_vote(&[No; 5]), (BinaryLabel::No, false));
        assert_eq!(majority_vote(&[Yes, No, Abstain, Abstain, Abstain]), (BinaryLabel::No, true));
        assert_eq!(majority_vote(&[Abstain; 5]), (BinaryLabel::No, true));
        assert_eq!(majority_vote(&[Yes]), (BinaryLabel::Yes, false));
        assert_eq!(majority_vote(&[Yes, Abstain, Abstain]), (BinaryLabel::Yes, false));
    }
}
