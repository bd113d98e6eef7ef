//! Presentation of token sequences as surface text.
//!
//! Rendering is cosmetic. Decoding always works on tokens; re-tokenizing a
//! rendered string recovers the tokens only for punctuation-safe output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EOS, URL, USER};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderOptions {
    /// Uppercase the first letter of each sentence.
    pub capitalize: bool,
    /// Substitutes for `<user>`, used in rotation. Empty means mock names.
    pub users: Vec<String>,
    /// Substitutes for `<url>`, used in rotation. Empty means mock links.
    pub urls: Vec<String>,
    pub mock_seed: u64,
}

const ATTACH_LEFT: [&str; 6] = [".", ",", "!", "?", ";", ":"];

fn ends_sentence(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?")
}

fn capitalize_first(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() => c.to_uppercase().chain(chars).collect(),
        _ => word.to_owned(),
    }
}

/// Joins tokens into text: no space before `.,!?;:`, `<eos>` becomes a line
/// break, and `<user>`/`<url>` are replaced by substitutes or mocks.
pub fn render<T: AsRef<str>>(tokens: &[T], opts: &RenderOptions) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.mock_seed);
    let (mut users, mut urls) = (0usize, 0usize);
    let mut out = String::new();
    let mut line_start = true;
    let mut sentence_start = true;
    for tok in tokens {
        let tok = tok.as_ref();
        if tok == EOS {
            out.push('\n');
            line_start = true;
            sentence_start = true;
            continue;
        }
        let surface = match tok {
            USER if !opts.users.is_empty() => {
                users += 1;
                opts.users[(users - 1) % opts.users.len()].clone()
            }
            USER => format!("@user{}", rng.random_range(100..1000)),
            URL if !opts.urls.is_empty() => {
                urls += 1;
                opts.urls[(urls - 1) % opts.urls.len()].clone()
            }
            URL => format!("http://t.co/{:06x}", rng.random_range(0..0x100_0000)),
            _ if opts.capitalize && sentence_start => capitalize_first(tok),
            _ => tok.to_owned(),
        };
        if !line_start && !ATTACH_LEFT.contains(&tok) {
            out.push(' ');
        }
        out.push_str(&surface);
        line_start = false;
        if ends_sentence(tok) {
            sentence_start = true;
        } else if !ATTACH_LEFT.contains(&tok) {
            sentence_start = false;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_attaches_left() {
        let toks = ["i", "am", "attaching", "an", "nda", "."];
        assert_eq!(render(&toks, &RenderOptions::default()), "i am attaching an nda.");
        assert_eq!(
            render(&["wait", ",", "what", "?", "!"], &RenderOptions::default()),
            "wait, what?!"
        );
    }

    #[test]
    fn mock_users_from_list() {
        let opts = RenderOptions {
            users: vec!["@user421".into()],
            ..Default::default()
        };
        assert_eq!(render(&[USER, "hi"], &opts), "@user421 hi");
        assert_eq!(render(&[USER, "hi", USER], &opts), "@user421 hi @user421");
    }

    #[test]
    fn generated_mocks_are_deterministic() {
        let a = render(&[USER, "see", URL], &RenderOptions::default());
        let b = render(&[USER, "see", URL], &RenderOptions::default());
        assert_eq!(a, b);
        assert!(a.starts_with("@user"));
        assert!(a.contains("http://t.co/"));
    }

    #[test]
    fn capitalization() {
        let opts = RenderOptions {
            capitalize: true,
            ..Default::default()
        };
        let toks = ["i", "am", "here", ".", "so", "are", "you", EOS, "bye"];
        assert_eq!(render(&toks, &opts), "I am here. So are you\nBye");
    }

    #[test]
    fn eos_breaks_lines() {
        assert_eq!(render(&["a", EOS, "b", "."], &RenderOptions::default()), "a\nb.");
    }
}
