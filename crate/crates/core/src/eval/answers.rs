const MARKER: &str = "the answer is";

/// Pulls the `* `-marked answers following the last "the answer is".
///
/// `"... Therefore, the answer is * playwright, and * poet."` yields
/// `["playwright", "poet"]`. Only the line holding the marker is read.
pub fn extract_answers(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    // Lower-casing can shift byte offsets for some scripts; fall back to an
    // exact search when lengths differ.
    let start = if lower.len() == text.len() {
        lower.rfind(MARKER)
    } else {
        text.rfind(MARKER)
    };
    let Some(start) = start else {
        return Vec::new();
    };
    let tail = &text[start + MARKER.len()..];
    let tail = tail.split('\n').next().unwrap_or("");

    tail.split('*')
        .skip(1)
        .filter_map(|item| {
            let mut s = item.trim();
            loop {
                let before = s;
                s = s.trim_end_matches(|c: char| c == '.' || c == ',' || c.is_whitespace());
                if let Some(stripped) = s.strip_suffix(" and") {
                    s = stripped;
                } else if s == "and" {
                    s = "";
                }
                if s == before {
                    break;
                }
            }
            (!s.is_empty()).then(|| s.to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_answer() {
        let text = "Grand Bahama is in Bahamas. Therefore, the answer is * Bahamas.";
        assert_eq!(extract_answers(text), vec!["Bahamas"]);
    }

    #[test]
    fn two_answers() {
        let text = "William Shakespeare was a playwright, and poet. Therefore, the answer is * playwright, and * poet.";
        assert_eq!(extract_answers(text), vec!["playwright", "poet"]);
    }

    #[test]
    fn no_marker() {
        assert!(extract_answers("no marker here").is_empty());
        assert!(extract_answers("the answer is unknown").is_empty());
    }

    #[test]
    fn last_marker_wins_and_whitespace_tokens() {
        let text = "the answer is * X . Actually , The Answer Is * Ice Hockey .";
        assert_eq!(extract_answers(text), vec!["Ice Hockey"]);
    }

    #[test]
    fn and_without_comma() {
        assert_eq!(extract_answers("The answer is * a and * b ."), vec!["a", "b"]);
    }

    #[test]
    fn only_marker_line_is_read() {
        let text = "So the answer is * Nassau.\n* not an answer";
        assert_eq!(extract_answers(text), vec!["Nassau"]);
    }
}
