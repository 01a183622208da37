//! Fenced-code-block extraction from raw model output.

use serde::{Deserialize, Serialize};

/// Source text pulled out of a model response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub source: String,
    pub language: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractionFailure {
    NoFencedBlock,
    EmptyBlock,
}

/// Returns the last closed fenced block in `text`.
///
/// A fence is a line starting with three or more backticks; the block closes
/// at the next line consisting of at least as many backticks. Unclosed
/// trailing blocks (truncated output) are ignored.
pub fn extract_program(text: &str) -> Result<CandidateProgram, ExtractionFailure> {
    let mut last: Option<CandidateProgram> = None;
    let mut open: Option<(usize, Option<String>, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        let ticks = trimmed.chars().take_while(|&c| c == '`').count();
        match open.take() {
            None => {
                if ticks >= 3 {
                    let info = trimmed[ticks..].trim();
                    let lang = (!info.is_empty())
                        .then(|| info.split_whitespace().next().unwrap_or(info).to_string());
                    open = Some((ticks, lang, Vec::new()));
                }
            }
            Some((width, lang, mut body)) => {
                if ticks >= width && trimmed[ticks..].trim().is_empty() {
                    last = Some(CandidateProgram {
                        source: body.join("\n"),
                        language: lang,
                    });
                } else {
                    body.push(line);
                    open = Some((width, lang, body));
                }
            }
        }
    }
    match last {
        None => Err(ExtractionFailure::NoFencedBlock),
        Some(p) if p.source.trim().is_empty() => Err(ExtractionFailure::EmptyBlock),
        Some(mut p) => {
            p.source.push('\n');
            Ok(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block() {
        let text = "Here you go:\n```python\nprint(1)\n```\nDone.";
        let p = extract_program(text).unwrap();
        assert_eq!(p.source, "print(1)\n");
        assert_eq!(p.language.as_deref(), Some("python"));
    }

    #[test]
    fn no_block() {
        assert_eq!(
            extract_program("I think we should use scipy."),
            Err(ExtractionFailure::NoFencedBlock)
        );
    }

    #[test]
    fn last_of_two() {
        let text = "```python\nold()\n```\nBetter:\n```python\nnew()\n```\n";
        assert_eq!(extract_program(text).unwrap().source, "new()\n");
    }

    #[test]
    fn unclosed_trailing_block_ignored() {
        let text = "```python\nfull()\n```\n```python\ntrunc";
        assert_eq!(extract_program(text).unwrap().source, "full()\n");
        assert_eq!(
            extract_program("```python\nno end"),
            Err(ExtractionFailure::NoFencedBlock)
        );
    }

    #[test]
    fn empty_block() {
        assert_eq!(
            extract_program("```\n\n```"),
            Err(ExtractionFailure::EmptyBlock)
        );
    }

    #[test]
    fn nested_shorter_fence_stays_inside() {
        let text = "````markdown\n```python\nx = 1\n```\n````";
        assert_eq!(
            extract_program(text).unwrap().source,
            "```python\nx = 1\n```\n"
        );
    }
}
