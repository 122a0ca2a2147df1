//! LLM-judge protocol: prompt construction and reply parsing. Sending the
//! prompt is the caller's job.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::EvalRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeParseError {
    #[error("judge reply has no `pairs: N, correct: M` answer")]
    Unparseable,
    #[error("judge reply claims {correct} correct out of {found} pairs")]
    CorrectExceedsFound { found: u64, correct: u64 },
}

/// The evaluation instruction, followed by a request for a machine-readable
/// answer line.
pub fn judge_prompt(record: &EvalRecord) -> String {
    format!(
        "source sentence: <{}>, target sentence: <{}>, generate sentence: <{}>. \
         Please find the ambiguous word pairs in the source language sentence and the target language sentence, \
         and count the number of ambiguous word pairs. \
         Refer to the above word pairs to further count the accuracy of disambiguation in the generated sentences.\n\
         {}",
        record.source,
        record.reference,
        record.hypothesis,
        ANSWER_FORMAT_REQUEST
    )
}

pub const ANSWER_FORMAT_REQUEST: &str =
    "End your answer with one line of the form `pairs: <number>, correct: <number>`, where pairs is the number of ambiguous word pairs and correct is how many of them the generated sentence disambiguates correctly.";

/// Follow-up sent once when the first reply cannot be parsed.
pub const REFORMAT_REQUEST: &str =
    "Reply with only one line of the form `pairs: <number>, correct: <number>`.";

fn re(pattern: &'static str, cell: &'static OnceLock<Regex>) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("valid regex"))
}

/// Extracts `(found, correct)` from a judge reply. The last occurrence of
/// each field wins.
pub fn parse_judge_reply(reply: &str) -> Result<(u64, u64), JudgeParseError> {
    static PAIRS: OnceLock<Regex> = OnceLock::new();
    static CORRECT: OnceLock<Regex> = OnceLock::new();
    let last = |r: &Regex| {
        r.captures_iter(reply)
            .last()
            .and_then(|c| c[1].parse::<u64>().ok())
    };
    let found = last(re(r"(?i)\bpairs?\s*[:=]\s*(\d+)", &PAIRS));
    let correct = last(re(r"(?i)\bcorrect(?:ly)?\s*[:=]\s*(\d+)", &CORRECT));
    match (found, correct) {
        (Some(found), Some(correct)) if correct <= found => Ok((found, correct)),
        (Some(found), Some(correct)) => {
            Err(JudgeParseError::CorrectExceedsFound { found, correct })
        }
        _ => Err(JudgeParseError::Unparseable),
    }
}
