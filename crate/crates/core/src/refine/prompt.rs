use std::fmt;

use super::RefineError;
use crate::flatten::FlatRecord;

/// System instructions sent with every batch.
pub const REFINEMENT_INSTRUCTIONS: &str = "\
You are a forensic artifact refinement engine. Your task is to analyze each input row from a CSV file extracted from a mobile application database. Each row contains metadata and column-value pairs. Identify valid forensic artifacts, refine them, assign confidence scores, and output each artifact individually in the required format.
Each row contains:
Database Name (DB), Table Name (TN), File Path (FP), Row Line Number (LID), Unique Identifier (UID), One or more column-value pairs
Your task is to:
1) Use column names and metadata to determine the context of each value.
2) Extract only valid forensic artifacts of the following types:
     Email
     Phone Number
     Human Name (real human names)
     Username
     App Name (convert package names to recognizable names)
     Timestamp (convert to human-readable format)
     Search Keyword (from queries and titles)
     Message (user-generated text like SMS or chat)
     MAC Address
     Longitude
     Latitude
     Address (only identifiable physical locations)
3) For each artifact:
     Refine the value by correcting inconsistencies, removing obfuscations (e.g., encoded characters), and converting to a human-readable forensic format.
     Assign a confidence score between 1 (low certainty) and 10 (high certainty).
     Only retain artifacts with a confidence score of 5 or higher.
4) Output Structure (F):
    For every valid artifact identified, output a structured entry including:
     Entity Type (Exact label from the list below)
     Refined Value (The cleaned, normalized, human-readable artifact)
     Confidence Score (An integer from 1 to 10)
     Each extracted artifact must be listed separately, even if multiple artifacts are extracted from the same input row.
     In Output Use the exact entity type labels listed below for all output entries:
     App Name, Username, Human Name, Phone Number, Email, Search keyword, Message, MAC Address, Longitude, Latitude, Address, Timestamp.
5) Important rules:
     Do not include irrelevant system-level fields or Android internal configuration metadata
     Only use values that can be reliably interpreted based on column names and context
     Do not infer or invent artifact types not listed above
     If a value is partially recovered or decoded, include it only if confidence \u{2265} 5
     Each artifact must be written individually, not grouped or merged";

/// Wire contract appended to the instructions.
pub const RESPONSE_FORMAT_DIRECTIVE: &str = "\
Response format: answer with JSON lines only, one artifact per line and nothing else:
{\"uid\": \"<UID of the source row>\", \"entity_type\": \"<exact label>\", \"refined_value\": \"<refined value>\", \"confidence\": <integer 1-10>}
Copy the UID exactly as given. Do not wrap the output in code fences.";

/// A built prompt: instructions (system role) and the serialized batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub instructions: String,
    pub records: String,
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n\n{}", self.instructions, self.records)
    }
}

/// `UID | DB | TN | FP | LID | pairs-JSON`
pub fn record_line(record: &FlatRecord) -> String {
    format!(
        "{} | {} | {} | {} | {} | {}",
        record.uid,
        record.database,
        record.table,
        record.path,
        record.lid,
        record.pairs.to_json()
    )
}

pub fn build_prompt(batch: &[FlatRecord]) -> Result<Prompt, RefineError> {
    if batch.is_empty() {
        return Err(RefineError::EmptyBatch);
    }
    let instructions = format!("{REFINEMENT_INSTRUCTIONS}\n\n{RESPONSE_FORMAT_DIRECTIVE}");
    let mut records = String::from("Rows (UID | DB | TN | FP | LID | column-value pairs):\n");
    for r in batch {
        records.push_str(&record_line(r));
        records.push('\n');
    }
    Ok(Prompt { instructions, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatten::Pairs;

    fn userstore() -> FlatRecord {
        FlatRecord {
            database: "core.db".into(),
            table: "UserStore".into(),
            path: "/data/data/com.snapchat.android/databases/".into(),
            uid: "9f97eac5_UserStore_114".into(),
            lid: 114,
            pairs: Pairs(vec![(
                "realval".into(),
                "\\x19heisenbergercarro@gmail.com--\\x00".into(),
            )]),
        }
    }

    #[test]
    fn single_record_prompt_carries_threshold_rule() {
        let p = build_prompt(&[userstore()]).unwrap().to_string();
        assert!(p.contains("confidence score of 5 or higher"));
        assert!(p.contains("\"entity_type\""));
    }

    #[test]
    fn one_data_line_per_record() {
        let batch: Vec<_> = (0..7).map(|_| userstore()).collect();
        let p = build_prompt(&batch).unwrap();
        let data_lines = p.records.lines().filter(|l| l.contains(" | core.db | ")).count();
        assert_eq!(data_lines, 7);
    }

    #[test]
    fn serialized_line_contains_uid() {
        let p = build_prompt(&[userstore()]).unwrap().to_string();
        let line = p.lines().find(|l| l.contains("9f97eac5_UserStore_114")).unwrap();
        assert_eq!(
            line,
            "9f97eac5_UserStore_114 | core.db | UserStore | /data/data/com.snapchat.android/databases/ | 114 | {\"realval\":\"\\\\x19heisenbergercarro@gmail.com--\\\\x00\"}"
        );
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(matches!(build_prompt(&[]), Err(RefineError::EmptyBatch)));
    }
}
