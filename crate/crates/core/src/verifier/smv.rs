use serde::{Deserialize, Serialize};

use super::VerifierError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropertyKind {
    #[serde(rename = "LTLSPEC")]
    Ltl,
    #[serde(rename = "INVARSPEC")]
    Invar,
    #[serde(rename = "CTLSPEC")]
    Ctl,
}

impl PropertyKind {
    pub fn keyword(self) -> &'static str {
        match self {
            PropertyKind::Ltl => "LTLSPEC",
            PropertyKind::Invar => "INVARSPEC",
            PropertyKind::Ctl => "CTLSPEC",
        }
    }

    fn from_keyword(word: &str) -> Option<Self> {
        match word {
            "LTLSPEC" => Some(PropertyKind::Ltl),
            "INVARSPEC" => Some(PropertyKind::Invar),
            "SPEC" | "CTLSPEC" => Some(PropertyKind::Ctl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmvProperty {
    pub kind: PropertyKind,
    /// Expression as written, whitespace collapsed, without a trailing `;`.
    pub text: String,
    /// `-- ` comment directly above the property, naming the requirement it
    /// encodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_sentence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// 1-based line of the property keyword.
    pub line: usize,
}

impl SmvProperty {
    /// Single-line description used in fix prompts.
    pub fn describe(&self) -> String {
        match &self.source_sentence {
            Some(s) => format!("{} {}  -- {}", self.kind.keyword(), self.text, s),
            None => format!("{} {}", self.kind.keyword(), self.text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmvDocument {
    pub module_text: String,
    pub properties: Vec<SmvProperty>,
}

/// Section keywords that end a property continuing over several lines.
const SECTION_KEYWORDS: [&str; 17] = [
    "MODULE",
    "VAR",
    "IVAR",
    "FROZENVAR",
    "DEFINE",
    "ASSIGN",
    "INIT",
    "TRANS",
    "INVAR",
    "FAIRNESS",
    "JUSTICE",
    "COMPASSION",
    "CONSTANTS",
    "LTLSPEC",
    "INVARSPEC",
    "SPEC",
    "CTLSPEC",
];

fn strip_comment(line: &str) -> &str {
    match line.find("--") {
        Some(i) => &line[..i],
        None => line,
    }
}

fn first_word(line: &str) -> &str {
    line.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).next().unwrap_or("")
}

impl SmvDocument {
    /// Extracts every LTLSPEC, INVARSPEC and CTL property. At least one is
    /// required.
    pub fn parse(text: &str) -> Result<SmvDocument, VerifierError> {
        let lines: Vec<&str> = text.lines().collect();
        let mut properties = Vec::new();
        let mut i = 0;
        while i < lines.len() {
            let code = strip_comment(lines[i]).trim();
            let Some(kind) = PropertyKind::from_keyword(first_word(code)) else {
                i += 1;
                continue;
            };
            let start = i;
            let mut body = code[first_word(code).len()..].trim().to_string();
            i += 1;
            while i < lines.len() {
                let next = strip_comment(lines[i]).trim();
                if next.is_empty() && lines[i].trim().is_empty() || SECTION_KEYWORDS.contains(&first_word(next)) {
                    break;
                }
                if !next.is_empty() {
                    body.push(' ');
                    body.push_str(next);
                }
                i += 1;
            }
            let mut name = None;
            if let Some(rest) = body.strip_prefix("NAME") {
                if let Some((n, expr)) = rest.split_once(":=") {
                    name = Some(n.trim().to_string());
                    body = expr.trim().to_string();
                }
            }
            let text = collapse(body.trim_end_matches(';'));
            if text.is_empty() {
                return Err(VerifierError::InvalidModel(format!(
                    "{} on line {} has no expression",
                    kind.keyword(),
                    start + 1
                )));
            }
            properties.push(SmvProperty {
                kind,
                text,
                source_sentence: source_comment(&lines, start),
                name,
                line: start + 1,
            });
        }
        if properties.is_empty() {
            return Err(VerifierError::InvalidModel("model declares no LTLSPEC, INVARSPEC or CTLSPEC property".into()));
        }
        Ok(SmvDocument { module_text: text.to_string(), properties })
    }

    pub fn of_kind(&self, kind: PropertyKind) -> impl Iterator<Item = (usize, &SmvProperty)> {
        self.properties.iter().enumerate().filter(move |(_, p)| p.kind == kind)
    }
}

fn source_comment(lines: &[&str], at: usize) -> Option<String> {
    let mut parts = Vec::new();
    for line in lines[..at].iter().rev() {
        match line.trim().strip_prefix("--") {
            Some(c) => parts.push(c.trim().to_string()),
            None => break,
        }
    }
    parts.reverse();
    let s = parts.join(" ").trim().to_string();
    (!s.is_empty()).then_some(s)
}

pub(crate) fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = "MODULE main\nVAR\n  b : boolean;\nASSIGN\n  init(b) := TRUE;\n  next(b) := TRUE;\n-- the lamp is always on\nINVARSPEC b;\n-- requests are eventually\n-- acknowledged\nLTLSPEC G (b ->\n   F b)\nSPEC AG b\nLTLSPEC NAME p1 := F b;\n";

    #[test]
    fn extracts_properties_with_sources() {
        let d = SmvDocument::parse(MODEL).unwrap();
        assert_eq!(d.properties.len(), 4);
        assert_eq!(d.properties[0].kind, PropertyKind::Invar);
        assert_eq!(d.properties[0].text, "b");
        assert_eq!(d.properties[0].source_sentence.as_deref(), Some("the lamp is always on"));
        assert_eq!(d.properties[1].text, "G (b -> F b)");
        assert_eq!(d.properties[1].source_sentence.as_deref(), Some("requests are eventually acknowledged"));
        assert_eq!(d.properties[2].kind, PropertyKind::Ctl);
        assert_eq!(d.properties[2].source_sentence, None);
        assert_eq!(d.properties[3].name.as_deref(), Some("p1"));
        assert_eq!(d.properties[3].text, "F b");
    }

    #[test]
    fn property_text_appears_in_module() {
        let d = SmvDocument::parse(MODEL).unwrap();
        let flat = collapse(&d.module_text);
        for p in &d.properties {
            assert!(flat.contains(&p.text), "{}", p.text);
        }
    }

    #[test]
    fn model_without_properties_is_rejected() {
        assert!(matches!(SmvDocument::parse("MODULE main\nVAR b : boolean;\n"), Err(VerifierError::InvalidModel(_))));
    }

    #[test]
    fn keyword_inside_comment_is_ignored() {
        let d = SmvDocument::parse("MODULE main\n-- INVARSPEC x\nVAR b : boolean;\nINVARSPEC b\n").unwrap();
        assert_eq!(d.properties.len(), 1);
        assert_eq!(d.properties[0].line, 4);
    }
}
