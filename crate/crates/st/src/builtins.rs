//! Standard library names known to the scope checker.

pub const ELEMENTARY_TYPES: &[&str] = &[
    "BOOL",
    "BYTE",
    "WORD",
    "DWORD",
    "LWORD",
    "SINT",
    "INT",
    "DINT",
    "LINT",
    "USINT",
    "UINT",
    "UDINT",
    "ULINT",
    "REAL",
    "LREAL",
    "TIME",
    "LTIME",
    "DATE",
    "LDATE",
    "TIME_OF_DAY",
    "TOD",
    "LTOD",
    "DATE_AND_TIME",
    "DT",
    "LDT",
    "STRING",
    "WSTRING",
    "CHAR",
    "WCHAR",
    "VOID",
];

pub fn is_elementary_type(upper: &str) -> bool {
    ELEMENTARY_TYPES.contains(&upper)
}

/// Standard function blocks with their formal parameters.
const FUNCTION_BLOCKS: &[(&str, &[&str])] = &[
    ("TON", &["IN", "PT", "Q", "ET"]),
    ("TOF", &["IN", "PT", "Q", "ET"]),
    ("TP", &["IN", "PT", "Q", "ET"]),
    ("TONR", &["IN", "PT", "R", "Q", "ET"]),
    ("TON_TIME", &["IN", "PT", "Q", "ET"]),
    ("TOF_TIME", &["IN", "PT", "Q", "ET"]),
    ("TP_TIME", &["IN", "PT", "Q", "ET"]),
    ("IEC_TIMER", &["IN", "PT", "Q", "ET"]),
    ("CTU", &["CU", "R", "PV", "Q", "CV"]),
    ("CTD", &["CD", "LD", "PV", "Q", "CV"]),
    ("CTUD", &["CU", "CD", "R", "LD", "PV", "QU", "QD", "CV"]),
    ("CTU_INT", &["CU", "R", "PV", "Q", "CV"]),
    ("CTD_INT", &["CD", "LD", "PV", "Q", "CV"]),
    ("CTUD_INT", &["CU", "CD", "R", "LD", "PV", "QU", "QD", "CV"]),
    ("IEC_COUNTER", &["CU", "CD", "R", "LD", "PV", "Q", "QU", "QD", "CV"]),
    ("R_TRIG", &["CLK", "Q"]),
    ("F_TRIG", &["CLK", "Q"]),
    ("SR", &["S1", "R", "Q1"]),
    ("RS", &["S", "R1", "Q1"]),
];

pub fn function_block_params(upper: &str) -> Option<&'static [&'static str]> {
    FUNCTION_BLOCKS.iter().find(|(n, _)| *n == upper).map(|(_, p)| *p)
}

pub fn function_block_names() -> impl Iterator<Item = &'static str> {
    FUNCTION_BLOCKS.iter().map(|(n, _)| *n)
}

/// `(min, max)` argument counts; `None` max means variadic.
const FUNCTIONS: &[(&str, usize, Option<usize>)] = &[
    ("ABS", 1, Some(1)),
    ("SQRT", 1, Some(1)),
    ("LN", 1, Some(1)),
    ("LOG", 1, Some(1)),
    ("EXP", 1, Some(1)),
    ("SIN", 1, Some(1)),
    ("COS", 1, Some(1)),
    ("TAN", 1, Some(1)),
    ("ASIN", 1, Some(1)),
    ("ACOS", 1, Some(1)),
    ("ATAN", 1, Some(1)),
    ("ATAN2", 2, Some(2)),
    ("EXPT", 2, Some(2)),
    ("ADD", 2, None),
    ("MUL", 2, None),
    ("SUB", 2, Some(2)),
    ("DIV", 2, Some(2)),
    ("MOVE", 1, Some(1)),
    ("SEL", 3, Some(3)),
    ("MAX", 2, None),
    ("MIN", 2, None),
    ("LIMIT", 3, Some(3)),
    ("MUX", 2, None),
    ("SHL", 2, Some(2)),
    ("SHR", 2, Some(2)),
    ("ROL", 2, Some(2)),
    ("ROR", 2, Some(2)),
    ("GT", 2, None),
    ("GE", 2, None),
    ("EQ", 2, None),
    ("LE", 2, None),
    ("LT", 2, None),
    ("NE", 2, Some(2)),
    ("LEN", 1, Some(1)),
    ("LEFT", 2, Some(2)),
    ("RIGHT", 2, Some(2)),
    ("MID", 3, Some(3)),
    ("CONCAT", 2, None),
    ("INSERT", 3, Some(3)),
    ("DELETE", 3, Some(3)),
    ("REPLACE", 4, Some(4)),
    ("FIND", 2, Some(2)),
    ("TRUNC", 1, Some(1)),
    ("ROUND", 1, Some(1)),
    ("CEIL", 1, Some(1)),
    ("FLOOR", 1, Some(1)),
    ("NORM_X", 3, Some(3)),
    ("SCALE_X", 3, Some(3)),
    ("SIZEOF", 1, Some(1)),
];

pub fn function_arity(upper: &str) -> Option<(usize, Option<usize>)> {
    if let Some((_, min, max)) = FUNCTIONS.iter().find(|(n, _, _)| *n == upper) {
        return Some((*min, *max));
    }
    if is_conversion(upper) {
        return Some((1, Some(1)));
    }
    None
}

pub fn function_names() -> impl Iterator<Item = &'static str> {
    FUNCTIONS.iter().map(|(n, _, _)| *n)
}

/// `INT_TO_REAL`, `TO_DINT`, `TRUNC_INT`, `BCD_TO_INT` and friends.
fn is_conversion(upper: &str) -> bool {
    let type_like = |s: &str| is_elementary_type(s) || matches!(s, "BCD" | "ANY");
    if let Some(target) = upper.strip_prefix("TO_") {
        return type_like(target);
    }
    if let Some(target) = upper.strip_prefix("TRUNC_") {
        return type_like(target);
    }
    if let Some((from, to)) = upper.split_once("_TO_") {
        return type_like(from) && type_like(to);
    }
    false
}
