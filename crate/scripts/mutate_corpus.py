#!/usr/bin/env python3
"""Regenerate corpus/mini/mutated/ and corpus/mini/mutations.json.

Each mutation edits exactly one line of a valid corpus file. `line` in the
manifest is the 1-based line of the edit in the original file. An END_*
line is only removed where a different closing keyword or a statement
follows it; removing an inner END_IF directly before an outer END_IF is
ambiguous and only detectable at the end of the enclosing unit.
"""
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent / "corpus" / "mini"

# (file, kind, exact stripped line to edit, occurrence, new text or None to delete)
MUTATIONS = [
    ("traffic_light", "deleted_semicolon", "phase := 0;", 1, "phase := 0"),
    ("conveyor", "misspelled_keyword", "ELSIF start THEN", 1, "ELSEIF start THEN"),
    ("tank_level", "unknown_type", "filling : BOOL := FALSE;", 1, "filling : BOOLEAN := FALSE;"),
    ("star_delta", "deleted_semicolon", "mainContactor := run;", 1, "mainContactor := run"),
    ("pump_alternation", "removed_end", "END_VAR", 1, None),
    ("batch_counter", "misspelled_keyword", "IF batchDone THEN", 1, "IF batchDone THN"),
    ("temperature_hysteresis", "unknown_type", "heater : BOOL;", 1, "heater : TUPLE OF (BOOL, BOOL);"),
    ("moving_average", "deleted_semicolon", "sum := 0.0;", 1, "sum := 0.0"),
    ("blinker", "misspelled_keyword", "END_VAR", 1, "END_VRA"),
    ("debounce", "unknown_type", "settle : TIME := T#20ms;", 1, "settle : TIMER := T#20ms;"),
    ("washing_machine", "removed_end", "END_IF;", 2, None),
    ("elevator", "removed_end", "END_IF;", 2, None),
    ("mixing_station", "unknown_type", "mixTimer : TON;", 1, "mixTimer : TIMER_ON;"),
    ("alarm_handler", "removed_end", "END_IF;", 2, None),
    ("ramp_generator", "misspelled_keyword", "END_IF;", 1, "ENDIF;"),
    ("running_hours", "deleted_semicolon", "hours := hours + 1;", 1, "hours := hours + 1"),
    ("bottle_filler", "misspelled_keyword", "WHILE cycle < 1 DO", 1, "WHILST cycle < 1 DO"),
    ("sorting_line", "unknown_type", "counts : ARRAY[0..2] OF DINT;", 1, "counts : ARRAY[0..2] OF DOUBLE;"),
    ("pneumatic_cylinder", "deleted_semicolon", "valve := extendCmd;", 1, "valve := extendCmd"),
    ("parking_counter", "unknown_type", "occupancy : CTUD;", 1, "occupancy : COUNTER_UD;"),
    ("stack_light", "misspelled_keyword", "END_FUNCTION", 1, "END_FUNCTON"),
    ("scaling", "deleted_semicolon", "RETURN;", 1, "RETURN"),
    ("repeat_search", "misspelled_keyword", "UNTIL found OR i >= 16", 1, "UNTL found OR i >= 16"),
    ("high_bay", "unknown_type", "componentHomeSlot : ARRAY[1..2] OF INT := [734, 405];", 1,
     "componentHomeSlot : TUPLE OF (INT, INT);"),
    ("while_drain", "deleted_semicolon", "budget := budget - 1;", 1, "budget := budget - 1"),
]


def main():
    out_dir = ROOT / "mutated"
    out_dir.mkdir(exist_ok=True)
    manifest = []
    for name, kind, target, occurrence, new in MUTATIONS:
        lines = (ROOT / "valid" / f"{name}.st").read_text().split("\n")
        hits = [i for i, l in enumerate(lines) if l.strip() == target]
        if len(hits) < occurrence:
            raise SystemExit(f"{name}: line {target!r} occurrence {occurrence} not found")
        idx = hits[occurrence - 1]
        original = lines[idx]
        if new is None:
            del lines[idx]
            mutated = None
        else:
            indent = original[: len(original) - len(original.lstrip())]
            lines[idx] = indent + new
            mutated = lines[idx]
        (out_dir / f"{name}.st").write_text("\n".join(lines))
        manifest.append({"file": f"{name}.st", "kind": kind, "line": idx + 1, "original": original, "mutated": mutated})
    (ROOT / "mutations.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
