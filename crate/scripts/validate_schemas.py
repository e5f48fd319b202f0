#!/usr/bin/env python3
"""Validates run.json, metrics.json and manifest.json files against schemas/.

Usage: validate_schemas.py FILE...  (the schema is chosen by file name)
Without arguments, produces fresh artifacts with the debug binary and checks
those. Needs the `jsonschema` package.
"""
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

ROOT = pathlib.Path(__file__).resolve().parent.parent
SCHEMAS = {name: json.loads((ROOT / "schemas" / f"{name}.schema.json").read_text())
           for name in ("run", "metrics", "manifest")}


def schema_for(path):
    stem = pathlib.Path(path).stem
    if stem not in SCHEMAS:
        sys.exit(f"no schema for {path}")
    return SCHEMAS[stem]


def fresh_artifacts(tmp):
    exe = ROOT / "target" / "debug" / "stforge"
    fix = ROOT / "crates" / "core" / "tests" / "fixtures" / "replay" / "highbay"
    cfg = tmp / "config.json"
    cfg.write_text(json.dumps({
        "backend": {"kind": "replay", "cache": str(fix / "cache"), "model": "fixture-model"},
        "verifier": {"enabled": True, "kind": "scripted", "script": str(fix / "nuxmv")},
    }))
    run = lambda *a: subprocess.run([str(exe), "-q", *map(str, a)], check=True)
    run("run", "--spec", fix / "spec.txt", "--config", cfg, "--output", tmp / "run")
    (tmp / "specs").mkdir()
    (tmp / "specs" / "highbay.txt").write_text((fix / "spec.txt").read_text())
    run("batch", "--specs", tmp / "specs", "--config", cfg, "--output", tmp / "batch")
    run("dataset", "cull", "--corpus", ROOT / "corpus" / "mini" / "valid", "--out", tmp / "cull.json")
    run("dataset", "split", "--cull", tmp / "cull.json", "--out", tmp / "manifest.json")
    return sorted(tmp.rglob("run.json")) + [tmp / "batch" / "metrics.json", tmp / "manifest.json"]


def main():
    with tempfile.TemporaryDirectory() as d:
        files = sys.argv[1:] or fresh_artifacts(pathlib.Path(d))
        for f in files:
            jsonschema.validate(json.loads(pathlib.Path(f).read_text()), schema_for(f))
            print(f"ok {f}")


if __name__ == "__main__":
    main()
