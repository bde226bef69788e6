#!/usr/bin/env python3
"""Convert EMBER-2018 raw feature JSONL into evade sample records.

Usage: ember_to_jsonl.py train_features_*.jsonl -o records.jsonl [--keep-unlabelled]
"""

import argparse
import json
import sys

LABELS = {1: "malicious", 0: "benign"}


def convert(raw):
    general = raw.get("general", {})
    header = raw.get("header", {})
    strings = raw.get("strings", {})
    section = raw.get("section", {})
    imports = raw.get("imports", {}) or {}
    functions = sorted({f"{lib.lower()}:{fn}" for lib, fns in imports.items() for fn in fns if fn})
    record = {
        "sample_id": raw["sha256"],
        "strings_entropy": strings.get("entropy"),
        "num_strings": strings.get("numstrings"),
        "file_size": general.get("size"),
        "num_exports": general.get("exports"),
        "num_imports": general.get("imports"),
        "timestamp": header.get("coff", {}).get("timestamp"),
        "size_of_code": header.get("optional", {}).get("sizeof_code"),
        "num_sections": len(section.get("sections", [])) if "sections" in section else None,
        "has_debug": bool(general["has_debug"]) if "has_debug" in general else None,
        "has_signature": bool(general["has_signature"]) if "has_signature" in general else None,
        "entry_section": section.get("entry") or None,
        "imported_libraries": sorted({lib.lower() for lib in imports}),
        "imported_functions": functions,
    }
    label = LABELS.get(raw.get("label"))
    if label:
        record["label"] = label
    return {k: v for k, v in record.items() if v is not None}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("inputs", nargs="+")
    parser.add_argument("-o", "--output", required=True)
    parser.add_argument("--keep-unlabelled", action="store_true")
    args = parser.parse_args()
    written = skipped = 0
    with open(args.output, "w") as out:
        for path in args.inputs:
            with open(path) as f:
                for line in f:
                    if not line.strip():
                        continue
                    record = convert(json.loads(line))
                    if "label" not in record and not args.keep_unlabelled:
                        skipped += 1
                        continue
                    out.write(json.dumps(record, sort_keys=True) + "\n")
                    written += 1
    print(f"wrote {written} records, skipped {skipped} unlabelled", file=sys.stderr)


if __name__ == "__main__":
    main()
