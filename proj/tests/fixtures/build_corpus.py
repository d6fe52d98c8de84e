#!/usr/bin/env python3
"""Regenerates tests/fixtures/corpus/*.json from tests/fixtures/apps/<id>/.

Each app directory holds meta.json, a vulnerable/ tree and a patched/ tree.
The record's patch is the unified diff between the two trees; its files are
every file of the vulnerable tree.
"""
import difflib
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent
APPS = ROOT / "apps"
OUT = ROOT / "corpus"


def tree(path):
    return sorted(p.relative_to(path).as_posix() for p in path.rglob("*") if p.is_file())


def main():
    OUT.mkdir(exist_ok=True)
    for app in sorted(p for p in APPS.iterdir() if p.is_dir()):
        meta = json.loads((app / "meta.json").read_text())
        vuln, fixed = app / "vulnerable", app / "patched"
        files = tree(vuln)
        patch = []
        for rel in sorted(set(files) | set(tree(fixed))):
            old = (vuln / rel).read_text() if (vuln / rel).exists() else ""
            new = (fixed / rel).read_text() if (fixed / rel).exists() else ""
            if old == new:
                continue
            patch.extend(difflib.unified_diff(old.splitlines(keepends=True), new.splitlines(keepends=True),
                                              fromfile="a/" + rel, tofile="b/" + rel, n=3))
        record = {
            "id": meta["id"],
            "cwe": meta["cwe"],
            "cvss": meta["cvss"],
            "description": meta["description"],
            "patch": "".join(patch),
            "files": [{"path": rel, "content": (vuln / rel).read_text()} for rel in files],
            "base_url": meta["base_url"],
            "entry_url": meta["entry_url"],
            "ground_truth_poc": meta.get("ground_truth_poc"),
        }
        if "semantic_sinks" in meta:
            record["semantic_sinks"] = meta["semantic_sinks"]
        (OUT / (meta["id"] + ".json")).write_text(json.dumps(record, indent=2) + "\n")


if __name__ == "__main__":
    main()
