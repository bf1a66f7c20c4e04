#!/usr/bin/env python3
"""Run the acceptance suite and print one PASS/FAIL line per criterion.

Usage: python3 scripts/run_acceptance.py [extra pytest args]

The suite runs the desk-scale preset simulations and takes several minutes.
"""

import re
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
LINE = re.compile(r"^criterion (\d+): (PASS|FAIL)")


def main(argv):
    cmd = [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(ROOT / "tests" / "test_acceptance.py"), *argv]
    proc = subprocess.run(cmd, cwd=ROOT, capture_output=True, text=True)
    lines = {}
    for raw in proc.stdout.splitlines():
        m = LINE.match(raw.strip())
        if m:
            lines[int(m.group(1))] = raw.strip()
    for n in sorted(lines):
        print(lines[n])
    missing = sorted(set(range(1, 11)) - set(lines))
    if missing:
        print(f"no result for criteria {missing}; pytest output follows", file=sys.stderr)
        print(proc.stdout[-4000:], file=sys.stderr)
    print(proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else "")
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
