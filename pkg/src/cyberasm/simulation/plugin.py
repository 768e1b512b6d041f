"""Subprocess entry point for the bundled simulator.

Reads a scenario JSON document on stdin and writes the KPI result on stdout.
The scenario's ``model`` field names the bundled feeder preset.
"""

from __future__ import annotations

import json
import sys

from .scenario import Scenario
from .sm import SUPPORTED_HANDLERS, FeederSM, SMError


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if "--handlers" in argv:
        print(json.dumps(sorted(SUPPORTED_HANDLERS)))
        return 0
    try:
        scenario = Scenario.from_dict(json.load(sys.stdin))
        sm = FeederSM.from_preset(scenario.model or "medium")
        result = sm.evaluate(scenario)
    except (SMError, KeyError, ValueError) as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 1
    json.dump(result.to_dict(), sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
