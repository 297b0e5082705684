#!/usr/bin/env python3
"""Serve a synthetic landscape over the stdio evaluation protocol.

Usage: serve_synthetic.py LANDSCAPE_JSON [--seed N]

Loopback counterpart to the in-process synthetic evaluator: a run wired
through this script must reproduce the in-process rewards exactly (when the
landscape is noise-free).
"""

import argparse
import json
import sys

import numpy as np

from hiersearch.evaluators import PROTOCOL_VERSION, load_landscape, synthetic_evaluate
from hiersearch.space import Candidate


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("landscape", help="landscape JSON file")
    parser.add_argument("--seed", type=int, default=0, help="noise stream seed")
    args = parser.parse_args()

    landscape = load_landscape(args.landscape)
    rng = np.random.default_rng(args.seed)

    hello = sys.stdin.readline()
    if not hello:
        return 0
    try:
        msg = json.loads(hello)
        assert msg["hello"]["protocol"] == PROTOCOL_VERSION
    except (json.JSONDecodeError, KeyError, TypeError, AssertionError):
        print(json.dumps({"id": None, "error": "expected protocol handshake"}), flush=True)
        return 1
    print(json.dumps({"ready": {"protocol": PROTOCOL_VERSION}}), flush=True)

    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            cand = Candidate(
                macro_vector=tuple(req["macro"]),
                arch_index=req["arch_index"],
                micro_values=req["params"],
                iteration=0,
            )
            result = synthetic_evaluate(landscape, cand, rng)
        except Exception as exc:  # malformed request: report, keep serving
            req_id = req.get("id") if isinstance(req, dict) else None
            print(json.dumps({"id": req_id, "error": str(exc)}), flush=True)
            continue
        print(json.dumps({"id": req["id"], "reward": result.reward,
                          "metrics": dict(result.metrics)}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
