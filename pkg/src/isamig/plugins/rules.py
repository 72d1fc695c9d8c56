"""Out-of-process peer implementing the rule-table reasoner, the heuristic
classifier and the placeholder grader.

Run as ``python3 -m isamig.plugins.rules [--classes A,B] [--seed N]``.
Reads one JSON request per line on stdin, writes one reply per line.
"""

from __future__ import annotations

import argparse
import json
import sys

from isamig.agent.reasoners import RuleReasoner, default_rules
from isamig.agent.tools import AgentContext
from isamig.oracle import DefectClass
from isamig.taxonomy.classify import classify_heuristic
from isamig.taxonomy.grade import HeuristicGrader
from isamig.taxonomy.model import CommitRecord


def handle(msg: dict, reasoner: RuleReasoner, grader: HeuristicGrader) -> dict:
    kind = msg.get("kind")
    if kind == "context":
        note, call = reasoner.next_action(AgentContext.from_wire(msg["context"]))
        return {"note": note, **call.to_wire()}
    if kind == "classify":
        return {"labels": [int(classify_heuristic(CommitRecord.from_dict(c))) for c in msg["commits"]]}
    if kind == "grade":
        return {"grade": grader.grade(CommitRecord.from_dict(msg["commit"]))}
    return {"error": f"unknown kind {kind!r}"}


def serve(stdin, stdout, reasoner: RuleReasoner, grader: HeuristicGrader) -> None:
    for line in stdin:
        if not line.strip():
            continue
        try:
            reply = handle(json.loads(line), reasoner, grader)
        except Exception as exc:  # report, keep serving
            reply = {"error": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(reply, sort_keys=True, separators=(",", ":")) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="isamig-rules-peer")
    ap.add_argument("--classes", help="comma-separated defect classes for the rule table")
    ap.add_argument("--seed", type=int, default=0, help="grader seed")
    args = ap.parse_args(argv)
    classes = [DefectClass(c) for c in args.classes.split(",")] if args.classes else None
    serve(sys.stdin, sys.stdout, RuleReasoner(default_rules(classes)), HeuristicGrader(args.seed))
    return 0


if __name__ == "__main__":
    sys.exit(main())
