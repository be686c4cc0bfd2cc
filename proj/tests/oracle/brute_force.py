#!/usr/bin/env python3
"""Brute-force kill matrix for candidate assertions.

Runs every (mutant, input) pair in this process, then applies each candidate
assertion to every produced output. Shares no code with the runner or the
engine. Prints {task_id: [{"caught": [...], "uncaught": [...], "excluded":
[...]}, ...]} with one entry per candidate, in candidate order.
"""

import argparse
import copy
import glob
import inspect
import json
import math
import os
import signal
import sys


class Expired(Exception):
    pass


def _expire(signum, frame):
    raise Expired()


def with_deadline(seconds, fn):
    signal.signal(signal.SIGALRM, _expire)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        return fn()
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)


def plain_json(v):
    if v is None or isinstance(v, (bool, str)):
        return True
    if isinstance(v, int):
        return True
    if isinstance(v, float):
        return math.isfinite(v)
    if isinstance(v, list):
        return all(plain_json(x) for x in v)
    if isinstance(v, dict):
        return all(isinstance(k, str) and plain_json(x) for k, x in v.items())
    return False


def load_function(source, name):
    ns = {"__name__": "__main__"}
    exec(compile(source, "<impl>", "exec"), ns)
    return ns[name]


def run_mutant(source, name, args, timeout):
    """The mutant's output on args, or None when it produced none."""
    try:
        fn = load_function(source, name)
        out = with_deadline(timeout, lambda: fn(*copy.deepcopy(args)))
    except BaseException as e:  # noqa: BLE001
        if isinstance(e, KeyboardInterrupt):
            raise
        return None
    if not plain_json(out):
        return None
    return (json.loads(json.dumps(out)),)


def assertion_holds(task, test, candidate, output, timeout):
    source = (test.get("setup") + "\n" if test.get("setup") else "") + task["implementation"]
    try:
        ns = {"__name__": "__main__"}
        exec(compile(source, "<reference>", "exec"), ns)
        params = list(inspect.signature(ns[task["function_name"]]).parameters)
        for p, a in zip(params, copy.deepcopy(test["args"])):
            ns[p] = a
        ns["return_value"] = copy.deepcopy(output)
        code = compile(candidate, "<candidate>", "exec")
        with_deadline(timeout, lambda: exec(code, ns))
        return True
    except BaseException as e:  # noqa: BLE001
        if isinstance(e, KeyboardInterrupt):
            raise
        return False


def partition(task, candidate, outputs, timeout):
    caught, uncaught, excluded = [], [], []
    for mutant in task["mutants"]:
        mid = mutant["mutant_id"]
        produced = [(t, outputs[(mid, t["input_id"])][0]) for t in task["test_inputs"]
                    if outputs[(mid, t["input_id"])] is not None]
        if not produced:
            excluded.append(mid)
        elif any(not assertion_holds(task, t, candidate, out, timeout) for t, out in produced):
            caught.append(mid)
        else:
            uncaught.append(mid)
    return {"caught": sorted(caught), "uncaught": sorted(uncaught), "excluded": sorted(excluded)}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("corpus")
    ap.add_argument("candidates")
    ap.add_argument("--timeout-ms", type=int, default=1000)
    opts = ap.parse_args()
    timeout = opts.timeout_ms / 1000.0
    sys.setrecursionlimit(10000)

    with open(opts.candidates) as f:
        candidates = json.load(f)
    result = {}
    for path in sorted(glob.glob(os.path.join(opts.corpus, "*.json"))):
        if os.path.basename(path) == "manifest.json":
            continue
        with open(path) as f:
            task = json.load(f)
        outputs = {}
        for mutant in task["mutants"]:
            for t in task["test_inputs"]:
                source = (t.get("setup") + "\n" if t.get("setup") else "") + mutant["implementation"]
                outputs[(mutant["mutant_id"], t["input_id"])] = run_mutant(
                    source, task["function_name"], t["args"], timeout)
        result[task["task_id"]] = [partition(task, c, outputs, timeout) for c in candidates.get(task["task_id"], [])]
    json.dump(result, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
