#!/usr/bin/env python3
"""Minimal runner speaking the specharness line protocol.

Stands in for the real sandbox runner in tests: one JSON request per stdin
line, one verdict per stdout line. No isolation beyond a fresh namespace per
request and a SIGALRM watchdog.
"""

import builtins
import contextlib
import io
import json
import signal
import sys
import time

HANDSHAKE = '{"hello":"specharness-runner","proto":1}'


class _Timeout(BaseException):
    pass


def _on_alarm(signum, frame):
    raise _Timeout()


def _fresh_namespace():
    return {"__builtins__": builtins, "__name__": "__main__"}


def _verdict(request_id, status, started, value=None, error_type="", error_message=""):
    out = {
        "request_id": request_id,
        "status": status,
        "error_type": error_type,
        "error_message": error_message,
        "duration_ms": int((time.monotonic() - started) * 1000),
    }
    if value is not None:
        out["value"] = value
    return out


def _round_trips(value):
    try:
        text = json.dumps(value, allow_nan=False)
    except (TypeError, ValueError):
        return False
    return json.loads(text) == value and _same_shape(json.loads(text), value)


def _same_shape(a, b):
    # json.loads(json.dumps((1, 2))) == [1, 2] but a tuple is not a list.
    if type(a) is not type(b):
        if isinstance(b, bool) or isinstance(a, bool):
            return False
        if not (isinstance(a, (int, float)) and isinstance(b, (int, float))):
            return False
    if isinstance(b, list):
        return all(_same_shape(x, y) for x, y in zip(a, b))
    if isinstance(b, dict):
        return all(_same_shape(a[k], b[k]) for k in b)
    return True


def _run(code, ns, filename):
    compiled = compile(code, filename, "exec")
    exec(compiled, ns)


def handle(req):
    started = time.monotonic()
    rid = req.get("request_id", "")
    kind = req.get("kind")
    timeout_ms = int(req.get("timeout_ms", 1000))
    ns = _fresh_namespace()
    signal.setitimer(signal.ITIMER_REAL, timeout_ms / 1000.0)
    try:
        with contextlib.redirect_stdout(io.StringIO()):
            if req.get("function_source"):
                _run(req["function_source"], ns, "<function>")
            if kind == "run_function":
                result = ns[req["function_name"]](*req.get("args", []))
            elif kind == "eval_assertion":
                ns.update(req.get("args") or {})
                ns["return_value"] = req.get("bound_output")
                _run(req["assertion_source"], ns, "<assertion>")
                result = None
            else:
                raise ValueError("unknown kind %r" % (kind,))
    except _Timeout:
        return _verdict(rid, "timeout", started, error_type="timeout",
                        error_message="exceeded %d ms" % timeout_ms)
    except AssertionError as e:
        return _verdict(rid, "assert_fail", started, error_type="AssertionError", error_message=str(e))
    except SyntaxError as e:
        return _verdict(rid, "syntax_error", started, error_type=type(e).__name__, error_message=str(e))
    except BaseException as e:  # noqa: B902 - every failure becomes a verdict
        return _verdict(rid, "runtime_error", started, error_type=type(e).__name__, error_message=str(e))
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)

    if kind == "run_function":
        if not _round_trips(result):
            return _verdict(rid, "unserializable_output", started, error_type=type(result).__name__,
                            error_message="return value does not round-trip through JSON")
        out = _verdict(rid, "ok", started)
        out["value"] = result
        return out
    return _verdict(rid, "ok", started)


def main():
    sys.setrecursionlimit(10000)
    signal.signal(signal.SIGALRM, _on_alarm)
    out = sys.stdout
    out.write(HANDSHAKE + "\n")
    out.flush()
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise ValueError("request is not an object")
        except ValueError as e:
            verdict = _verdict("", "runtime_error", time.monotonic(), error_type="protocol_error",
                               error_message=str(e))
        else:
            verdict = handle(req)
        out.write(json.dumps(verdict) + "\n")
        out.flush()


if __name__ == "__main__":
    main()
