"""Thin command-line client for the run service.

Subcommands mirror the HTTP endpoints: ``run``, ``study-dx``, ``study-eps``
and ``steady-check`` post the configuration file to the service and write
the returned CSV payloads into the output directory.  Without ``--server``
the service runs in-process; ``serve`` starts a standalone instance.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 tolerance failure in steady-check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_TOLERANCE = 4

_ENDPOINTS = {
    "run": "/run",
    "study-dx": "/study/dx",
    "study-eps": "/study/eps",
    "steady-check": "/steady-check",
}


def _make_client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server.rstrip("/"), timeout=None)
    # in-process transport against the bundled application
    from fastapi.testclient import TestClient

    from kinwb.service import app

    return TestClient(app)


def _post(client, path: str, config_text: str):
    return client.post(path, json={"config": config_text})


def _write_files(out_dir: str, files: dict):
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            fh.write(content)


def _fail_from_response(response) -> int:
    try:
        detail = response.json().get("detail", {})
    except ValueError:
        detail = {}
    kind = detail.get("kind", "")
    message = detail.get("message", response.text)
    print(f"error: {message}", file=sys.stderr)
    if kind == "config_error":
        return EXIT_CONFIG
    return EXIT_SOLVER


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kinwb",
        description="well-balanced asymptotic-preserving kinetic transport",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _ENDPOINTS:
        cmd = sub.add_parser(name)
        cmd.add_argument("-c", "--config", required=True,
                         help="path to the flat key=value configuration")
        cmd.add_argument("-o", "--out", default=None,
                         help="output directory (default: config output_dir)")
        cmd.add_argument("--server", default=None,
                         help="base URL of a running service "
                              "(default: in-process)")
        cmd.add_argument("--summary", action="store_true",
                         help="print the JSON summary to stdout")
    serve = sub.add_parser("serve")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from kinwb.service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK

    try:
        with open(args.config, "r") as fh:
            config_text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    client = _make_client(args.server)
    try:
        response = _post(client, _ENDPOINTS[args.command], config_text)
        if response.status_code != 200:
            return _fail_from_response(response)
        payload = response.json()
    finally:
        client.close()

    out_dir = args.out
    if out_dir is None:
        # fall back to the output_dir configured in the file
        out_dir = "out"
        for line in config_text.splitlines():
            body = line.split("#", 1)[0].strip()
            if body.startswith("output_dir"):
                out_dir = body.partition("=")[2].strip()
    _write_files(out_dir, payload.get("files", {}))

    if args.summary:
        summary = {k: v for k, v in payload.items() if k != "files"}
        print(json.dumps(summary, sort_keys=True))

    if args.command == "steady-check":
        if not payload.get("passed", False):
            failing = [k for k, v in payload.get("checks", {}).items()
                       if not v.get("pass", True)]
            print(f"steady-check failed tolerances: {failing}",
                  file=sys.stderr)
            return EXIT_TOLERANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
