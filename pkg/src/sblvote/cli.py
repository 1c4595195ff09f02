"""Command-line client for the sblvote service.

Every subcommand is an HTTP call. With ``--server`` it talks to a running
``sblvote serve``; without it the app is mounted in-process.

Exit codes: 0 success/valid, 1 invalid audit, 2 usage or config error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import List, Optional

import httpx

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class _Usage(Exception):
    pass


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    with warnings.catch_warnings():
        # starlette nags about its httpx transport; harmless for in-process use
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise _Usage(f"cannot read {path}: {exc.strerror}") from exc


def _load_config(path: str) -> dict:
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise _Usage(f"{path} is not valid JSON: {exc}") from exc


def _write(path: str, data: bytes) -> None:
    Path(path).write_bytes(data)


def _check(resp: httpx.Response) -> dict:
    if resp.status_code == 422:
        raise _Usage(_detail(resp))
    if resp.status_code >= 400:
        raise RuntimeError(_detail(resp))
    return resp.json()


def _detail(resp: httpx.Response) -> str:
    try:
        body = resp.json()
    except ValueError:
        return resp.text
    detail = body.get("detail", body)
    return detail if isinstance(detail, str) else json.dumps(detail)


def cmd_run(args, client) -> int:
    body = _check(client.post("/runs", json={"config": _load_config(args.config), "audit": args.audit}))
    _write(args.out, body["transcript"].encode())
    result = body["result"]
    if args.result:
        _write(args.result, json.dumps(result, indent=2).encode())
    if body["expectations"]:
        _write(args.out + ".expect.json", json.dumps(body["expectations"], indent=2).encode())
    status = ", ".join(f"booth {b['booth_id']}: {b['status']}" for b in result["booths"])
    print(f"totals {result['totals']} (expected {result['expected']}, match={result['match']}, partial={result['partial']})")
    print(status)
    for o in body["expectations"]:
        print(f"attack {o['attack']} on booth {o['booth']}: expect {o['expect']} ({o['code']}), saw {o['observed']} -> {'ok' if o['satisfied'] else 'MISSED'}")
    return EXIT_OK


def cmd_verify(args, client) -> int:
    report = _check(client.post("/audits", content=_read(args.transcript)))
    if args.report:
        _write(args.report, json.dumps(report, indent=2).encode())
    for name, c in report["checks"].items():
        print(f"{name:20s} {c['status']:4s} ({c['checked']} checked, {c['failed']} failed)")
    if report["first_failure"]:
        f = report["first_failure"]
        print(f"first failure: {f['check']} ({f['reason']}) at event {f.get('event')}")
    print(report["verdict"])
    return EXIT_OK if report["verdict"] == "valid" else EXIT_INVALID


def cmd_bench(args, client) -> int:
    body = _check(client.post("/bench", json={"config": _load_config(args.config), "audit": not args.no_audit}))
    _write(args.out, body["csv"].encode())
    sys.stdout.write(body["csv"])
    return EXIT_OK


def cmd_gen_config(args, client) -> int:
    payload = {"voters": args.voters, "candidates": args.candidates, "booths": args.booths, "seed": args.seed}
    if args.group is not None:
        payload["group"] = int(args.group) if args.group.isdigit() else args.group
    config = _check(client.post("/configs", json=payload))
    text = json.dumps(config, indent=2) + "\n"
    if args.out:
        _write(args.out, text.encode())
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("sblvote.service.app:app", host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sblvote", description=__doc__.splitlines()[0])
    parser.add_argument("--server", help="base URL of a running sblvote service (default: in-process)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate an election and write its transcript")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="transcript output path")
    p.add_argument("--result", help="write the run result as JSON")
    p.add_argument("--audit", action="store_true", help="audit the transcript as part of the run")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("verify", help="audit a transcript from genesis")
    p.add_argument("transcript")
    p.add_argument("--report", help="write the machine-readable audit report")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bench", help="time each protocol phase")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--no-audit", action="store_true", help="skip the audit phase")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("gen-config", help="emit a scenario config")
    p.add_argument("--voters", type=int, required=True)
    p.add_argument("--candidates", type=int, required=True)
    p.add_argument("--booths", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group", help='"test-group", "production", or modulus bits')
    p.add_argument("--out")
    p.set_defaults(fn=cmd_gen_config)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "serve":
        return cmd_serve(args)
    try:
        with _client(args.server) as client:
            return args.fn(args, client)
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, httpx.HTTPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
