"""Command-line client for the tracking service.

Subcommands mirror the service endpoints one to one; by default the app is
run in-process (no server required), while ``--server URL`` forwards the
same requests to a remote instance. ``serve`` starts the HTTP service.

Exit codes: 0 success, 2 initialization failure, 3 tracking lost without
recovery, 4 I/O or format error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx

EXIT_CODES = {"init_failed": 2, "tracking_lost": 3, "io_error": 4}


def _request(server: str | None, endpoint: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.post(endpoint, json=payload)

    # In-process: drive the ASGI app directly, no server needed.
    from .service import create_app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://evline", timeout=None
        ) as client:
            return await client.post(endpoint, json=payload)

    return asyncio.run(go())


def _post(args: argparse.Namespace, endpoint: str, payload: dict) -> int:
    resp = _request(args.server, endpoint, payload)
    body = resp.json()
    if resp.status_code == 200:
        print(json.dumps(body, indent=2))
        return 0
    detail = body.get("detail", {})
    if isinstance(detail, dict) and "code" in detail:
        print(f"error ({detail['code']}): {detail.get('message', '')}", file=sys.stderr)
        return EXIT_CODES.get(detail["code"], 1)
    print(f"error: {body}", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evline", description=__doc__)
    parser.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic scene to event streams")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("init", help="reconstruct a wireframe model from the first clusters")
    p.add_argument("--events-l", required=True)
    p.add_argument("--events-r", required=True)
    p.add_argument("--rig", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)

    p = sub.add_parser("track", help="track the model pose through the streams")
    p.add_argument("--events-l", required=True)
    p.add_argument("--events-r", required=True)
    p.add_argument("--rig", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--diagnostics", default=None)

    p = sub.add_parser("eval", help="compare a trajectory against ground truth")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--anchor-first", action="store_true")

    p = sub.add_parser("run-all", help="simulate, init, track and eval in one directory")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return _post(args, "/simulate", {"scene": args.scene, "out_dir": args.out})
    if args.command == "init":
        return _post(
            args,
            "/init",
            {
                "events_left": args.events_l,
                "events_right": args.events_r,
                "rig": args.rig,
                "out": args.out,
                "config": args.config,
            },
        )
    if args.command == "track":
        return _post(
            args,
            "/track",
            {
                "events_left": args.events_l,
                "events_right": args.events_r,
                "rig": args.rig,
                "model": args.model,
                "out": args.out,
                "config": args.config,
                "diagnostics": args.diagnostics,
            },
        )
    if args.command == "eval":
        return _post(
            args,
            "/eval",
            {
                "est": args.est,
                "gt": args.gt,
                "out": args.out,
                "delta_s": args.delta,
                "anchor_first": args.anchor_first,
            },
        )
    if args.command == "run-all":
        return _post(
            args, "/run-all", {"scene": args.scene, "out_dir": args.out, "config": args.config}
        )
    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
