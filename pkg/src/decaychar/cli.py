"""Command-line client for the decaychar service.

The CLI is a thin HTTP client: by default it mounts the FastAPI app
in-process (so everything runs locally and offline), and with --server it
targets a running instance instead.  Subcommands map one-to-one onto service
endpoints; experiment artifacts (JSON report, CSV series, gnuplot script)
are written by the service side into --out.

Exit codes: 0 all verdicts pass, 1 some verdict failed, 2 config/usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx

from . import __version__

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class InProcessTransport(httpx.BaseTransport):
    """Synchronous bridge into the ASGI app: same request/response path as a
    remote server, no socket."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        content = request.read()

        async def roundtrip():
            req = httpx.Request(request.method, request.url,
                                headers=request.headers, content=content)
            resp = await self._asgi.handle_async_request(req)
            body = await resp.aread()
            return httpx.Response(resp.status_code, headers=resp.headers,
                                  content=body, request=request)

        return asyncio.run(roundtrip())


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from .service import create_app

    return httpx.Client(transport=InProcessTransport(create_app()),
                        base_url="http://decaychar.local", timeout=None)


def _load_config(path: str, kind: str, args) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        print(f"error: config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    except tomllib.TOMLDecodeError as exc:
        print(f"error: malformed config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    raw["kind"] = kind
    if args.out:
        raw["out_dir"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    return raw


def _post(client: httpx.Client, url: str, payload: dict) -> dict:
    resp = client.post(url, json=payload)
    if resp.status_code == 404:
        print(f"error: {resp.json().get('detail', 'not found')}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail")
        except Exception:
            detail = resp.text
        print(f"error: {detail}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return resp.json()


def cmd_check(args, client: httpx.Client) -> int:
    body = _post(client, "/check", {"system": args.system, "n_omega": args.n_omega})
    rep = body["report"]
    print(f"system {body['system']}: SK {'PASS' if rep['passes'] else 'FAIL'}")
    for key in ("kernel_margin", "max_re_lambda", "dissipation_c",
                "ellipticity_min", "lambda0"):
        print(f"  {key:18s} {rep[key]:.6g}")
    if not body["ellipticity_agrees"]:
        print("  WARNING: ellipticity sign disagrees with the SK verdict")
    return EXIT_OK if rep["passes"] and body["ellipticity_agrees"] else EXIT_FAIL


def cmd_experiment(kind: str):
    def run(args, client: httpx.Client) -> int:
        if not args.config:
            print(f"error: '{kind}' needs --config <file>", file=sys.stderr)
            return EXIT_USAGE
        payload = _load_config(args.config, kind, args)
        body = _post(client, "/experiments", payload)
        doc = body["report"]
        name = doc.get("experiment", kind)
        print(f"{name}: {'PASS' if body['passed'] else 'FAIL'}")
        for rep in doc.get("reports", []):
            print(f"  {rep['label']:36s} fitted {rep['fitted_rate']: .4f} "
                  f"predicted {rep['predicted_rate']: .4f}  {rep['verdict']}")
        print(f"  artifacts in {payload.get('out_dir', 'out')}/")
        return EXIT_OK if body["passed"] else EXIT_FAIL

    return run


def cmd_reproduce(args, client: httpx.Client) -> int:
    listing = client.get("/reproduce").json()
    names = listing["experiments"]
    criteria = listing["criteria"]
    targets = names if args.name == "all" else [args.name]
    if args.name != "all" and args.name not in names:
        print(f"error: unknown experiment '{args.name}'; have {', '.join(names)}",
              file=sys.stderr)
        return EXIT_USAGE
    status = EXIT_OK
    for name in targets:
        body = _post(client, f"/reproduce/{name}",
                     {"out_dir": args.out or "out", "seed": args.seed})
        tag = criteria.get(name, "")
        print(f"{tag:5s} {name:24s} {'PASS' if body['passed'] else 'FAIL'}")
        if not body["passed"]:
            status = EXIT_FAIL
    return status


def cmd_serve(args, _client) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=None,
                        help="URL of a running service (default: in-process)")
    common.add_argument("--out", default=None, help="output directory override")
    common.add_argument("--seed", type=int, default=None, help="seed override")
    common.add_argument("--threads", type=int, default=None,
                        help="FFT worker threads (in-process runs)")

    parser = argparse.ArgumentParser(
        prog="decaychar",
        description="Decay characterization toolkit for partially dissipative "
                    "hyperbolic systems")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common],
                       help="stability diagnostics for a system")
    p.add_argument("system", help="builtin name or system file")
    p.add_argument("--n-omega", type=int, default=None, dest="n_omega")
    p.set_defaults(fn=cmd_check)

    for kind, help_text in [
        ("synth", "synthesize data of a given decay character"),
        ("run-linear", "evolve the linear system and record norms"),
        ("run-euler", "nonlinear damped-Euler run"),
        ("decay", "fit decay rates on an existing series CSV"),
        ("profile", "parabolic-profile gap experiment"),
        ("delta-v", "nonlinear-vs-linear difference experiment"),
    ]:
        p = sub.add_parser(kind, parents=[common], help=help_text)
        p.add_argument("--config", required=False, help="TOML run config")
        p.set_defaults(fn=cmd_experiment(kind))

    p = sub.add_parser("reproduce", parents=[common],
                       help="run a canned acceptance experiment")
    p.add_argument("name", help="experiment name or 'all'")
    p.set_defaults(fn=cmd_reproduce)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8711)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        from . import spectral

        spectral.set_workers(args.threads)
    if args.command == "serve":
        return args.fn(args, None)
    with make_client(args.server) as client:
        return args.fn(args, client)


if __name__ == "__main__":
    raise SystemExit(main())
