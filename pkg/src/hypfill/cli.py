"""Thin command-line client for the experiment service.

Each subcommand assembles a flat config, submits it to the service (an
in-process instance by default, or a remote one via --server), and writes
the returned files plus the manifest into the output directory.  Exit
codes: 0 success, 1 computation failure, 2 invalid config.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import ConfigError, parse_config_text

SUBCOMMANDS = ("space", "fill", "cap", "mod", "phi", "sweep", "suite")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypfill", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} task")
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--jobs", type=int, default=None, help="task-level parallelism bound")
        sp.add_argument("--server", default=None, help="base URL of a running service; in-process by default")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a single config entry (repeatable)")
    return ap


def _load_raw(args) -> dict:
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}")
    for item in args.set:
        if "=" not in item:
            raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        raw[key.strip()] = value.strip()
    raw["task"] = args.command
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    if args.jobs is not None:
        raw["jobs"] = str(args.jobs)
    if "seed" not in raw:
        raise ConfigError("seed", "required (config file or --seed)")
    return raw


def _submit(raw: dict, server: str | None) -> dict:
    payload = {"config": {k: str(v) for k, v in raw.items()}}
    if server:
        import httpx

        resp = httpx.post(server.rstrip("/") + "/experiments", json=payload, timeout=None)
    else:
        from fastapi.testclient import TestClient
        from .service import create_app

        with TestClient(create_app()) as client:
            resp = client.post("/experiments", json=payload)
    if resp.status_code == 422:
        detail = resp.json().get("detail")
        raise ConfigError(str((detail or {}).get("field", "config")), json.dumps(detail))
    if resp.status_code != 200:
        raise RuntimeError(f"computation failed ({resp.status_code}): {resp.text}")
    return resp.json()


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = _load_raw(args)
        body = _submit(raw, args.server)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    import os

    os.makedirs(args.out, exist_ok=True)
    for name in sorted(body["files"]):
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(body["files"][name])
    print(f"task {raw['task']}: wrote {len(body['files'])} files to {args.out}")
    for key, value in sorted(body.get("summary", {}).items()):
        print(f"  {key}: {value}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
