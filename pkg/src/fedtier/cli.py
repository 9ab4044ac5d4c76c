"""Command-line client for the experiment service.

`fedtier --config cfg.json --out results/` runs the configured experiment
and writes metrics.csv, metrics.json, and accuracy.svg. Without --server
(or FEDTIER_SERVER) the service runs in-process; with it, requests go to a
remote fedtier instance. `fedtier compare A B` diffs two metrics.csv files
locally, and `fedtier serve` starts the HTTP service.

Exit codes: 0 success, 1 config error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import httpx

from .errors import DataError, FedTierError
from .reporting import compare_finals, read_metrics_csv, write_accuracy_svg, write_csv, write_json

SERVER_ENV = "FEDTIER_SERVER"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_KIND_EXIT = {"config": EXIT_CONFIG, "data": EXIT_DATA, "runtime": EXIT_RUNTIME}


def _fail(code: int, message: str) -> int:
    print(f"fedtier: {message}", file=sys.stderr)
    return code


def _make_client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import create_app
    return TestClient(create_app(), raise_server_exceptions=False)


def _error_exit(response: httpx.Response) -> int:
    try:
        error = response.json()["error"]
        kind, detail = error["kind"], error["detail"]
    except Exception:
        kind, detail = "runtime", f"HTTP {response.status_code}: {response.text[:200]}"
    return _fail(_KIND_EXIT.get(kind, EXIT_RUNTIME), f"{kind} error: {detail}")


def _cmd_list_scenarios(args) -> int:
    with _make_client(args.server) as client:
        response = client.get("/scenarios")
        if response.status_code != 200:
            return _error_exit(response)
        for item in response.json()["scenarios"]:
            print(f"{item['name']}\t{item['description']}")
    return EXIT_OK


def _cmd_run(args) -> int:
    if not args.config:
        return _fail(EXIT_CONFIG, "--config is required (or use --list-scenarios / a subcommand)")
    if not args.out:
        return _fail(EXIT_CONFIG, "--out is required")
    config_path = Path(args.config)
    if not config_path.is_file():
        return _fail(EXIT_CONFIG, f"config file not found: {config_path}")
    try:
        experiment = json.loads(config_path.read_text())
    except json.JSONDecodeError as exc:
        return _fail(EXIT_CONFIG, f"config is not valid JSON: {exc}")

    payload = {"experiment": experiment, "mnist_dir": args.mnist_dir, "seed": args.seed}
    with _make_client(args.server) as client:
        try:
            response = client.post("/experiments/run", json=payload)
        except httpx.HTTPError as exc:
            return _fail(EXIT_RUNTIME, f"cannot reach server: {exc}")
        if response.status_code != 200:
            return _error_exit(response)
        result = response.json()

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        records = result["metrics"]
        write_csv(records, out_dir / "metrics.csv")
        write_json(records, out_dir / "metrics.json")
        write_accuracy_svg(records, out_dir / "accuracy.svg")
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot write outputs to {out_dir}: {exc}")

    finals = {r["client_id"]: r["accuracy"] for r in records if r["round"] == result["rounds"]}
    summary = " ".join(f"client {c}: {a:.4f}" for c, a in sorted(finals.items()))
    print(f"{result['topology']}/{result['scenario']} finished "
          f"({result['rounds']} rounds, seed {result['seed']}): {summary}")
    print(f"wrote {out_dir / 'metrics.csv'}, metrics.json, accuracy.svg")
    return EXIT_OK


def _cmd_compare(args) -> int:
    try:
        records_a = read_metrics_csv(args.metrics_a)
        records_b = read_metrics_csv(args.metrics_b)
        rows = compare_finals(records_a, records_b)
    except (DataError, FedTierError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    print(f"{'client':>6}  {'final_a':>8}  {'final_b':>8}  {'difference':>10}")
    for row in rows:
        print(f"{row['client_id']:>6}  {row['final_a']:>8.4f}  {row['final_b']:>8.4f}  "
              f"{row['difference']:>+10.4f}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedtier",
        description="Run deterministic federated-learning experiments and report metrics.",
    )
    parser.add_argument("--config", metavar="PATH", help="JSON experiment config")
    parser.add_argument("--out", metavar="DIR", help="output directory for metrics files")
    parser.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    parser.add_argument("--mnist-dir", metavar="DIR",
                        help="MNIST IDX directory (default: $FEDTIER_MNIST_DIR)")
    parser.add_argument("--server", metavar="URL", default=os.environ.get(SERVER_ENV),
                        help="remote fedtier service; default runs in-process")
    parser.add_argument("--list-scenarios", action="store_true",
                        help="list the built-in scenarios and exit")

    sub = parser.add_subparsers(dest="command")
    compare = sub.add_parser("compare", help="diff the final-round accuracies of two runs")
    compare.add_argument("metrics_a", help="first metrics.csv")
    compare.add_argument("metrics_b", help="second metrics.csv")
    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.list_scenarios:
            return _cmd_list_scenarios(args)
        return _cmd_run(args)
    except FedTierError as exc:
        return _fail(EXIT_RUNTIME, str(exc))


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
