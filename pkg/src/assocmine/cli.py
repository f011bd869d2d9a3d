"""Command-line client for the association-mining service.

Every subcommand talks to the HTTP service: by default an in-process
instance (no server needed), or a remote one via --server. Exit codes:
0 success, 1 validation error (bad config, missing upstream artifact),
2 runtime/transport error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import httpx

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser, config_required: bool = True) -> None:
    parser.add_argument("--config", required=config_required,
                        help="pipeline config file")
    parser.add_argument("--out-dir", default=None,
                        help="override the configured output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for parallel stages")
    parser.add_argument("--force", action="store_true",
                        help="consume stale upstream artifacts anyway")
    parser.add_argument("--verbose", action="store_true",
                        help="chatty logging")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service "
                             "(default: run in-process)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assocmine",
        description="Mine entity associations from a news corpus.")
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in ("ingest", "dedupe"):
        stage_parser = sub.add_parser(stage, help="run the %s stage" % stage)
        _add_common(stage_parser)
        if stage == "dedupe":
            stage_parser.add_argument("--grid-start", type=float, default=None)
            stage_parser.add_argument("--grid-end", type=float, default=None)
            stage_parser.add_argument("--grid-step", type=float, default=None)
            stage_parser.add_argument("--max-batch", type=int, default=None)

    filter_parser = sub.add_parser("filter", help="run the filter stage")
    _add_common(filter_parser)
    filter_parser.add_argument("--strategy", choices=("lexical", "semantic"),
                               default=None)
    filter_parser.add_argument("--query-file", default=None)
    filter_parser.add_argument("--threshold", type=float, default=None)
    filter_parser.add_argument("--min-hits", type=int, default=None)

    extract_parser = sub.add_parser("extract", help="run the extract stage")
    _add_common(extract_parser)
    extract_parser.add_argument("--extractors", default=None,
                                help="comma list: gazetteer,pattern,event,external")
    extract_parser.add_argument("--registry", default=None)
    extract_parser.add_argument("--categories", default=None)
    extract_parser.add_argument("--events", default=None)

    associate_parser = sub.add_parser("associate",
                                      help="run the associate stage")
    _add_common(associate_parser)
    associate_parser.add_argument("--level",
                                  choices=("sentence", "paragraph", "article"),
                                  default=None)
    associate_parser.add_argument("--bucket", choices=("year", "month"),
                                  default=None)

    graph_parser = sub.add_parser("graph", help="run the graph stage")
    _add_common(graph_parser)
    graph_parser.add_argument("--min-count", type=int, default=None)
    graph_parser.add_argument("--format", choices=("json", "graphml", "dot"),
                              default="json")
    graph_parser.add_argument("--out", default=None,
                              help="also copy the export to this file")

    heatmap_parser = sub.add_parser("heatmap", help="run the heatmap stage")
    _add_common(heatmap_parser)
    heatmap_parser.add_argument("--target", default=None)
    heatmap_parser.add_argument("--type", dest="entity_type", default=None)
    heatmap_parser.add_argument("--out", default=None,
                                help="also copy the CSV to this file")

    trend_parser = sub.add_parser("trend", help="print a trend matrix as CSV")
    _add_common(trend_parser)
    trend_parser.add_argument("--target", default=None)
    trend_parser.add_argument("--type", dest="entity_type", default=None)
    trend_parser.add_argument("--bucket-start", default=None)
    trend_parser.add_argument("--bucket-end", default=None)

    rank_parser = sub.add_parser("rank", help="print ranked entities as CSV")
    _add_common(rank_parser)
    rank_parser.add_argument("--top", type=int, default=None)
    rank_parser.add_argument("--type", dest="entity_type", default=None)
    rank_parser.add_argument("--bucket-start", default=None)
    rank_parser.add_argument("--bucket-end", default=None)

    run_parser = sub.add_parser("run", help="run the whole pipeline")
    _add_common(run_parser)
    run_parser.add_argument("--stages", default=None,
                            help="comma list; default: all stages")

    serve_parser = sub.add_parser("serve", help="start the HTTP service")
    serve_parser.add_argument("--host", default="127.0.0.1")
    serve_parser.add_argument("--port", type=int, default=8000)
    serve_parser.add_argument("--verbose", action="store_true")

    return parser


def _client(args):
    if args.server:
        return httpx.Client(base_url=args.server, timeout=300.0)
    import warnings
    with warnings.catch_warnings():
        warnings.filterwarnings(
            "ignore", message="Using `httpx` with `starlette.testclient`")
        from starlette.testclient import TestClient

    from .service.app import app
    return TestClient(app, raise_server_exceptions=False)


def _fail(response) -> int:
    try:
        detail = response.json().get("detail", response.text)
    except ValueError:
        detail = response.text
    print("error: %s" % detail, file=sys.stderr)
    return 1 if response.status_code < 500 else 2


def _base_payload(args) -> dict:
    payload = {
        "config": os.path.abspath(args.config),
        "threads": args.threads,
        "force": args.force,
    }
    if args.out_dir:
        payload["out_dir"] = os.path.abspath(args.out_dir)
    return payload


def _query_params(args, extra: dict | None = None) -> dict:
    params = {"config": os.path.abspath(args.config)}
    if args.out_dir:
        params["out_dir"] = os.path.abspath(args.out_dir)
    for key, value in (extra or {}).items():
        if value is not None:
            params[key] = value
    return params


def _run_stages(args, stages: list[str] | None,
                overrides: dict[str, str]) -> int:
    payload = _base_payload(args)
    payload["stages"] = stages
    payload["overrides"] = overrides
    with _client(args) as client:
        response = client.post("/run", json=payload)
        if response.status_code != 200:
            return _fail(response)
        if args.server:
            for summary in response.json()["summaries"]:
                print("[assocmine] stage=%s in=%d out=%d time=%.3fs"
                      % (summary["stage"], summary["n_in"], summary["n_out"],
                         summary["seconds"]), file=sys.stderr)
    return 0


def _path_override(value: str | None) -> str | None:
    return None if value is None else os.path.abspath(value)


def _overrides_for(args) -> dict[str, str]:
    """Map subcommand flags onto config keys."""
    pairs: list[tuple[str, object]] = []
    command = args.command
    if command == "filter":
        pairs = [("filter.strategy", args.strategy),
                 ("filter.query_file", _path_override(args.query_file)),
                 ("filter.threshold", args.threshold),
                 ("filter.min_hits", args.min_hits)]
    elif command == "dedupe":
        pairs = [("dedup.grid_start", args.grid_start),
                 ("dedup.grid_end", args.grid_end),
                 ("dedup.grid_step", args.grid_step),
                 ("dedup.max_batch", args.max_batch)]
    elif command == "extract":
        pairs = [("extract.extractors", args.extractors),
                 ("extract.registry", _path_override(args.registry)),
                 ("extract.categories", _path_override(args.categories)),
                 ("extract.events", _path_override(args.events))]
    elif command == "associate":
        pairs = [("associate.level", args.level),
                 ("associate.bucket", args.bucket)]
    elif command == "graph":
        pairs = [("graph.min_count", args.min_count)]
    elif command == "heatmap":
        pairs = [("heatmap.target", args.target),
                 ("heatmap.entity_type", args.entity_type)]
    return {key: str(value) for key, value in pairs if value is not None}


def _fetch_to_file(args, url: str, params: dict, out_path: str) -> int:
    with _client(args) as client:
        response = client.get(url, params=params)
        if response.status_code != 200:
            return _fail(response)
        with open(out_path, "wb") as handle:
            handle.write(response.content)
    print("wrote %s" % out_path, file=sys.stderr)
    return 0


def _print_matrix_csv(body: dict) -> None:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["entity"] + body["buckets"] + ["total"])
    for entity, cells, total in zip(body["entities"], body["cells"],
                                    body["totals"]):
        writer.writerow([entity] + cells + [total])


def cmd_trend(args) -> int:
    params = _query_params(args, {"target": args.target,
                                  "type": args.entity_type,
                                  "bucket_start": args.bucket_start,
                                  "bucket_end": args.bucket_end})
    with _client(args) as client:
        response = client.get("/trend", params=params)
        if response.status_code != 200:
            return _fail(response)
        _print_matrix_csv(response.json())
    return 0


def cmd_rank(args) -> int:
    params = _query_params(args, {"top": args.top, "type": args.entity_type,
                                  "bucket_start": args.bucket_start,
                                  "bucket_end": args.bucket_end})
    with _client(args) as client:
        response = client.get("/rank", params=params)
        if response.status_code != 200:
            return _fail(response)
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["entity", "total"])
        for row in response.json()["rows"]:
            writer.writerow([row["entity"], row["total"]])
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=args.host, port=args.port,
                log_level="info" if args.verbose else "warning")
    return 0


_STAGE_COMMANDS = {"ingest", "filter", "dedupe", "extract", "associate",
                   "graph", "heatmap"}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "run":
            stages = None
            if args.stages:
                stages = [s.strip() for s in args.stages.split(",") if s.strip()]
            return _run_stages(args, stages, {})
        if args.command in _STAGE_COMMANDS:
            status = _run_stages(args, [args.command], _overrides_for(args))
            if status != 0:
                return status
            out = getattr(args, "out", None)
            if out:
                if args.command == "graph":
                    params = _query_params(args, {"format": args.format})
                    return _fetch_to_file(args, "/export/graph", params, out)
                if args.command == "heatmap":
                    return _fetch_to_file(args, "/export/heatmap",
                                          _query_params(args), out)
            return 0
        if args.command == "trend":
            return cmd_trend(args)
        if args.command == "rank":
            return cmd_rank(args)
    except httpx.HTTPError as exc:
        print("error: cannot reach service (%s)" % exc, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
