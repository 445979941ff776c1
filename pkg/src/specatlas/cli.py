"""Command-line interface.

Every read command works in two modes: against a running service
(``--server http://host:port``, a thin HTTP client) or in-process against a
database directory (``--db DIR``), which needs no server and stays fully
offline with the default providers.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import httpx

from .config import AppConfig, load_config
from .crossref import resolve_references
from .embedding import generate
from .engine import build_databases, load_engine
from .errors import NotFoundError, SpecAtlasError
from .evaluation import CrossrefBudget, GoldReferenceSet, judge_prompt, run_microbenchmark
from .pipeline import RetrievalConfig
from .spec_db import embedding_text

logger = logging.getLogger(__name__)


def _post(server: str, path: str, payload: dict, client: httpx.Client | None = None) -> dict:
    own = client is None
    client = client or httpx.Client(base_url=server, timeout=120.0)
    try:
        response = client.post(path, json=payload)
        if response.status_code != 200:
            raise SpecAtlasError(f"{path} -> HTTP {response.status_code}: {response.text}")
        return response.json()
    finally:
        if own:
            client.close()


def _load_local(args) -> tuple:
    config = load_config(args.config)
    engine = load_engine(args.db, config)
    return engine, config


def _retrieval_overrides(args, base: RetrievalConfig) -> RetrievalConfig:
    return RetrievalConfig(
        k1=args.k1 if args.k1 is not None else base.k1,
        k2=args.k2 if args.k2 is not None else base.k2,
        k3=args.k3 if args.k3 is not None else base.k3,
        max_depth=args.depth if args.depth is not None else base.max_depth,
        hyde_enabled=False if args.no_hyde else base.hyde_enabled,
        version_policy=base.version_policy,
    )


def cmd_build(args) -> int:
    config = load_config(args.config)
    if args.server:
        stats = _post(
            args.server,
            "/build",
            {
                "corpus_dir": args.corpus,
                "tdocs_dir": args.tdocs,
                "out_dir": args.out,
                "drop_trivial_crs": args.drop_trivial_crs,
            },
            client=args.client,
        )
    else:
        stats = build_databases(
            args.corpus, args.tdocs, args.out, config, drop_trivial_crs=args.drop_trivial_crs
        )
    print(json.dumps(stats, indent=2))
    return 0


def cmd_query(args) -> int:
    if args.server:
        payload = {
            "question": args.question,
            "k1": args.k1,
            "k2": args.k2,
            "k3": args.k3,
            "depth": args.depth,
            "include_timings": args.timings,
        }
        if args.no_hyde:
            payload["hyde"] = False
        record = _post(args.server, "/query", payload, client=args.client)
        answer = record.get("answer")
        warnings = record.get("warnings", [])
        if args.json:
            print(json.dumps(record, ensure_ascii=False, indent=2))
        else:
            _print_query_summary(record)
        return 0 if answer is not None else 1

    engine, _ = _load_local(args)
    result = engine.answer(args.question, _retrieval_overrides(args, engine.retrieval))
    if args.json:
        print(result.to_json(include_timings=args.timings))
    else:
        _print_query_summary(result.to_record())
    return 0 if result.answer is not None else 1


def _print_query_summary(record: dict) -> None:
    for chunk in record["context_chunks"]:
        print(f"[{chunk['section']:>10}] {chunk['chunk_uid']}  score={chunk['score']:.4f}")
    for warning in record["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    answer = record["answer"]
    print()
    print(answer if answer is not None else "(no answer: generation failed)")


def cmd_trace(args) -> int:
    if args.server:
        record = _post(
            args.server,
            "/trace",
            {
                "question": args.question,
                "spec_id": args.spec,
                "clause_id": args.clause,
                "k1": args.k1,
                "depth": args.depth,
            },
            client=args.client,
        )
    else:
        engine, _ = _load_local(args)
        depth = args.depth if args.depth is not None else engine.retrieval.max_depth
        if args.spec and args.clause:
            seeds = [engine.spec_db.lookup_clause(args.spec, args.clause)]
        elif args.question:
            k1 = args.k1 if args.k1 is not None else engine.retrieval.k1
            hits = engine.spec_db.semantic_search(args.question, k1)
            seeds = [engine.spec_db.chunk(h.item_uid) for h in hits]
        else:
            print("trace: provide --question or --spec and --clause", file=sys.stderr)
            return 2
        record = resolve_references(engine.spec_db, seeds, depth).to_record()
    print(json.dumps(record, ensure_ascii=False, indent=2))
    return 0


def cmd_diff(args) -> int:
    if args.server:
        record = _post(
            args.server, "/diff", {"spec_id": args.spec, "clause_id": args.clause}, client=args.client
        )
        entries = record["entries"]
    else:
        engine, _ = _load_local(args)
        found = engine.change_db.clause_entries(args.spec, args.clause)
        if not found:
            print(f"no change entries for ({args.spec}, {args.clause})", file=sys.stderr)
            return 1
        entries = []
        for entry in found:
            rec = entry.to_record()
            rec.pop("hunks")
            entries.append(rec)
    if args.json:
        print(json.dumps(entries, ensure_ascii=False, indent=2))
        return 0
    for rec in entries:
        frm = rec["from_version"] or "none"
        print(f"{rec['kind']}: {frm} -> {rec['to_version']} ({rec['to_date'] or 'undated'})")
        for line in rec["added"]:
            print(f"  + {line}")
        for line in rec["removed"]:
            print(f"  - {line}")
        for old, new in rec["modified"]:
            print(f"  ~ {old} => {new}")
    return 0


def cmd_eval(args) -> int:
    if args.server:
        gold_text = Path(args.gold).read_text(encoding="utf-8")
        record = _post(
            args.server,
            "/eval",
            {"gold_csv": gold_text, "k1": args.k1, "k2": args.k2, "depth": args.depth},
            client=args.client,
        )
    else:
        engine, _ = _load_local(args)
        gold = GoldReferenceSet.from_csv(args.gold)
        budget = CrossrefBudget(k1=args.k1, k2=args.k2, max_depth=args.depth)
        record = run_microbenchmark(engine.spec_db, gold, budget).to_record()

    print(f"{'source':<40} {'P':>8} {'R':>8} {'F1':>8}")
    for row in record["per_source"]:
        print(
            f"{row['source_chunk_uid']:<40} {row['precision']:>8.4f} "
            f"{row['recall']:>8.4f} {row['f1']:>8.4f}"
        )
    print(
        f"{'macro':<40} {record['macro_precision']:>8.4f} "
        f"{record['macro_recall']:>8.4f} {record['macro_f1']:>8.4f}"
    )
    print(
        f"{'micro':<40} {record['micro_precision']:>8.4f} "
        f"{record['micro_recall']:>8.4f} {record['micro_f1']:>8.4f}"
    )
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps(record, indent=2) + "\n", encoding="utf-8"
        )
    return 0


def cmd_judge(args) -> int:
    engine, config = _load_local(args)
    if config.gen_provider.kind == "null-generate":
        print("judge requires a remote generation backend (results are "
              "model-dependent and not deterministic)", file=sys.stderr)
        return 2
    source = engine.spec_db.chunk(args.source_uid)
    try:
        target = engine.spec_db.lookup_clause(args.spec, args.clause)
    except NotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    prompt = judge_prompt(embedding_text(source), embedding_text(target))
    verdict = generate(prompt, config.gen_provider)
    print(verdict.strip())
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    app = create_app(config=config, db_dir=args.db)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specatlas",
        description="Clause-level retrieval over versioned specification corpora.",
    )
    parser.add_argument("--config", help="TOML config file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="ingest a corpus and build the databases")
    p.add_argument("--corpus", required=True, help="corpus directory or manifest file")
    p.add_argument("--tdocs", default=None, help="directory of CR text files")
    p.add_argument("--out", required=True, help="output database directory")
    p.add_argument("--drop-trivial-crs", action="store_true",
                   help="drop CRs whose summary/reason/consequence are all short")
    p.add_argument("--server", default=None, help="run the build on a remote service")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="answer a question")
    p.add_argument("--db", help="database directory (local mode)")
    p.add_argument("--server", default=None, help="service base URL (client mode)")
    p.add_argument("--question", required=True)
    p.add_argument("--k1", type=int, default=None)
    p.add_argument("--k2", type=int, default=None)
    p.add_argument("--k3", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--no-hyde", action="store_true")
    p.add_argument("--json", action="store_true", help="emit the full result as JSON")
    p.add_argument("--timings", action="store_true", help="include per-stage timings")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("trace", help="emit a reference-resolution trace as JSON")
    p.add_argument("--db")
    p.add_argument("--server", default=None)
    p.add_argument("--question", default=None)
    p.add_argument("--spec", default=None)
    p.add_argument("--clause", default=None)
    p.add_argument("--k1", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("diff", help="show the change history of one clause")
    p.add_argument("--db")
    p.add_argument("--server", default=None)
    p.add_argument("--spec", required=True)
    p.add_argument("--clause", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("eval", help="score cross-reference retrieval against a gold set")
    p.add_argument("--db")
    p.add_argument("--server", default=None)
    p.add_argument("--gold", required=True, help="gold reference CSV")
    p.add_argument("--k1", type=int, default=3)
    p.add_argument("--k2", type=int, default=2)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--json-out", default=None, help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("judge", help="ask a generation backend whether a cited "
                                     "clause is helpful (non-deterministic)")
    p.add_argument("--db", required=True)
    p.add_argument("--source-uid", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--clause", required=True)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--db", default=None, help="database directory to load at startup")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None, client: httpx.Client | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    args.client = client  # test seam: inject an ASGI-transport client
    if getattr(args, "server", None) is None and getattr(args, "db", None) is None \
            and args.command in {"query", "trace", "diff", "eval"}:
        parser.error(f"{args.command}: provide --db or --server")
    try:
        return args.func(args)
    except SpecAtlasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
