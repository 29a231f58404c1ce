"""Command-line interface.

Subcommands cover the pipeline end to end: `prepare` reduces and clusters
two .cseb embedding files, `select` runs a labeling session against the
prepared artifacts, `eval` scores an exported session on held-out
instances, `simulate` runs the synthetic benchmark matrix, and `serve`
exposes a session over HTTP.

Every option may also come from a flat JSON config file (--config).
Explicit flags win over file values, file values win over built-in
defaults.  Exit codes: 0 success, 1 usage, 2 malformed or inconsistent
input data, 3 internal failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from . import artifacts, benchmark
from .baselines import STRATEGIES, STRATEGY_COLDSELECT, run_strategy
from .clustering import DISCARDED, kmeans, refine_by_silhouette, refine_clusters
from .embed_io import SetKind, load_embedding_set, load_instance_texts
from .errors import (
    ClozeSelectError,
    DataError,
    InfeasibleSpec,
    IoFailure,
    MissingOracleLabel,
    ProviderFailure,
    UnknownGoldLabel,
)
from .geometry import ItemKind, build_shared_space
from .selection import (
    ABLATION_TERMS,
    DENOM_ALL_INSTANCES,
    SEPARATION_LITERAL,
    SessionConfig,
    VerbalizerEntry,
    VerbalizerSet,
    canonical_json,
    canonical_label,
    export_session,
)
from .verbalizer_eval import AGG_MAX, AGG_MEAN, evaluate, render_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

DEFAULT_PORT = 8642


class _CliUsage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; we reserve 2 for data errors."""

    def error(self, message):
        raise _CliUsage(f"{self.prog}: {message}")


class _Options:
    """Flag > config-file > default resolution for one subcommand."""

    def __init__(self, args):
        self._args = args
        self._file = _load_config_file(getattr(args, "config", None))

    def get(self, key, default=None, required=False):
        value = getattr(self._args, key, None)
        if value is None:
            value = self._file.get(key, default)
        if required and value is None:
            raise _CliUsage(f"missing required option --{key.replace('_', '-')}")
        return value


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _CliUsage(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _CliUsage(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise _CliUsage(f"config file {path} must hold a flat JSON object")
    return doc


def _as_str_list(value, key) -> list[str]:
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",")]
    elif isinstance(value, list):
        parts = [str(p).strip() for p in value]
    else:
        raise _CliUsage(f"--{key} expects a comma-separated list")
    parts = [p for p in parts if p]
    if not parts:
        raise _CliUsage(f"--{key} is empty")
    return parts


def _as_int_list(value, key) -> list[int]:
    try:
        return [int(p) for p in _as_str_list(value, key)]
    except ValueError as exc:
        raise _CliUsage(f"--{key} expects integers: {exc}") from exc


def _read_json_file(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc


def _load_texts_map(path) -> dict[str, str]:
    if path is None:
        return {}
    return {t.id: t.text for t in load_instance_texts(path)}


# --- session plumbing shared by select and serve -------------------------------


def _session_config(opts: _Options) -> tuple[SessionConfig, str]:
    strategy = opts.get("strategy", STRATEGY_COLDSELECT)
    if strategy not in STRATEGIES:
        raise _CliUsage(f"unknown strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}")
    labels = _as_str_list(opts.get("labels", required=True), "labels")
    ablation = frozenset(_as_str_list(opts.get("ablation", ",".join(ABLATION_TERMS)), "ablation"))
    config = SessionConfig(
        budget=int(opts.get("budget", required=True)),
        label_space=tuple(labels),
        ablation=ablation,
        separation_mode=opts.get("separation_mode", SEPARATION_LITERAL),
        impurity_denominator=opts.get("impurity_denominator", DENOM_ALL_INSTANCES),
        seed=int(opts.get("seed", 42)),
        eq16_literal=bool(opts.get("eq16_literal", False)),
    )
    return config, strategy


def _oracle_provider(path, label_space):
    doc = _read_json_file(path)
    if not isinstance(doc, dict) or not all(isinstance(v, str) for v in doc.values()):
        raise DataError(f"{path}: oracle file must map instance id to class name")
    allowed = set(label_space)

    def provider(instance_id: str) -> str:
        if instance_id not in doc:
            raise MissingOracleLabel(f"{path}: no label for instance {instance_id!r}")
        label = canonical_label(doc[instance_id])
        if label not in allowed:
            raise UnknownGoldLabel(f"{path}: label {label!r} for {instance_id!r} "
                                   f"is outside the label space")
        return label

    return provider


def _stdin_provider(texts: dict[str, str], label_space):
    classes = ", ".join(label_space)
    allowed = set(label_space)

    def provider(instance_id: str) -> str:
        text = texts.get(instance_id, "")
        sys.stderr.write(f"[{instance_id}] {text}\n")
        while True:
            sys.stderr.write(f"  class ({classes}): ")
            sys.stderr.flush()
            line = sys.stdin.readline()
            if line == "":
                raise IoFailure("stdin closed before the budget was spent")
            label = canonical_label(line)
            if label in allowed:
                return label
            sys.stderr.write(f"  unknown class {label!r}\n")

    return provider


def _verbalizers_from_export(doc: dict, space) -> VerbalizerSet:
    verbs = VerbalizerSet()
    try:
        entries = doc["verbalizers"]
        for entry in entries:
            row = int(entry["token_index"])
            if not (0 <= row < len(space)) or space.items[row].kind != ItemKind.TOKEN \
                    or space.id_of(row) != entry["token_id"]:
                raise DataError(f"session verbalizer {entry['token_id']!r} does not match "
                                f"the prepared space (row {row})")
            verbs.add(VerbalizerEntry(
                token_id=entry["token_id"],
                token_index=row,
                class_name=entry["class"],
                acquired_at=int(entry["acquired_at"]),
                vector=space.vectors[row].copy(),
            ))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"session file is malformed: {exc}") from exc
    return verbs


# --- subcommands ----------------------------------------------------------------


def cmd_prepare(args) -> int:
    opts = _Options(args)
    vocab_path = opts.get("vocab", required=True)
    inst_path = opts.get("instances", required=True)
    vocab = load_embedding_set(vocab_path)
    instances = load_embedding_set(inst_path)
    if vocab.kind != SetKind.VOCAB:
        raise DataError(f"{vocab_path}: expected kind=vocab, found {vocab.kind.value}")
    if instances.kind != SetKind.INSTANCE:
        raise DataError(f"{inst_path}: expected kind=instance, found {instances.kind.value}")

    texts_path = opts.get("texts")
    if texts_path is not None:
        known = set(instances.ids)
        for t in load_instance_texts(texts_path):
            if t.id not in known:
                raise DataError(f"{texts_path}: text for unknown instance id {t.id!r}")

    space = build_shared_space(vocab, instances, int(opts.get("reduced_dim", 64)))
    clustering = kmeans(space, int(opts.get("k", 40)), int(opts.get("seed", 42)))
    clustering = refine_by_silhouette(space, clustering, int(opts.get("refine_iterations", 5)))
    clustering = refine_clusters(space, clustering)

    out_dir = opts.get("out", required=True)
    manifest = artifacts.write_prepared(out_dir, space, clustering)
    n_discarded = int((clustering.assignment == DISCARDED).sum())
    print(f"prepared {out_dir}: {vocab.count} tokens + {instances.count} instances -> "
          f"{len(clustering.clusters)} clusters, {n_discarded} tokens discarded, "
          f"reduced dim {space.reduced_dim}")
    if space.pca_model.rank_deficient:
        print("note: covariance is rank deficient; trailing components carry no variance")
    for name in sorted(manifest["artifacts"]):
        print(f"  {name}  sha256 {manifest['artifacts'][name][:12]}")
    return EXIT_OK


def cmd_select(args) -> int:
    opts = _Options(args)
    space, clustering = artifacts.load_prepared(opts.get("prepared", required=True))
    config, strategy = _session_config(opts)

    oracle_path = opts.get("oracle")
    if oracle_path is not None:
        provider = _oracle_provider(oracle_path, config.label_space)
    else:
        provider = _stdin_provider(_load_texts_map(opts.get("texts")), config.label_space)

    try:
        state = run_strategy(strategy, clustering, space, config, provider)
    except ProviderFailure as exc:
        # Oracle-file problems are data errors; surface them as such.
        if isinstance(exc.__cause__, DataError):
            raise exc.__cause__
        raise

    blob = canonical_json(export_session(state, config, strategy, clustering, space))
    out = opts.get("out")
    if out is None:
        sys.stdout.write(blob.decode("utf-8"))
    else:
        try:
            Path(out).write_bytes(blob)
        except OSError as exc:
            raise IoFailure(f"cannot write {out}: {exc}") from exc
        print(f"session written to {out}: {len(state.events)} labels, "
              f"{len(state.verbalizers)} verbalizers")
    return EXIT_OK


def cmd_eval(args) -> int:
    opts = _Options(args)
    space, _ = artifacts.load_prepared(opts.get("prepared", required=True))
    session_doc = _read_json_file(opts.get("session", required=True))
    if not isinstance(session_doc, dict) or "config" not in session_doc:
        raise DataError("session file is not a session export")
    verbs = _verbalizers_from_export(session_doc, space)
    try:
        label_space = tuple(session_doc["config"]["label_space"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"session file is malformed: {exc}") from exc

    test_set = load_embedding_set(opts.get("test", required=True))
    gold = _read_json_file(opts.get("gold", required=True))
    if not isinstance(gold, dict) or not all(isinstance(v, str) for v in gold.values()):
        raise DataError("gold file must map instance id to class name")

    aggregation = opts.get("aggregation", AGG_MAX)
    if aggregation not in (AGG_MAX, AGG_MEAN):
        raise _CliUsage(f"unknown aggregation {aggregation!r}")
    report = evaluate(test_set, gold, verbs, space.pca_model, label_space, aggregation)
    print(render_report(report))
    out = opts.get("out")
    if out is not None:
        try:
            Path(out).write_bytes(canonical_json(report.to_dict()))
        except OSError as exc:
            raise IoFailure(f"cannot write {out}: {exc}") from exc
    return EXIT_OK


def cmd_simulate(args) -> int:
    opts = _Options(args)
    defaults = benchmark.BenchmarkSettings()
    aggregation = opts.get("aggregation", defaults.aggregation)
    if aggregation not in (AGG_MAX, AGG_MEAN):
        raise _CliUsage(f"unknown aggregation {aggregation!r}")
    settings = benchmark.BenchmarkSettings(
        n_classes=int(opts.get("classes", defaults.n_classes)),
        instances_per_class=int(opts.get("instances_per_class", defaults.instances_per_class)),
        tokens_per_class=int(opts.get("tokens_per_class", defaults.tokens_per_class)),
        outlier_tokens=int(opts.get("outlier_tokens", defaults.outlier_tokens)),
        dim=int(opts.get("dim", defaults.dim)),
        class_separation=float(opts.get("separation", defaults.class_separation)),
        test_per_class=int(opts.get("test_per_class", defaults.test_per_class)),
        reduced_dim=int(opts.get("reduced_dim", defaults.reduced_dim)),
        k=int(opts.get("k", defaults.k)),
        refine_iterations=int(opts.get("refine_iterations", defaults.refine_iterations)),
        aggregation=aggregation,
        budgets=tuple(_as_int_list(opts.get("budgets", list(defaults.budgets)), "budgets")),
        seeds=tuple(range(int(opts.get("seeds", len(defaults.seeds))))),
    )
    out = opts.get("out", required=True)

    def progress(message: str) -> None:
        print(message, file=sys.stderr)

    rows = benchmark.simulate_matrix(settings, progress=progress)
    benchmark.write_csv(out, rows + benchmark.summarize(rows))
    print(f"wrote {out}: {len(rows)} rows + {len(benchmark.summarize(rows))} summary rows")
    for row in benchmark.summarize(rows):
        print(f"  {row['strategy']:<10} budget {row['budget']:>3}  "
              f"accuracy {row['accuracy']:.4f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import SessionService, create_app  # heavy import, only when serving
    import uvicorn

    opts = _Options(args)
    prepared = opts.get("prepared", required=True)
    space, clustering = artifacts.load_prepared(prepared)
    config, strategy = _session_config(opts)
    if strategy != STRATEGY_COLDSELECT:
        raise _CliUsage("serve drives the default strategy only")

    event_log = opts.get("event_log", str(Path(prepared) / "events.jsonl"))
    service = SessionService(
        space, clustering, config,
        texts=_load_texts_map(opts.get("texts")),
        event_log_path=event_log,
    )
    if bool(opts.get("fresh", False)):
        service.discard_log()
    replayed = service.start()
    if replayed:
        print(f"resumed {replayed} labels from {event_log}")

    host = opts.get("host", "127.0.0.1")
    port = int(opts.get("port", DEFAULT_PORT))
    print(f"serving on http://{host}:{port}")
    uvicorn.run(create_app(service), host=host, port=port, log_level="warning")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------


def _add_common(sub) -> None:
    sub.add_argument("--config", help="flat JSON config file; flags override it")


def _add_session_options(sub) -> None:
    sub.add_argument("--prepared", help="directory written by prepare")
    sub.add_argument("--budget", type=int, help="number of labels to collect")
    sub.add_argument("--labels", help="comma-separated class names")
    sub.add_argument("--strategy", help=f"one of {', '.join(STRATEGIES)}")
    sub.add_argument("--seed", type=int, help="session seed (default 42)")
    sub.add_argument("--ablation", help="score terms to keep (default all three)")
    sub.add_argument("--separation-mode", dest="separation_mode",
                     help="literal (default) or negated")
    sub.add_argument("--impurity-denominator", dest="impurity_denominator",
                     help="all_instances (default) or labeled_only")
    sub.add_argument("--eq16-literal", dest="eq16_literal", action="store_true", default=None,
                     help="pick follow-up instances by max-min similarity")
    sub.add_argument("--texts", help="JSONL sidecar with instance texts")


def _build_parser() -> _Parser:
    parser = _Parser(prog="clozeselect", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", metavar="command")

    p = commands.add_parser("prepare", help="reduce, normalize and cluster embeddings")
    _add_common(p)
    p.add_argument("--vocab", help="vocab .cseb file")
    p.add_argument("--instances", help="instance .cseb file")
    p.add_argument("--texts", help="JSONL sidecar with instance texts")
    p.add_argument("--out", help="output directory for the artifacts")
    p.add_argument("--reduced-dim", dest="reduced_dim", type=int, help="PCA dimension (default 64)")
    p.add_argument("--k", type=int, help="number of clusters (default 40)")
    p.add_argument("--refine-iterations", dest="refine_iterations", type=int,
                   help="silhouette refinement passes (default 5)")
    p.add_argument("--seed", type=int, help="clustering seed (default 42)")
    p.set_defaults(func=cmd_prepare)

    p = commands.add_parser("select", help="run a labeling session")
    _add_common(p)
    _add_session_options(p)
    p.add_argument("--oracle", help="JSON file mapping instance id to class; "
                                    "omit to answer interactively on stdin")
    p.add_argument("--out", help="write the session export here (default stdout)")
    p.set_defaults(func=cmd_select)

    p = commands.add_parser("eval", help="score an exported session on held-out instances")
    _add_common(p)
    p.add_argument("--prepared", help="directory written by prepare")
    p.add_argument("--session", help="session export from select")
    p.add_argument("--test", help="held-out instance .cseb file")
    p.add_argument("--gold", help="JSON file mapping test instance id to class")
    p.add_argument("--aggregation", help="max (default) or mean")
    p.add_argument("--out", help="also write the report as JSON here")
    p.set_defaults(func=cmd_eval)

    p = commands.add_parser("simulate", help="run the synthetic benchmark matrix")
    _add_common(p)
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--classes", type=int)
    p.add_argument("--instances-per-class", dest="instances_per_class", type=int)
    p.add_argument("--tokens-per-class", dest="tokens_per_class", type=int)
    p.add_argument("--outlier-tokens", dest="outlier_tokens", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--test-per-class", dest="test_per_class", type=int)
    p.add_argument("--reduced-dim", dest="reduced_dim", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--refine-iterations", dest="refine_iterations", type=int)
    p.add_argument("--aggregation", help="max or mean (default mean)")
    p.add_argument("--budgets", help="comma-separated budgets (default 8,16,32)")
    p.add_argument("--seeds", type=int, help="number of seeds (default 20)")
    p.set_defaults(func=cmd_simulate)

    p = commands.add_parser("serve", help="expose a session over HTTP")
    _add_common(p)
    _add_session_options(p)
    p.add_argument("--host", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, help=f"TCP port (default {DEFAULT_PORT})")
    p.add_argument("--event-log", dest="event_log",
                   help="JSONL event log (default <prepared>/events.jsonl)")
    p.add_argument("--fresh", action="store_true", default=None,
                   help="discard an existing event log instead of resuming")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _CliUsage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        return args.func(args)
    except _CliUsage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleSpec as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ClozeSelectError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:  # pragma: no cover - last resort
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
