"""``relgrade`` command line: the retrieval, grading and training pipeline as subcommands.

Every subcommand reads its inputs from explicit paths (defaulting to the
conventional file names inside ``--out``) and writes only into ``--out``.
Settings come from built-in defaults, then a flat TOML file given with
``--config``, then flags; later sources win. The merged settings are logged
and echoed to ``<out>/config.<subcommand>.toml``.

Exit status: 0 on success, 1 on usage or domain errors, 2 on I/O failures.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from relgrade.corpus import (
    Corpus,
    RetrievalConfig,
    build_index,
    document_to_json,
    generate_pairs,
    positive_fraction,
    query_to_json,
    read_pairs,
    similarity_histogram,
    write_jsonl,
    write_pairs,
)
from relgrade.errors import DomainError, RelgradeError, UsageError
from relgrade.evaluation import compare
from relgrade.grading import (
    JudgeConfig,
    grade_with_head,
    grade_with_judge,
    grade_with_threshold,
    load_gold_labels,
    read_verdicts,
    write_verdicts,
)
from relgrade.index import HnswIndex, HnswParams
from relgrade.synthetic import SyntheticSpec, generate
from relgrade.training import ClassifierHead, TrainingConfig, class_counts, stratified_split, train

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger("relgrade")

DOCUMENTS = "documents.jsonl"
QUERIES = "queries.jsonl"
GOLD = "gold.jsonl"
PAIRS = "pairs.jsonl"
TRAIN = "train.jsonl"
TEST = "test.jsonl"
INDEX = "index.hnsw"
CHECKPOINT = "head.json"
TRAIN_LOG = "train_log.csv"
REPORT_CSV = "report.csv"
REPORT_TEXT = "report.txt"
HISTOGRAM = "histogram.csv"

LOSS_NAMES = {"ce": "cross_entropy", "contrastive": "contrastive"}
RESAMPLE_NAMES = {"none": "none", "over": "oversample", "under": "undersample"}


class ArgumentParser(argparse.ArgumentParser):
    """Argparse with usage errors mapped to exit status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


@dataclass(frozen=True)
class Option:
    flags: tuple[str, ...]
    default: Any
    type: Callable | None = None
    choices: tuple | None = None
    help: str = ""


# Every setting, keyed by its name in the config file. Flags mirror the names.
OPTIONS: dict[str, Option] = {
    "seed": Option(("--seed",), 0, int, help="seed for every stochastic step"),
    "dim": Option(("--dim",), None, int, help="embedding dimension (inferred when unset)"),
    "documents": Option(("--documents",), None, str, help=f"documents JSONL (default <out>/{DOCUMENTS})"),
    "queries": Option(("--queries",), None, str, help=f"queries JSONL (default <out>/{QUERIES})"),
    "gold": Option(("--gold",), None, str, help=f"gold labels JSONL (default <out>/{GOLD} if present)"),
    "pairs": Option(("--pairs",), None, str, help="pairs JSONL"),
    "index_file": Option(("--index-file",), None, str, help=f"HNSW index file (default <out>/{INDEX})"),
    "checkpoint": Option(("--checkpoint",), None, str, help=f"head checkpoint (default <out>/{CHECKPOINT})"),
    "train_pairs": Option(("--train-pairs",), None, str, help=f"training pairs (default <out>/{TRAIN})"),
    "test_pairs": Option(("--test-pairs",), None, str, help=f"test pairs (default <out>/{TEST} if present)"),
    "verdicts": Option(("--verdicts",), None, str, help="comma-separated verdict files (default <out>/verdicts_*.jsonl)"),
    # retrieval
    "k": Option(("--k",), 5, int, help="documents retrieved per query and day"),
    "window_start": Option(("--window-start",), None, _date, help="first retrieval day (default earliest date)"),
    "window_end": Option(("--window-end",), None, _date, help="last retrieval day (default latest date)"),
    "index": Option(("--index",), "hnsw", str, ("hnsw", "brute"), "index used for retrieval"),
    "dedupe": Option(("--dedupe",), False, None, help="keep only the first retrieval of each (query, doc)"),
    "m": Option(("--m",), 16, int, help="HNSW out-degree M"),
    "ef_construction": Option(("--ef-construction",), 200, int, help="HNSW build beam width"),
    "ef_search": Option(("--ef-search",), 100, int, help="HNSW query beam width"),
    "heuristic": Option(("--heuristic",), False, None, help="diversity heuristic for HNSW neighbor selection"),
    # grading
    "grader": Option(("--grader",), None, str, ("judge", "threshold", "head"), "grader to run"),
    "t": Option(("--t",), None, float, help="cosine threshold for the threshold grader"),
    "endpoint": Option(("--endpoint",), None, str, help="judge chat-completions URL"),
    "model": Option(("--model",), None, str, help="judge model name"),
    "judge_timeout": Option(("--judge-timeout",), 60.0, float, help="seconds per judge request"),
    "max_retries": Option(("--max-retries",), 2, int, help="judge retries per pair"),
    "parallelism": Option(("--parallelism",), 4, int, help="judge requests in flight"),
    # training
    "test_fraction": Option(("--test-fraction",), 0.2, float, help="share of each class held out"),
    "loss": Option(("--loss",), "ce", str, tuple(LOSS_NAMES), "training loss"),
    "margin": Option(("--margin",), 1.0, float, help="contrastive margin m"),
    "lr": Option(("--lr",), 1e-3, float, help="peak learning rate"),
    "final_lr_fraction": Option(("--final-lr-fraction",), 0.1, float, help="final lr as a share of peak"),
    "epochs": Option(("--epochs",), 20, int, help="training epochs"),
    "batch": Option(("--batch",), 256, int, help="minibatch size"),
    "resample": Option(("--resample",), "none", str, tuple(RESAMPLE_NAMES), "class rebalancing"),
    "weight_decay": Option(("--weight-decay",), 0.01, float, help="AdamW decoupled weight decay"),
    # synthetic data and reports
    "n_documents": Option(("--n-documents",), 10_000, int, help="synthetic documents (one planted pair each)"),
    "n_queries": Option(("--n-queries",), 160, int, help="synthetic queries"),
    "positive_rate": Option(("--positive-rate",), 0.123, float, help="share of planted pairs that are relevant"),
    "noise": Option(("--noise",), 1.0, float, help="synthetic noise scale"),
    "n_days": Option(("--n-days",), 30, int, help="days spanned by synthetic documents"),
    "start_date": Option(("--start-date",), dt.date(2024, 1, 1), _date, help="first synthetic date"),
    "bins": Option(("--bins",), 50, int, help="histogram bins"),
}

CORPUS = ("dim", "documents", "queries")
HNSW = ("m", "ef_construction", "ef_search", "heuristic")

COMMANDS: dict[str, tuple[str, tuple[str, ...]]] = {
    "ingest": ("validate documents and queries and write normalized copies", CORPUS),
    "build-index": ("build the HNSW index over all documents", ("dim", "documents", *HNSW)),
    "generate-pairs": ("replay daily top-k retrieval into pairs",
                       (*CORPUS, "gold", "k", "window_start", "window_end", "index", "dedupe", *HNSW)),
    "grade": ("label pairs with a grader",
              (*CORPUS, "pairs", "grader", "t", "checkpoint", "endpoint", "model",
               "judge_timeout", "max_retries", "parallelism")),
    "split": ("stratified train/test split", ("pairs", "gold", "test_fraction")),
    "train": ("train the classification head",
              (*CORPUS, "train_pairs", "test_pairs", "loss", "margin", "lr", "final_lr_fraction",
               "epochs", "batch", "resample", "weight_decay")),
    "evaluate": ("score graders against ground truth", (*CORPUS, "pairs", "gold", "verdicts", "checkpoint")),
    "report": ("cosine histogram of a pair set", ("pairs", "bins")),
    "synth": ("generate a synthetic corpus with planted labels",
              ("dim", "n_documents", "n_queries", "positive_rate", "noise", "n_days", "start_date")),
    "validate-index": ("check structural invariants of an index file", ("index_file",)),
}


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="relgrade", description="Relevance grading pipeline for retrieval results.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    sub.required = True
    for name, (summary, keys) in COMMANDS.items():
        p = sub.add_parser(name, help=summary, description=summary)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="flat TOML file of settings; flags override it")
        p.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
        for key in ("seed", *keys):
            opt = OPTIONS[key]
            kwargs: dict[str, Any] = {"dest": key, "default": None, "help": opt.help}
            if opt.type is None:
                kwargs["action"] = "store_const"
                kwargs["const"] = True
            else:
                kwargs["type"] = opt.type
                if opt.choices:
                    kwargs["choices"] = opt.choices
            p.add_argument(*opt.flags, **kwargs)
    return parser


def _coerce(key: str, value: Any) -> Any:
    opt = OPTIONS[key]
    if opt.type is None:
        if not isinstance(value, bool):
            raise UsageError(f"config key {key!r} must be true or false")
        return value
    if opt.type is _date and isinstance(value, dt.date):
        return value
    if isinstance(value, bool) or isinstance(value, (dict, list)):
        raise UsageError(f"config key {key!r} has an invalid value {value!r}")
    try:
        value = opt.type(value) if opt.type is not _date else _date(str(value))
    except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"config key {key!r}: {exc}") from None
    if opt.choices and value not in opt.choices:
        raise UsageError(f"config key {key!r} must be one of {opt.choices}")
    return value


def load_config(path) -> dict[str, Any]:
    """Read a flat TOML settings file; unknown keys are rejected."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{path}: {exc}") from None
    unknown = sorted(set(raw) - set(OPTIONS))
    if unknown:
        raise UsageError(f"{path}: unknown config keys {', '.join(unknown)}")
    return {key: _coerce(key, value) for key, value in raw.items()}


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, config file and flags for the options of ``args.command``."""
    keys = ("seed", *COMMANDS[args.command][1])
    from_file = load_config(args.config) if args.config else {}
    settings = {}
    for key in keys:
        flag = getattr(args, key)
        if flag is not None:
            settings[key] = flag
        elif key in from_file:
            settings[key] = from_file[key]
        else:
            settings[key] = OPTIONS[key].default
    return settings


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, dt.date):
        return value.isoformat()
    return json.dumps(str(value))


def config_toml(settings: dict[str, Any]) -> str:
    """Render settings as a flat TOML document; unset values are left out."""
    return "".join(f"{k} = {_toml_value(v)}\n" for k, v in sorted(settings.items()) if v is not None)


class Run:
    """Shared state of one subcommand invocation."""

    def __init__(self, command: str, out: Path, settings: dict[str, Any]) -> None:
        self.command = command
        self.out = out
        self.s = settings

    def path(self, key: str, default_name: str) -> Path:
        value = self.s.get(key)
        return Path(value) if value else self.out / default_name

    def optional_path(self, key: str, default_name: str) -> Path | None:
        value = self.s.get(key)
        if value:
            return Path(value)
        candidate = self.out / default_name
        return candidate if candidate.exists() else None

    def eval_pairs_path(self) -> Path:
        # the held-out split when there is one, otherwise the full pair set
        if self.s.get("pairs"):
            return Path(self.s["pairs"])
        test = self.out / TEST
        return test if test.exists() else self.out / PAIRS

    def corpus(self, queries: bool = True) -> Corpus:
        corpus = Corpus(self.s.get("dim"))
        n_docs = corpus.ingest_documents(self.path("documents", DOCUMENTS))
        n_queries = corpus.ingest_queries(self.path("queries", QUERIES)) if queries else 0
        logger.info("loaded %d documents and %d queries (dim %s)", n_docs, n_queries, corpus.dim)
        return corpus

    def hnsw_params(self) -> HnswParams:
        return HnswParams(m=self.s["m"], ef_construction=self.s["ef_construction"],
                          ef_search=self.s["ef_search"], heuristic=bool(self.s["heuristic"]))

    def load_pairs(self, path: Path, gold_key: str = "gold"):
        pairs = read_pairs(path)
        gold = self.optional_path(gold_key, GOLD)
        if gold is not None:
            pairs, report = load_gold_labels(gold, pairs)
            logger.info("gold labels from %s: %d matched, %d pairs unlabeled", gold,
                        report.matched, report.unlabeled)
        return pairs


def _labeled_only(pairs):
    labeled = [p for p in pairs if p.label is not None]
    if len(labeled) < len(pairs):
        logger.warning("dropping %d unlabeled pairs", len(pairs) - len(labeled))
    return labeled


def cmd_ingest(run: Run) -> None:
    corpus = run.corpus()
    docs_out, queries_out = run.out / DOCUMENTS, run.out / QUERIES
    sources = {run.path("documents", DOCUMENTS).resolve(), run.path("queries", QUERIES).resolve()}
    if docs_out.resolve() not in sources:
        write_jsonl(docs_out, (document_to_json(d) for d in sorted(corpus.documents.values(),
                                                                     key=lambda d: d.doc_id)))
    if queries_out.resolve() not in sources:
        write_jsonl(queries_out, (query_to_json(q) for q in sorted(corpus.queries.values(),
                                                                    key=lambda q: q.query_id)))
    dates = corpus.dates()
    summary = {
        "dim": corpus.dim,
        "documents": len(corpus.documents),
        "queries": len(corpus.queries),
        "first_date": dates[0].isoformat() if dates else None,
        "last_date": dates[-1].isoformat() if dates else None,
    }
    (run.out / "corpus_summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary))


def cmd_build_index(run: Run) -> None:
    corpus = run.corpus(queries=False)
    config = RetrievalConfig(index="hnsw", hnsw=run.hnsw_params(), seed=run.s["seed"])
    index = build_index(corpus, config)
    index.save(run.out / INDEX)
    problems = index.validate()
    if problems:
        raise DomainError("built index fails validation: " + "; ".join(problems))
    print(f"indexed {len(index)} documents into {run.out / INDEX}")


def cmd_generate_pairs(run: Run) -> None:
    corpus = run.corpus()
    dates = corpus.dates()
    if not dates:
        raise DomainError("corpus has no documents")
    window = (run.s["window_start"] or dates[0], run.s["window_end"] or dates[-1])
    config = RetrievalConfig(k=run.s["k"], index=run.s["index"], hnsw=run.hnsw_params(),
                             seed=run.s["seed"], dedupe=bool(run.s["dedupe"]))
    pairs = generate_pairs(corpus, window, config)
    gold = run.optional_path("gold", GOLD)
    if gold is not None:
        pairs, report = load_gold_labels(gold, pairs)
        logger.info("gold labels: %d matched, %d pairs unlabeled", report.matched, report.unlabeled)
    write_pairs(run.out / PAIRS, pairs)
    print(f"wrote {len(pairs)} pairs for {window[0]}..{window[1]} to {run.out / PAIRS}")


def cmd_grade(run: Run) -> None:
    grader = run.s["grader"]
    if grader is None:
        raise UsageError("--grader is required")
    pairs = read_pairs(run.eval_pairs_path())
    if grader == "threshold":
        if run.s["t"] is None:
            raise UsageError("--t is required for the threshold grader")
        verdicts = grade_with_threshold(pairs, run.s["t"])
    elif grader == "head":
        head = ClassifierHead.load(run.path("checkpoint", CHECKPOINT))
        verdicts = grade_with_head(pairs, head, run.corpus())
    else:
        if not run.s["endpoint"] or not run.s["model"]:
            raise UsageError("--endpoint and --model are required for the judge grader")
        config = JudgeConfig(endpoint=run.s["endpoint"], model=run.s["model"],
                             timeout=run.s["judge_timeout"], max_retries=run.s["max_retries"],
                             parallelism=run.s["parallelism"])
        verdicts = grade_with_judge(pairs, run.corpus(), config)
    target = run.out / f"verdicts_{grader}.jsonl"
    write_verdicts(target, verdicts)
    positives = sum(1 for v in verdicts if v.relevant)
    print(f"{grader}: {positives} of {len(verdicts)} pairs relevant -> {target}")


def cmd_split(run: Run) -> None:
    pairs = _labeled_only(run.load_pairs(run.path("pairs", PAIRS)))
    train_set, test_set = stratified_split(pairs, run.s["test_fraction"], run.s["seed"])
    write_pairs(run.out / TRAIN, train_set)
    write_pairs(run.out / TEST, test_set)
    print(f"train {len(train_set)} ({class_counts(train_set)[0]} relevant), "
          f"test {len(test_set)} ({class_counts(test_set)[0]} relevant)")


def cmd_train(run: Run) -> None:
    corpus = run.corpus()
    train_set = _labeled_only(read_pairs(run.path("train_pairs", TRAIN)))
    test_path = run.optional_path("test_pairs", TEST)
    test_set = _labeled_only(read_pairs(test_path)) if test_path else []
    config = TrainingConfig(
        loss=LOSS_NAMES[run.s["loss"]], margin=run.s["margin"], peak_lr=run.s["lr"],
        final_lr_fraction=run.s["final_lr_fraction"], epochs=run.s["epochs"],
        batch_size=run.s["batch"], resampling=RESAMPLE_NAMES[run.s["resample"]],
        seed=run.s["seed"], weight_decay=run.s["weight_decay"],
    )
    report = train(train_set, test_set, corpus, config)
    report.head.save(run.out / CHECKPOINT, config=config.to_dict(), seed=config.seed)
    report.write_csv(run.out / TRAIN_LOG)
    last = report.epochs[-1] if report.epochs else None
    print(f"trained {report.head.n_parameters} parameters on {report.n_positive}+{report.n_negative} "
          f"pairs; final loss {last.train_loss:.6f}" if last else "trained 0 epochs")


def cmd_evaluate(run: Run) -> None:
    pairs = _labeled_only(run.load_pairs(run.eval_pairs_path()))
    if not pairs:
        raise DomainError("no labeled pairs to evaluate against")
    keys = {p.key for p in pairs}
    graders = []
    if run.s["verdicts"]:
        files = [Path(p) for p in str(run.s["verdicts"]).split(",") if p]
    else:
        files = sorted(run.out.glob("verdicts_*.jsonl"))
    for path in files:
        verdicts = [v for v in read_verdicts(path) if v.key in keys]
        graders.append((path.stem.removeprefix("verdicts_"), verdicts))
    checkpoint = run.optional_path("checkpoint", CHECKPOINT)
    if checkpoint is not None and not any(name == "head" for name, _ in graders):
        graders.append(("head", grade_with_head(pairs, ClassifierHead.load(checkpoint), run.corpus())))
    if not graders:
        raise UsageError("nothing to evaluate: no verdict files and no head checkpoint")
    report = compare(graders, pairs)
    report.write(run.out / REPORT_CSV, run.out / REPORT_TEXT)
    sys.stdout.write(report.to_text())


def cmd_report(run: Run) -> None:
    pairs = run.load_pairs(run.path("pairs", PAIRS))
    fully_labeled = all(p.label is not None for p in pairs)
    if not fully_labeled:
        logger.warning("some pairs are unlabeled; histogram has no per-label counts")
    hist = similarity_histogram(pairs, bins=run.s["bins"], by_label=fully_labeled)
    hist.to_csv(run.out / HISTOGRAM)
    line = f"{len(pairs)} pairs, histogram -> {run.out / HISTOGRAM}"
    if any(p.label is not None for p in pairs):
        line += f", positive fraction {positive_fraction(pairs):.4f}"
    print(line)


def cmd_synth(run: Run) -> None:
    s = run.s
    spec = SyntheticSpec(
        dim=s["dim"] or 384, n_documents=s["n_documents"], n_queries=s["n_queries"],
        positive_rate=s["positive_rate"], noise=s["noise"], seed=s["seed"],
        n_days=s["n_days"], start_date=s["start_date"],
    )
    dataset = generate(spec)
    dataset.write(run.out)
    print(f"wrote {spec.n_documents} documents, {spec.n_queries} queries and "
          f"{spec.n_positive} relevant planted pairs to {run.out}")


def cmd_validate_index(run: Run) -> None:
    path = run.path("index_file", INDEX)
    index = HnswIndex.load(path)
    problems = index.validate()
    for problem in problems:
        print(problem, file=sys.stderr)
    if problems:
        raise DomainError(f"{path}: {len(problems)} invariant violations")
    print(f"{path}: ok ({len(index)} nodes, top layer {index.max_level})")


HANDLERS = {
    "ingest": cmd_ingest,
    "build-index": cmd_build_index,
    "generate-pairs": cmd_generate_pairs,
    "grade": cmd_grade,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "synth": cmd_synth,
    "validate-index": cmd_validate_index,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        settings = resolve(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        echo = config_toml(settings)
        logger.info("%s seed=%s effective config:\n%s", args.command, settings["seed"], echo.rstrip())
        (out / f"config.{args.command}.toml").write_text(echo, encoding="utf-8")
        HANDLERS[args.command](Run(args.command, out, settings))
    except (RelgradeError, ValueError) as exc:
        print(f"relgrade {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"relgrade {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
