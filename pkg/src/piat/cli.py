"""Command-line driver and file formats.

Commands: gen, train, attack, evaluate, verify, sweep. Exit codes: 0 success,
1 validation error, 2 verification inequality violated, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .attack import AttackBudget, AttackResult
from .core import CandidateSet, RankedList, TokenDoc, TokenQuery, ValidationError, Vocabulary
from .datagen import Corpus, Example, GenConfig, SynonymLexicon, generate
from .evaluate import QueryAttack, attack_queries, evaluate
from .losses import AdvVariant
from .metrics import MetricsReport
from .model import ScoringModel
from .robustness import InvariantViolation, verify_inequalities
from .train import Method, TrainConfig, TrainLog, train, with_lambda

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VIOLATION = 2
EXIT_RUNTIME = 3

DEFAULT_LAMBDAS = (0.2, 0.35, 0.5, 0.65, 0.8)
SWEEP_HEADER = ("lambda", "variant", "clean_mrr@10", "robust_mrr@10", "asr", "lsd")


# ---------------------------------------------------------------- config


def _default_gen() -> GenConfig:
    return GenConfig(vocab_size=120, n_queries=600, n_eval_queries=200, n_synonym_classes=20)


def _default_train() -> TrainConfig:
    return TrainConfig(learning_rate=1.0, epochs=50, embedding_dim=32, adv_fraction=0.3)


@dataclass(frozen=True)
class EvalConfig:
    ks: tuple[int, ...] = (1, 10)
    attack_seed: int = 0

    def validate(self) -> None:
        if not self.ks or any(k < 1 for k in self.ks):
            raise ValidationError("eval.ks must be a non-empty list of cutoffs >= 1")


@dataclass(frozen=True)
class SweepConfig:
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    variants: tuple[str, ...] = ("KL", "ListNet", "ListMLE")

    def validate(self) -> None:
        if not self.lambdas:
            raise ValidationError("sweep.lambdas must not be empty")
        for lam in self.lambdas:
            if not 0.0 <= lam <= 1.0:
                raise ValidationError(f"sweep lambda {lam} outside [0, 1]")
        for v in self.variants:
            AdvVariant(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Every section has defaults; unknown keys are rejected."""

    gen: GenConfig = field(default_factory=_default_gen)
    train: TrainConfig = field(default_factory=_default_train)
    budget: AttackBudget = field(default_factory=AttackBudget)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def validate(self) -> None:
        self.gen.validate()
        self.train.validate()
        self.eval.validate()
        self.sweep.validate()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
        base = cls()
        gen = GenConfig.from_dict({**base.gen.to_dict(), **d.get("gen", {})})
        tr = base.train.to_dict()
        user_train = dict(d.get("train", {}))
        if "tradeoff" in user_train:
            tr["tradeoff"] = {**tr["tradeoff"], **user_train.pop("tradeoff")}
        tr.update(user_train)
        train_cfg = TrainConfig.from_dict(tr)
        budget = AttackBudget(**_checked(d.get("budget", {}), AttackBudget, "budget"))
        ev = _checked(d.get("eval", {}), EvalConfig, "eval")
        if "ks" in ev:
            ev["ks"] = tuple(int(k) for k in ev["ks"])
        sw = _checked(d.get("sweep", {}), SweepConfig, "sweep")
        for key in ("lambdas", "variants"):
            if key in sw:
                sw[key] = tuple(sw[key])
        cfg = cls(gen, train_cfg, budget, EvalConfig(**ev), SweepConfig(**sw))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "gen": self.gen.to_dict(),
            "train": self.train.to_dict(),
            "budget": {"epsilon": self.budget.epsilon, "k_max": self.budget.k_max},
            "eval": {"ks": list(self.eval.ks), "attack_seed": self.eval.attack_seed},
            "sweep": {"lambdas": list(self.sweep.lambdas), "variants": list(self.sweep.variants)},
        }


def _checked(section, cls, name: str) -> dict:
    if not isinstance(section, dict):
        raise ValidationError(f"config section {name!r} must be an object")
    unknown = set(section) - {f.name for f in fields(cls)}
    if unknown:
        raise ValidationError(f"unknown {name} config keys: {sorted(unknown)}")
    return dict(section)


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: malformed JSON ({exc.msg})") from None
    try:
        return ExperimentConfig.from_dict(raw)
    except TypeError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Command-line flags win over file values."""
    gen, tr, budget, ev = cfg.gen, cfg.train, cfg.budget, cfg.eval
    if getattr(args, "seed", None) is not None:
        gen = replace(gen, seed=args.seed)
        tr = replace(tr, seed=args.seed)
        ev = replace(ev, attack_seed=args.seed)
    if getattr(args, "method", None) is not None:
        tr = replace(tr, method=Method(args.method))
    if getattr(args, "lam", None) is not None:
        tr = with_lambda(tr, args.lam)
    if getattr(args, "variant", None) is not None:
        tr = replace(tr, tradeoff=replace(tr.tradeoff, adv_variant=AdvVariant(args.variant)))
    if getattr(args, "epochs", None) is not None:
        tr = replace(tr, epochs=args.epochs)
    if getattr(args, "lr", None) is not None:
        tr = replace(tr, learning_rate=args.lr)
    if getattr(args, "epsilon", None) is not None or getattr(args, "k_max", None) is not None:
        budget = AttackBudget(
            args.epsilon if args.epsilon is not None else budget.epsilon,
            args.k_max if args.k_max is not None else budget.k_max,
        )
    if getattr(args, "k", None):
        ev = replace(ev, ks=tuple(args.k))
    out = replace(cfg, gen=gen, train=tr, budget=budget, eval=ev)
    out.validate()
    return out


# ---------------------------------------------------------------- io


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def atomic_write(path: str | Path, text: str) -> None:
    """Write ``text`` next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ValidationError(f"{path}:{lineno}: expected a JSON object")
            out.append((lineno, obj))
    return out


def _read_tsv(path: Path, n_cols: int) -> list[tuple[int, list[str]]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != n_cols:
                raise ValidationError(f"{path}:{lineno}: expected {n_cols} tab-separated columns, got {len(cols)}")
            out.append((lineno, cols))
    return out


def _tokens(obj: dict, path: Path, lineno: int) -> tuple[int, ...]:
    toks = obj.get("tokens")
    if not isinstance(toks, list) or not toks or not all(isinstance(t, int) and not isinstance(t, bool) for t in toks):
        raise ValidationError(f"{path}:{lineno}: 'tokens' must be a non-empty list of integers")
    return tuple(toks)


def vocab_hash(vocab: Vocabulary) -> str:
    return hashlib.sha256(json.dumps(list(vocab.words)).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Dataset:
    vocab: Vocabulary
    lexicon: SynonymLexicon
    train: tuple[Example, ...]
    eval: tuple[Example, ...]

    @property
    def examples(self) -> tuple[Example, ...]:
        return self.train + self.eval


def write_dataset(corpus: Corpus, out: str | Path) -> None:
    out = Path(out)
    atomic_write(out / "vocab.json", _dumps({"words": list(corpus.vocab.words)}))
    atomic_write(out / "synonyms.json", _dumps({"groups": [list(g) for g in corpus.lexicon.groups]}))
    docs = [{"doc_id": d.doc_id, "tokens": list(d.tokens)} for ex in corpus.examples for d in ex.candidates.docs]
    atomic_write(out / "corpus.jsonl", _jsonl(docs))
    queries = [{"query_id": ex.query.query_id, "tokens": list(ex.query.tokens)} for ex in corpus.examples]
    atomic_write(out / "queries.jsonl", _jsonl(queries))
    atomic_write(
        out / "candidates.tsv",
        "".join(f"{ex.query.query_id}\t{d.doc_id}\n" for ex in corpus.examples for d in ex.candidates.docs),
    )
    atomic_write(
        out / "qrels.tsv",
        "".join(
            f"{ex.query.query_id}\t{d.doc_id}\t{ex.candidates.gt_rank[d.doc_id]}\n"
            for ex in corpus.examples
            for d in ex.candidates.docs
        ),
    )
    atomic_write(
        out / "splits.json",
        _dumps({"train": [ex.query.query_id for ex in corpus.train], "eval": [ex.query.query_id for ex in corpus.eval]}),
    )


def read_dataset(data: str | Path) -> Dataset:
    """Load and cross-check a dataset directory written by ``write_dataset``."""
    data = Path(data)
    for name in ("vocab.json", "synonyms.json", "corpus.jsonl", "queries.jsonl", "candidates.tsv", "qrels.tsv", "splits.json"):
        if not (data / name).is_file():
            raise ValidationError(f"{data / name}: missing")
    try:
        vocab = Vocabulary(tuple(json.loads((data / "vocab.json").read_text(encoding="utf-8"))["words"]))
        lex = SynonymLexicon(tuple(tuple(g) for g in json.loads((data / "synonyms.json").read_text(encoding="utf-8"))["groups"]))
        splits = json.loads((data / "splits.json").read_text(encoding="utf-8"))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"{data}: malformed metadata file ({exc})") from None
    v = len(vocab)
    lex.check_vocab(v)

    docs: dict[str, TokenDoc] = {}
    path = data / "corpus.jsonl"
    for lineno, obj in _read_jsonl(path):
        did = obj.get("doc_id")
        if not isinstance(did, str) or did in docs:
            raise ValidationError(f"{path}:{lineno}: missing or duplicate doc_id")
        doc = TokenDoc(did, _tokens(obj, path, lineno))
        try:
            doc.check_vocab(v)
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        docs[did] = doc

    queries: dict[str, TokenQuery] = {}
    path = data / "queries.jsonl"
    for lineno, obj in _read_jsonl(path):
        qid = obj.get("query_id")
        if not isinstance(qid, str) or qid in queries:
            raise ValidationError(f"{path}:{lineno}: missing or duplicate query_id")
        query = TokenQuery(qid, _tokens(obj, path, lineno))
        try:
            query.check_vocab(v)
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        queries[qid] = query

    cands: dict[str, list[str]] = {}
    path = data / "candidates.tsv"
    for lineno, (qid, did) in _read_tsv(path, 2):
        if qid not in queries or did not in docs:
            raise ValidationError(f"{path}:{lineno}: unknown query or document id")
        cands.setdefault(qid, []).append(did)

    qrels: dict[str, dict[str, int]] = {}
    path = data / "qrels.tsv"
    for lineno, (qid, did, rank) in _read_tsv(path, 3):
        try:
            r = int(rank)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: rank {rank!r} is not an integer") from None
        if did not in cands.get(qid, ()):
            raise ValidationError(f"{path}:{lineno}: {did} is not a candidate of {qid}")
        qrels.setdefault(qid, {})[did] = r

    def build(qids) -> tuple[Example, ...]:
        out = []
        for qid in qids:
            if qid not in cands:
                raise ValidationError(f"{data / 'splits.json'}: query {qid!r} has no candidates")
            cs = CandidateSet(qid, tuple(docs[d] for d in cands[qid]), qrels.get(qid, {}))
            n = len(cs)
            out.append(Example(queries[qid], cs, tuple(float(n - cs.gt_rank[d]) for d in cands[qid])))
        return tuple(out)

    return Dataset(vocab, lex, build(splits.get("train", [])), build(splits.get("eval", [])))


def save_checkpoint(model: ScoringModel, vocab: Vocabulary, path: str | Path, meta: dict | None = None) -> None:
    v, e = model.dims
    payload = {
        "dims": [v, e],
        "embeddings": model.embeddings.ravel().tolist(),
        "interaction": model.interaction.ravel().tolist(),
        "bias": model.bias,
        "vocab_hash": vocab_hash(vocab),
    }
    if meta is not None:
        payload["meta"] = meta
    atomic_write(path, _dumps(payload))


def load_checkpoint(path: str | Path, vocab: Vocabulary) -> ScoringModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        v, e = payload["dims"]
        emb = np.array(payload["embeddings"], dtype=np.float64)
        w = np.array(payload["interaction"], dtype=np.float64)
        bias = float(payload["bias"])
        stored = payload["vocab_hash"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: unreadable checkpoint ({exc})") from None
    if stored != vocab_hash(vocab):
        raise ValidationError(f"{path}: checkpoint was trained on a different vocabulary")
    if v != len(vocab) or emb.size != v * e or w.size != e * e:
        raise ValidationError(f"{path}: parameter arrays do not match dims {v}x{e}")
    model = ScoringModel(emb.reshape(v, e), w.reshape(e, e), bias)
    if not model.is_finite():
        raise ValidationError(f"{path}: checkpoint holds non-finite parameters")
    return model


RunRow = tuple[str, str, int, float]


def format_run(rows: Iterable[RunRow]) -> str:
    return "".join(f"{q} {d} {r} {s:.6f}\n" for q, d, r, s in rows)


def parse_run(text: str, source: str = "<run>") -> list[RunRow]:
    """Parse a run file; per query ranks must be dense and scores non-increasing."""
    rows: list[RunRow] = []
    last: dict[str, tuple[int, float]] = {}
    for lineno, line in enumerate(io.StringIO(text), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise ValidationError(f"{source}:{lineno}: expected 'query_id doc_id rank score'")
        q, d, r, s = parts
        try:
            rank, score = int(r), float(s)
        except ValueError:
            raise ValidationError(f"{source}:{lineno}: bad rank or score") from None
        prev_rank, prev_score = last.get(q, (0, float("inf")))
        if rank != prev_rank + 1 or score > prev_score:
            raise ValidationError(f"{source}:{lineno}: ranks must be dense and scores non-increasing")
        last[q] = (rank, score)
        rows.append((q, d, rank, score))
    return rows


def run_rows(lists: Sequence[RankedList]) -> list[RunRow]:
    return [(rl.query_id, d, rl.rank_of[d], s) for rl in lists for d, s in rl.entries]


def _attacked_doc_id(origin: str) -> str:
    return f"{origin}#adv"


def write_attacks(attacks: Sequence[QueryAttack], budget: AttackBudget, seed: int, out: str | Path) -> None:
    out = Path(out)
    rows = []
    summary = []
    for qa in attacks:
        for res in qa.results:
            rows.append(
                {
                    "doc_id": _attacked_doc_id(res.original.doc_id),
                    "tokens": list(res.adversarial.tokens),
                    "origin_doc_id": res.original.doc_id,
                    "substitutions": [list(s) for s in res.substituted_positions],
                }
            )
            summary.append(
                {
                    "query_id": qa.query_id,
                    "origin_doc_id": res.original.doc_id,
                    "score_gain": res.score_gain,
                    "n_substitutions": res.n_substitutions,
                }
            )
    atomic_write(out / "attacked_corpus.jsonl", _jsonl(rows))
    payload = {"budget": {"epsilon": budget.epsilon, "k_max": budget.k_max}, "seed": seed, "attacks": summary}
    atomic_write(out / "attacks.json", _dumps(payload))


def read_attacks(attacked: str | Path, examples: Sequence[Example]) -> list[QueryAttack]:
    attacked = Path(attacked)
    try:
        meta = json.loads((attacked / "attacks.json").read_text(encoding="utf-8"))
        budget = AttackBudget(**meta["budget"])
        summary = meta["attacks"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"{attacked / 'attacks.json'}: unreadable ({exc})") from None
    gains = {(a["query_id"], a["origin_doc_id"]): float(a["score_gain"]) for a in summary}
    owner = {d.doc_id: ex for ex in examples for d in ex.candidates.docs}
    adv: dict[str, dict[str, TokenDoc]] = {}
    path = attacked / "attacked_corpus.jsonl"
    for lineno, obj in _read_jsonl(path):
        origin = obj.get("origin_doc_id")
        if origin not in owner:
            raise ValidationError(f"{path}:{lineno}: origin_doc_id {origin!r} is not an evaluation document")
        ex = owner[origin]
        orig = ex.candidates.docs[ex.candidates.index_of(origin)]
        doc = TokenDoc(origin, _tokens(obj, path, lineno))
        if len(doc) != len(orig) or not budget.admits(orig, doc):
            raise ValidationError(f"{path}:{lineno}: attacked document violates the substitution budget")
        subs = [tuple(s) for s in obj.get("substitutions", [])]
        if subs != [(m, a, b) for m, (a, b) in enumerate(zip(orig.tokens, doc.tokens)) if a != b]:
            raise ValidationError(f"{path}:{lineno}: substitutions do not match the tokens")
        adv.setdefault(ex.query.query_id, {})[origin] = doc
    out = []
    for ex in examples:
        qid = ex.query.query_id
        per = adv.get(qid, {})
        results = []
        docs = []
        for d in ex.candidates.docs:
            if d.doc_id in per:
                a = per[d.doc_id]
                subs = tuple((m, x, y) for m, (x, y) in enumerate(zip(d.tokens, a.tokens)) if x != y)
                results.append(AttackResult(d, a, gains.get((qid, d.doc_id), 0.0), subs))
                docs.append(a)
            else:
                docs.append(d)
        out.append(QueryAttack(qid, tuple(results), tuple(docs)))
    return out


def metrics_payload(report: MetricsReport, cfg: ExperimentConfig) -> dict:
    d = report.to_dict()
    d["budget"] = {"epsilon": cfg.budget.epsilon, "k_max": cfg.budget.k_max}
    return d


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    write_dataset(generate(cfg.gen), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    data = read_dataset(args.data)
    if not data.train:
        raise ValidationError(f"{args.data}: no training queries")
    model, log = train(cfg.train, data.train, data.lexicon, cfg.budget, len(data.vocab))
    out = Path(args.out)
    log.checkpoint = out.name
    save_checkpoint(model, data.vocab, out, {"train": cfg.train.to_dict()})
    log_path = Path(args.log) if args.log else out.with_name("trainlog.json")
    atomic_write(log_path, _dumps(log.to_dict(include_time=args.log_times)))
    return EXIT_OK


def _eval_examples(data: Dataset) -> tuple[Example, ...]:
    if not data.eval:
        raise ValidationError("dataset has no evaluation queries")
    return data.eval


def cmd_attack(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    data = read_dataset(args.data)
    model = load_checkpoint(args.checkpoint, data.vocab)
    attacks = attack_queries(model, _eval_examples(data), data.lexicon, cfg.budget, cfg.eval.attack_seed)
    write_attacks(attacks, cfg.budget, cfg.eval.attack_seed, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    data = read_dataset(args.data)
    model = load_checkpoint(args.checkpoint, data.vocab)
    examples = _eval_examples(data)
    attacks = read_attacks(args.attacked, examples)
    report, evals = evaluate(model, examples, attacks, cfg.eval.ks)
    out = Path(args.out)
    atomic_write(out / "metrics.json", _dumps(report.to_dict()))
    atomic_write(out / "clean.run", format_run(run_rows([e.clean for e in evals])))
    # attacked documents keep their origin ids inside the run so the two runs align
    atomic_write(out / "attacked.run", format_run(run_rows([e.attacked for e in evals])))
    if args.dump_reps:
        atomic_write(out / "reps.json", _dumps(_representations(model, examples, attacks)))
    return EXIT_OK


def _representations(model: ScoringModel, examples: Sequence[Example], attacks: Sequence[QueryAttack]) -> dict:
    """Pooled embeddings of clean and attacked documents, for external plotting."""
    emb = model.embeddings
    by_id = {a.query_id: a for a in attacks}
    rows = []
    for ex in examples:
        qa = by_id[ex.query.query_id]
        for res in qa.results:
            rows.append(
                {
                    "query_id": ex.query.query_id,
                    "doc_id": res.original.doc_id,
                    "clean": emb[list(res.original.tokens)].mean(axis=0).tolist(),
                    "attacked": emb[list(res.adversarial.tokens)].mean(axis=0).tolist(),
                }
            )
    return {"dim": int(model.dims[1]), "docs": rows}


def cmd_verify(args) -> int:
    summary = verify_inequalities(args.trials, args.seed, args.max_docs, args.max_len)
    atomic_write(args.out, _dumps(summary.to_dict()))
    print(
        f"trials={summary.trials} bound_violations={summary.bound_violations} "
        f"tightness_violations={summary.tightness_violations} "
        f"decomposition_violations={summary.decomposition_violations}"
    )
    return EXIT_OK if summary.ok else EXIT_VIOLATION


def sweep_rows(cfg: ExperimentConfig, corpus: Corpus | Dataset, lambdas, variants, log=None) -> list[tuple]:
    """Train PIAT for every (variant, lambda), attack the eval split and measure."""
    vocab_size = len(corpus.vocab)
    rows = []
    for variant in variants:
        for lam in lambdas:
            tr = replace(cfg.train, method=Method.PIAT)
            tr = replace(tr, tradeoff=replace(tr.tradeoff, lam=float(lam), adv_variant=AdvVariant(variant)))
            model, _ = train(tr, corpus.train, corpus.lexicon, cfg.budget, vocab_size)
            attacks = attack_queries(model, corpus.eval, corpus.lexicon, cfg.budget, cfg.eval.attack_seed)
            report, _ = evaluate(model, corpus.eval, attacks, (10,))
            rows.append((float(lam), AdvVariant(variant).value, report.clean_mrr_at[10], report.robust_mrr_at[10], report.asr, report.lsd))
            if log is not None:
                log(rows[-1])
    return rows


def format_sweep(rows: Sequence[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for lam, variant, clean, robust, asr, lsd in rows:
        w.writerow([f"{lam:g}", variant, f"{clean:.6f}", f"{robust:.6f}", f"{asr:.6f}", f"{lsd:.6f}"])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    lambdas = tuple(args.lambdas) if args.lambdas else cfg.sweep.lambdas
    variants = tuple(args.variants) if args.variants else cfg.sweep.variants
    replace(cfg.sweep, lambdas=lambdas, variants=variants).validate()
    corpus = read_dataset(args.data) if args.data else generate(cfg.gen)
    rows = sweep_rows(cfg, corpus, lambdas, variants, log=None if args.quiet else lambda r: print(*r, flush=True))
    atomic_write(args.out, format_sweep(rows))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="overrides every seed in the config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="piat", description="Adversarial training and robustness toolkit for rankers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a ranker")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log path (default: trainlog.json beside the checkpoint)")
    p.add_argument("--log-times", action="store_true", help="include wall times in the training log")
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--lam", type=float)
    p.add_argument("--variant", choices=[v.value for v in AdvVariant])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("attack", cmd_attack, "attack the evaluation queries"), ("evaluate", cmd_evaluate, "measure clean and attacked metrics")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--k-max", dest="k_max", type=int)
        if name == "evaluate":
            p.add_argument("--attacked", required=True, help="directory written by 'attack'")
            p.add_argument("--k", type=int, nargs="+", help="MRR cutoffs")
            p.add_argument("--dump-reps", action="store_true", help="also write pooled document embeddings")
        p.set_defaults(func=func)

    p = sub.add_parser("verify", help="check the error inequalities on random small instances")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-docs", type=int, default=6)
    p.add_argument("--max-len", type=int, default=6)
    p.add_argument("--out", default="verify.json")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="train PIAT over a lambda grid")
    _common(p)
    p.add_argument("--data", help="dataset directory (default: generate from the config)")
    p.add_argument("--lambdas", type=float, nargs="+")
    p.add_argument("--variants", nargs="+", choices=[v.value for v in AdvVariant])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InvariantViolation as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
