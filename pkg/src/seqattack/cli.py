"""Command-line entry point: ``seqattack {gen-task,train,attack,baseline}``.

Every command reads an optional ``--config`` file of ``key=value`` lines
(``#`` starts a comment). Values given as flags override the file, which
overrides the built-in defaults. The effective configuration is printed
before anything runs.

Exit codes: 0 ok, 2 I/O error, 3 training diverged, 4 configuration or
vocabulary error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from . import io as sio
from .attack import MODES, AttackConfig, AttackConfigError
from .evaluation import aggregate, read_report_csv
from .index import IndexConfigError, build
from .runner import attack_batch, baseline_batch
from .trainer import TrainConfig, TrainingDiverged, gen_task, sequence_accuracy, train
from .vocab import RESERVED, Vocabulary, VocabError

log = logging.getLogger("seqattack")

EXIT_OK, EXIT_IO, EXIT_DIVERGED, EXIT_CONFIG = 0, 2, 3, 4


class ConfigError(Exception):
    pass


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_float(v):
    return None if str(v).strip().lower() in ("", "none") else float(v)


GEN_KEYS = {
    "kind": (str, "copy"),
    "n": (int, 2000),
    "vocab": (int, 20),
    "min_len": (int, 3),
    "max_len": (int, 6),
    "seed": (int, 0),
    "map_seed": (int, None),
    "corpus": (str, "corpus.tsv"),
    "src_vocab": (str, "src.vocab"),
    "tgt_vocab": (str, "tgt.vocab"),
}

TRAIN_KEYS = {
    "corpus": (str, "corpus.tsv"),
    "heldout": (str, ""),
    "src_vocab": (str, "src.vocab"),
    "tgt_vocab": (str, "tgt.vocab"),
    "checkpoint": (str, "model.s2sk"),
    "epochs": (int, TrainConfig.epochs),
    "lr": (float, TrainConfig.lr),
    "batch_size": (int, TrainConfig.batch_size),
    "hidden": (int, TrainConfig.hidden),
    "dim": (int, TrainConfig.dim),
    "seed": (int, TrainConfig.seed),
    "clip": (_opt_float, TrainConfig.clip),
    "weight_decay": (float, TrainConfig.weight_decay),
    "min_accuracy": (float, 0.95),
}

_ATTACK_COMMON = {
    "checkpoint": (str, "model.s2sk"),
    "src_vocab": (str, "src.vocab"),
    "tgt_vocab": (str, "tgt.vocab"),
    "inputs": (str, "test.tsv"),
    "report": (str, "report.csv"),
    "limit": (int, 0),
    "mode": (str, "non-overlapping"),
    "keywords": (str, ""),
    "num_keywords": (int, 1),
    "fresh_keywords": (_bool, True),
    "stopwords": (str, ""),
    "eps": (float, AttackConfig.eps),
    "lambda1": (float, AttackConfig.lambda1),
    "lambda2": (float, AttackConfig.lambda2),
    "lr": (float, AttackConfig.lr),
    "iters": (int, AttackConfig.iters),
    "seed": (int, 0),
    "beam": (int, 0),
    "projection": (str, AttackConfig.projection),
    "teacher_forcing": (_bool, False),
    "index": (str, "exact"),
    "allow_unready": (_bool, False),
    "successful_only": (_bool, False),
}

ATTACK_KEYS = dict(_ATTACK_COMMON)
BASELINE_KEYS = dict(_ATTACK_COMMON)
BASELINE_KEYS.update(
    {
        "report": (str, "baseline.csv"),
        "attack_report": (str, ""),
        "budget": (int, 1),
        "restarts": (int, 10),
    }
)

FLAG_KEYS = ("mode", "keywords", "eps", "lambda1", "lambda2", "lr", "iters", "seed", "beam")


def read_config_file(path) -> dict[str, str]:
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(schema, file_values, overrides) -> dict:
    raw = dict(file_values)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                cfg[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        else:
            cfg[key] = default
    return cfg


def print_config(name, cfg):
    print(f"# {name} effective config")
    for key in sorted(cfg):
        print(f"#   {key}={cfg[key]}")


def _load_stopwords(path) -> set[str]:
    if path:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = resources.files("seqattack").joinpath("data/stopwords.txt").read_text("utf-8")
    return {w.strip() for w in text.splitlines() if w.strip()}


# ---------------------------------------------------------------------------
# commands


def cmd_gen_task(cfg) -> int:
    corpus = gen_task(
        cfg["kind"], cfg["n"], cfg["vocab"], (cfg["min_len"], cfg["max_len"]), cfg["seed"],
        map_seed=cfg["map_seed"],
    )
    sio.save_corpus(corpus, cfg["corpus"])
    corpus.src_vocab.save(cfg["src_vocab"])
    corpus.tgt_vocab.save(cfg["tgt_vocab"])
    print(f"wrote {len(corpus)} pairs to {cfg['corpus']}")
    print(f"source vocab {len(corpus.src_vocab)}, target vocab {len(corpus.tgt_vocab)}")
    return EXIT_OK


def cmd_train(cfg) -> int:
    src_vocab = Vocabulary.load(cfg["src_vocab"])
    tgt_vocab = Vocabulary.load(cfg["tgt_vocab"])
    corpus = sio.load_corpus(cfg["corpus"], src_vocab, tgt_vocab)
    tcfg = TrainConfig(
        epochs=cfg["epochs"], lr=cfg["lr"], batch_size=cfg["batch_size"], hidden=cfg["hidden"],
        dim=cfg["dim"], seed=cfg["seed"], clip=cfg["clip"], weight_decay=cfg["weight_decay"],
    )

    def progress(epoch, loss, _params):
        print(f"epoch {epoch} loss {loss:.6f}", flush=True)

    try:
        params, losses = train(corpus, tcfg, progress)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    meta = {"epochs": tcfg.epochs, "seed": tcfg.seed, "final_loss": losses[-1]}
    ready = False
    if cfg["heldout"]:
        heldout = sio.load_corpus(cfg["heldout"], src_vocab, tgt_vocab)
        acc = sequence_accuracy(params, heldout)
        meta["heldout_accuracy"] = acc
        ready = acc >= cfg["min_accuracy"]
        print(f"held-out sequence accuracy {acc:.4f} (gate {cfg['min_accuracy']})")
    else:
        print("no held-out corpus given; model is not marked attack-ready")
    meta["attack_ready"] = ready
    sio.save_checkpoint(params, cfg["checkpoint"], meta)
    print(f"wrote {cfg['checkpoint']} attack_ready={str(ready).lower()}")
    return EXIT_OK


def _resolve_keywords(cfg, tgt_vocab, stop):
    if not cfg["keywords"]:
        return None
    words = cfg["keywords"].replace(",", " ").split()
    bad = [w for w in words if w not in tgt_vocab or w in stop or w in RESERVED]
    if bad:
        raise ConfigError(f"keywords not usable in the target vocabulary: {', '.join(bad)}")
    return tuple(tgt_vocab.index(w) for w in words)


def _prepare(cfg):
    src_vocab = Vocabulary.load(cfg["src_vocab"])
    tgt_vocab = Vocabulary.load(cfg["tgt_vocab"])
    params = sio.load_checkpoint(cfg["checkpoint"])
    if params.src_vocab_size != len(src_vocab) or params.tgt_vocab_size != len(tgt_vocab):
        raise ConfigError("vocabulary sizes do not match the checkpoint")
    meta = sio.load_meta(cfg["checkpoint"])
    if not meta.get("attack_ready", False) and not cfg["allow_unready"]:
        raise ConfigError(
            "checkpoint is not attack-ready (held-out accuracy gate not passed); "
            "set allow_unready=true to attack anyway"
        )
    stop_words = _load_stopwords(cfg["stopwords"])
    stop_ids = frozenset(tgt_vocab.index(w) for w in stop_words if w in tgt_vocab)
    keywords = _resolve_keywords(cfg, tgt_vocab, stop_words)
    inputs = sio.read_token_lines(cfg["inputs"], src_vocab)
    if cfg["limit"]:
        inputs = inputs[: cfg["limit"]]
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}")
    try:
        acfg = AttackConfig(
            eps=cfg["eps"], lambda1=cfg["lambda1"], lambda2=cfg["lambda2"], lr=cfg["lr"],
            iters=cfg["iters"], beam=cfg["beam"], projection=cfg["projection"],
            teacher_forcing=cfg["teacher_forcing"],
        )
    except AttackConfigError as exc:
        raise ConfigError(str(exc)) from None
    return params, inputs, acfg, keywords, stop_ids


def _write_report(rows, cfg):
    report = aggregate(rows, cfg["successful_only"])
    Path(cfg["report"]).write_text(report.to_csv(), encoding="utf-8")
    print(
        f"samples {len(rows)}  success {report.success_pct:.1f}%  "
        f"bleu {report.mean_bleu:.3f}  changed {report.mean_changed:.2f}"
    )
    print(f"wrote {cfg['report']}")


def cmd_attack(cfg) -> int:
    params, inputs, acfg, keywords, stop_ids = _prepare(cfg)
    index = build(params.src_emb, backend=cfg["index"])
    rows, _ = attack_batch(
        params, inputs, acfg, index, mode=cfg["mode"], num_keywords=cfg["num_keywords"],
        keywords=keywords, seed=cfg["seed"], stop=stop_ids, fresh=cfg["fresh_keywords"],
    )
    _write_report(rows, cfg)
    return EXIT_OK


def cmd_baseline(cfg) -> int:
    params, inputs, acfg, keywords, stop_ids = _prepare(cfg)
    if cfg["attack_report"]:
        attack_rows, _ = read_report_csv(Path(cfg["attack_report"]).read_text(encoding="utf-8"))
        by_id = {r.id: r.changed for r in attack_rows}
        missing = [str(i) for i in range(len(inputs)) if str(i) not in by_id]
        if missing:
            raise ConfigError(f"attack report lacks samples: {', '.join(missing[:10])}")
        budgets = [by_id[str(i)] for i in range(len(inputs))]
    else:
        budgets = [cfg["budget"]] * len(inputs)
    rows = baseline_batch(
        params, inputs, acfg, budgets, mode=cfg["mode"], num_keywords=cfg["num_keywords"],
        keywords=keywords, seed=cfg["seed"], stop=stop_ids, fresh=cfg["fresh_keywords"],
        restarts=cfg["restarts"],
    )
    _write_report(rows, cfg)
    return EXIT_OK


COMMANDS = {
    "gen-task": (GEN_KEYS, cmd_gen_task),
    "train": (TRAIN_KEYS, cmd_train),
    "attack": (ATTACK_KEYS, cmd_attack),
    "baseline": (BASELINE_KEYS, cmd_baseline),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqattack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (schema, _) in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument(
            "-s", "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )
        for key in FLAG_KEYS:
            if key in schema:
                p.add_argument(f"--{key}", dest=f"flag_{key}", default=None)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    schema, func = COMMANDS[args.command]
    try:
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        for key in FLAG_KEYS:
            val = getattr(args, f"flag_{key}", None)
            if val is not None:
                overrides[key] = val
        cfg = resolve_config(schema, file_values, overrides)
        print_config(args.command, cfg)
        return func(cfg)
    except (ConfigError, VocabError, AttackConfigError, IndexConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, sio.CorpusFormatError, sio.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
