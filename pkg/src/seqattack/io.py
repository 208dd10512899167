"""Corpus TSV, vocabulary and checkpoint files.

Checkpoint layout (all little-endian)::

    b"S2SK"  u32 version  u32 d  u32 hidden  u32 |src vocab|  u32 |tgt vocab|
    then every array of ``model.PARAM_ORDER`` as row-major float64

A JSON sidecar ``<checkpoint>.json`` carries training metadata such as the
held-out accuracy and the attack-ready flag.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np

from .model import PARAM_ORDER, ModelParams
from .trainer import Corpus
from .vocab import UNK, Vocabulary

log = logging.getLogger(__name__)

MAGIC = b"S2SK"
VERSION = 1
_HEADER = struct.Struct("<4s5I")


class CorpusFormatError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def corpus_lines(corpus: Corpus) -> list[str]:
    sv, tv = corpus.src_vocab, corpus.tgt_vocab
    return [
        " ".join(sv.decode(s)) + "\t" + " ".join(tv.decode(t)) for s, t in corpus.pairs
    ]


def save_corpus(corpus: Corpus, path) -> None:
    text = "".join(line + "\n" for line in corpus_lines(corpus))
    Path(path).write_text(text, encoding="utf-8")


def load_corpus(path, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Corpus:
    """Read a TSV corpus; unknown tokens map to <unk> and are counted.

    The number of unknown tokens is logged and stored as ``unk_count``.
    """
    pairs = []
    unknown = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(f"{path}:{lineno}: expected exactly one TAB")
            src, tgt = parts[0].split(), parts[1].split()
            if not src or not tgt:
                raise CorpusFormatError(f"{path}:{lineno}: empty source or target")
            unknown += sum(w not in src_vocab for w in src)
            unknown += sum(w not in tgt_vocab for w in tgt)
            pairs.append((src_vocab.encode(src), tgt_vocab.encode(tgt)))
    if unknown:
        log.warning("%s: %d unknown tokens mapped to <unk> (index %d)", path, unknown, UNK)
    corpus = Corpus(pairs, src_vocab, tgt_vocab)
    corpus.unk_count = unknown
    return corpus


def read_token_lines(path, vocab: Vocabulary) -> list[list[int]]:
    """One space-separated sequence per line; a TAB-separated target is ignored."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").split("\t")[0]
            if not line.strip():
                continue
            out.append(vocab.encode(line.split()))
    return out


def checkpoint_bytes(params: ModelParams) -> bytes:
    header = _HEADER.pack(
        MAGIC, VERSION, params.dim, params.hidden, params.src_vocab_size, params.tgt_vocab_size
    )
    body = b"".join(np.asarray(getattr(params, n), dtype="<f8").tobytes() for n in PARAM_ORDER)
    return header + body


def save_checkpoint(params: ModelParams, path, meta: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(params))
    if meta is not None:
        Path(str(path) + ".json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _shapes(d, H, n_src, n_tgt):
    return {
        "src_emb": (n_src, d),
        "tgt_emb": (n_tgt, d),
        "enc_Wx": (4 * H, d),
        "enc_Wh": (4 * H, H),
        "enc_b": (4 * H,),
        "dec_Wx": (4 * H, d),
        "dec_Wc": (4 * H, H),
        "dec_Wh": (4 * H, H),
        "dec_b": (4 * H,),
        "out_W": (n_tgt, H),
        "out_b": (n_tgt,),
    }


def load_checkpoint(path) -> ModelParams:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, d, H, n_src, n_tgt = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    shapes = _shapes(d, H, n_src, n_tgt)
    offset = _HEADER.size
    arrays = {}
    for name in PARAM_ORDER:
        count = int(np.prod(shapes[name]))
        end = offset + 8 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated while reading {name}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays[name] = arr.reshape(shapes[name]).astype(np.float64)
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return ModelParams(**arrays)


def load_meta(path) -> dict:
    p = Path(str(path) + ".json")
    if not p.exists():
        return {}
    return json.loads(p.read_text(encoding="utf-8"))
