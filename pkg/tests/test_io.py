import json

import numpy as np
import pytest

from helpers import random_params
from seqattack import io as sio
from seqattack.trainer import gen_task
from seqattack.vocab import UNK, Vocabulary


def test_corpus_round_trip(tmp_path):
    c = gen_task("translate", 40, 15, (2, 5), 0)
    sio.save_corpus(c, tmp_path / "c.tsv")
    back = sio.load_corpus(tmp_path / "c.tsv", c.src_vocab, c.tgt_vocab)
    assert back == c and back.unk_count == 0
    lines = (tmp_path / "c.tsv").read_text().splitlines()
    assert len(lines) == 40 and all(line.count("\t") == 1 for line in lines)


def test_corpus_unknown_tokens_counted(tmp_path):
    v = Vocabulary.synthetic(8)
    (tmp_path / "c.tsv").write_text("w4 zz\tw5\nw6\tqq rr\n")
    c = sio.load_corpus(tmp_path / "c.tsv", v, v)
    assert c.unk_count == 3
    assert c.pairs[0] == ((4, UNK), (5,))


@pytest.mark.parametrize("text,line", [("w4\tw5\nw4 w5\n", 2), ("w4\tw5\tw6\n", 1), ("\tw5\n", 1)])
def test_corpus_format_errors_name_the_line(tmp_path, text, line):
    v = Vocabulary.synthetic(8)
    (tmp_path / "c.tsv").write_text(text)
    with pytest.raises(sio.CorpusFormatError, match=f":{line}:"):
        sio.load_corpus(tmp_path / "c.tsv", v, v)


def test_checkpoint_round_trip_and_header(tmp_path):
    p = random_params(0, dim=3, hidden=5, src_vocab=9, tgt_vocab=11)
    path = tmp_path / "m.s2sk"
    sio.save_checkpoint(p, path, {"attack_ready": True})
    data = path.read_bytes()
    assert data[:4] == b"S2SK"
    assert np.frombuffer(data[4:24], dtype="<u4").tolist() == [1, 3, 5, 9, 11]
    n_floats = sum(a.size for a in p.arrays().values())
    assert len(data) == 24 + 8 * n_floats
    assert sio.load_checkpoint(path).equals(p)
    assert sio.load_meta(path) == {"attack_ready": True}
    assert json.loads((tmp_path / "m.s2sk.json").read_text())["attack_ready"] is True


def test_checkpoint_errors(tmp_path):
    p = random_params(0, dim=2, hidden=2, src_vocab=9, tgt_vocab=9)
    good = sio.checkpoint_bytes(p)
    cases = {
        "magic": b"XXXX" + good[4:],
        "version": good[:4] + (2).to_bytes(4, "little") + good[8:],
        "truncated": good[:-8],
        "trailing": good + b"\0",
        "header": good[:10],
    }
    for name, blob in cases.items():
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(sio.CheckpointError):
            sio.load_checkpoint(tmp_path / name)


def test_missing_meta_is_empty(tmp_path):
    assert sio.load_meta(tmp_path / "none.s2sk") == {}


def test_read_token_lines_ignores_target(tmp_path):
    v = Vocabulary.synthetic(8)
    (tmp_path / "in.tsv").write_text("w4 w5\tt4\n\nw7\n")
    assert sio.read_token_lines(tmp_path / "in.tsv", v) == [[4, 5], [7]]
