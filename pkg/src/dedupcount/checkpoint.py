"""Plain-text checkpoints.

One ``key = value`` pair per line, ``#`` starts a comment line.  Real numbers
are written as C99 hex floats (``float.hex``) so a round trip is exact::

    # dedupcount checkpoint
    format = 1
    kind = counting
    n = 10
    d = 16
    classes = 11
    confidence = on
    config_hash = 3f9a...
    plin.1 = 0x1.0000000000000p+0 0x1.0000000000000p+0 ...
    ...
    plin.8 = ...
    head.weight.0 = <n + 1 hex floats>
    ...
    head.weight.10 = ...
    head.bias = <classes hex floats>

``plin.k`` holds the ``d`` weights of activation ``f_k``; ``head.weight.c`` is
the row of the linear classifier producing the logit of class ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .plin import N_FUNCTIONS

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    plin: np.ndarray          # (8, d)
    head_weight: np.ndarray   # (classes, n + 1)
    head_bias: np.ndarray     # (classes,)
    use_confidence: bool = True
    config_hash: str = ""

    @property
    def n(self) -> int:
        return self.head_weight.shape[1] - 1

    @property
    def d(self) -> int:
        return self.plin.shape[1]

    @property
    def classes(self) -> int:
        return self.head_weight.shape[0]


def _hex_row(values) -> str:
    return " ".join(float(v).hex() for v in np.ravel(values))


def _parse_row(text: str) -> np.ndarray:
    return np.array([float.fromhex(tok) for tok in text.split()], dtype=np.float64)


def dumps(ckpt: Checkpoint) -> str:
    lines = [
        "# dedupcount checkpoint",
        f"format = {FORMAT_VERSION}",
        f"kind = {ckpt.kind}",
        f"n = {ckpt.n}",
        f"d = {ckpt.d}",
        f"classes = {ckpt.classes}",
        f"confidence = {'on' if ckpt.use_confidence else 'off'}",
        f"config_hash = {ckpt.config_hash}",
    ]
    lines += [f"plin.{k + 1} = {_hex_row(row)}" for k, row in enumerate(ckpt.plin)]
    lines += [f"head.weight.{c} = {_hex_row(row)}" for c, row in enumerate(ckpt.head_weight)]
    lines.append(f"head.bias = {_hex_row(ckpt.head_bias)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Checkpoint:
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        fields[key.strip()] = value.strip()

    try:
        if int(fields["format"]) != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {fields['format']}")
        n, d, classes = int(fields["n"]), int(fields["d"]), int(fields["classes"])
        plin = np.stack([_parse_row(fields[f"plin.{k}"]) for k in range(1, N_FUNCTIONS + 1)])
        weight = np.stack([_parse_row(fields[f"head.weight.{c}"]) for c in range(classes)])
        bias = _parse_row(fields["head.bias"])
        confidence = fields["confidence"]
    except KeyError as exc:
        raise ValueError(f"checkpoint is missing key {exc.args[0]!r}") from None
    if plin.shape != (N_FUNCTIONS, d) or weight.shape != (classes, n + 1) or bias.shape != (classes,):
        raise ValueError("checkpoint table shapes do not match its header")
    if confidence not in ("on", "off"):
        raise ValueError(f"confidence must be 'on' or 'off', got {confidence!r}")
    return Checkpoint(kind=fields["kind"], plin=plin, head_weight=weight, head_bias=bias,
                      use_confidence=confidence == "on", config_hash=fields.get("config_hash", ""))


def save(ckpt: Checkpoint, path) -> None:
    Path(path).write_text(dumps(ckpt), encoding="utf-8", newline="\n")


def load(path) -> Checkpoint:
    return loads(Path(path).read_text(encoding="utf-8"))
