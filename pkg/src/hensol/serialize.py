"""Complex <-> [re, im] JSON helpers used by every dump format."""

from __future__ import annotations

import json


def c2p(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def p2c(pair) -> complex:
    re, im = pair
    return complex(re, im)


def cseq2p(zs) -> list[list[float]]:
    return [c2p(z) for z in zs]


def p2cseq(pairs) -> tuple[complex, ...]:
    return tuple(p2c(p) for p in pairs)


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
