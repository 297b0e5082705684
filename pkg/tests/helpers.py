"""Shared test utilities."""

from __future__ import annotations

import re
from pathlib import Path


def canonical_log_bytes(path) -> bytes:
    """Trajectory log bytes with the one volatile field (wall time) masked."""
    text = Path(path).read_text()
    return re.sub(r'"wall_time_ms":\d+', '"wall_time_ms":0', text).encode()


class ScriptedRNG:
    """Stub generator with scripted draws.

    .random() pops from `uniforms`; .normal(loc, scale) pops a standard-normal
    value from `normals` and rescales it.  Popping an exhausted script raises,
    which doubles as a draw-count check.
    """

    def __init__(self, uniforms=(), normals=()):
        self.uniforms = list(uniforms)
        self.normals = list(normals)

    def random(self):
        return self.uniforms.pop(0)

    def normal(self, loc=0.0, scale=1.0):
        return loc + scale * self.normals.pop(0)

    @property
    def exhausted(self):
        return not self.uniforms and not self.normals
