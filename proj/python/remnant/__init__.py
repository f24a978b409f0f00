"""Python front end for the remnant recovery toolkit and FTL simulator.

Every command returns a :class:`Result` holding the process exit code the
CLI would have used, the parsed JSON report and any diagnostics.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from . import _remnant
from ._remnant import RemnantError, decode_data_runs, encode_data_runs, sha256_file

__version__ = _remnant.__version__

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_UNRECOGNIZED_VOLUME = 2
EXIT_NOTHING_RECOVERED = 3
EXIT_ORACLE_MISMATCH = 4
EXIT_BAD_CONFIG = 5


@dataclass
class Result:
    exit_code: int
    report: dict
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK

    def text(self) -> str:
        return _remnant.render_text(json.dumps(self.report))


def _wrap(raw) -> Result:
    code, report, diags = raw
    return Result(code, json.loads(report), list(diags))


def _path(p) -> Optional[str]:
    return None if p is None else os.fspath(p)


def scan(image, *, fs: str = "auto", deep: bool = False, offset: int = 0, jobs: int = 1) -> Result:
    return _wrap(_remnant.scan(os.fspath(image), fs, deep, offset, jobs))


def recover(image, out=None, *, truth=None, fs: str = "auto", deep: bool = False, offset: int = 0,
            jobs: int = 1, same_media: bool = False) -> Result:
    return _wrap(_remnant.recover(os.fspath(image), _path(out), _path(truth), fs, deep, offset, jobs, same_media))


def audit(image, truth, *, fs: str = "auto", offset: int = 0) -> Result:
    return _wrap(_remnant.audit(os.fspath(image), os.fspath(truth), fs, offset))


def forge(corpus: dict, image_out, *, sidecar=None, seed: Optional[int] = None) -> Result:
    return _wrap(_remnant.forge(json.dumps(corpus), os.fspath(image_out), _path(sidecar), seed))


def simulate(config: dict, *, base_dir=".", seed: Optional[int] = None) -> Result:
    return _wrap(_remnant.simulate(json.dumps(config), os.fspath(base_dir), seed))


__all__ = [
    "Result", "RemnantError", "scan", "recover", "audit", "forge", "simulate",
    "decode_data_runs", "encode_data_runs", "sha256_file",
]
