"""Ways of running the target algorithm once.

The subprocess adapter fills a command template with ``{instance}``,
``{config_file}``, ``{seed}`` and ``{time_limit}``, writes the configuration
as ``name=value`` lines to a temporary file, and reads ``PERF=<float>``
(optionally ``INCUMBENT=`` and ``BOUND=``) from the last matching line of
standard output.
"""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from typing import Mapping, Protocol

from .errors import AdapterFailure

ENV_COMMAND = "SVRCONF_ADAPTER_CMD"

_NUM = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf|nan)"
_PERF_RE = re.compile(r"PERF=" + _NUM)
_INC_RE = re.compile(r"INCUMBENT=" + _NUM)
_BOUND_RE = re.compile(r"BOUND=" + _NUM)


@dataclass(frozen=True)
class RunResult:
    perf: float
    incumbent: float | None = None
    bound: float | None = None


class TargetAdapter(Protocol):
    def run(self, instance, assignment: Mapping[str, str], seed: int, time_limit_s: float) -> RunResult:
        ...


def parse_output(stdout: str) -> RunResult:
    for line in reversed(stdout.splitlines()):
        m = _PERF_RE.search(line)
        if m is None:
            continue
        inc = _INC_RE.search(line)
        bnd = _BOUND_RE.search(line)
        return RunResult(
            float(m.group(1)),
            None if inc is None else float(inc.group(1)),
            None if bnd is None else float(bnd.group(1)),
        )
    raise AdapterFailure("no PERF=<float> line in output")


def write_config_file(path: str, assignment: Mapping[str, str]) -> None:
    with open(path, "w") as fh:
        for name, value in assignment.items():
            fh.write(f"{name}={value}\n")


class SubprocessAdapter:
    def __init__(self, command: str | None = None, grace_s: float = 5.0):
        command = os.environ.get(ENV_COMMAND) or command
        if not command:
            raise AdapterFailure(f"no adapter command configured (set {ENV_COMMAND} or the config file)")
        self.command = command
        self.grace_s = grace_s

    def run(self, instance, assignment, seed, time_limit_s) -> RunResult:
        target = getattr(instance, "path", None) or getattr(instance, "instance_id", instance)
        fd, cfg_path = tempfile.mkstemp(prefix="svrconf_cfg_", suffix=".txt")
        os.close(fd)
        try:
            write_config_file(cfg_path, assignment)
            cmd = self.command.format(
                instance=shlex.quote(str(target)),
                config_file=shlex.quote(cfg_path),
                seed=int(seed),
                time_limit=time_limit_s,
            )
            try:
                proc = subprocess.run(
                    cmd, shell=True, capture_output=True, text=True,
                    timeout=float(time_limit_s) + self.grace_s,
                )
            except subprocess.TimeoutExpired as exc:
                raise AdapterFailure(f"timed out after {exc.timeout:.1f}s") from exc
            if proc.returncode != 0:
                raise AdapterFailure(f"exit status {proc.returncode}: {proc.stderr.strip()[-200:]}")
            return parse_output(proc.stdout)
        finally:
            os.unlink(cfg_path)
