"""Black-box predictors: analytic functions, k-NN on CSV data, external processes."""

from __future__ import annotations

import csv
import math
import re
import shlex
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DimensionError,
    InvalidK,
    NonFiniteInput,
    ParseError,
    PredictorProtocolError,
    SchemaError,
    UnknownPredictor,
)

PROTOCOL_VERSION = "RAAR/1"
_FLOAT_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...]
    target_name: str

    def __post_init__(self):
        n, d = self.features.shape
        if n < 2 or d < 1:
            raise SchemaError(f"dataset needs at least 2 rows and 1 feature, got {n}x{d}")
        if len(self.target) != n:
            raise SchemaError("target length does not match the feature matrix")

    @property
    def ranges(self) -> np.ndarray:
        return np.column_stack([self.features.min(axis=0), self.features.max(axis=0)])

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def load_dataset(path, target_col: str) -> Dataset:
    """Read a numeric CSV with a header row.

    Row numbers in errors are 0-based data rows (the header is not counted).
    """
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if target_col not in header:
            raise SchemaError(f"{path}: target column {target_col!r} not in header {header}")
        rows = []
        bad = []
        for i, raw in enumerate(reader):
            if not raw:
                continue
            if len(raw) != len(header):
                raise SchemaError(f"{path}: row {i} has {len(raw)} cells, header has {len(header)}")
            vals = []
            for col, cell in zip(header, raw):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(i, col, cell) from None
                vals.append(v)
            if not all(math.isfinite(v) for v in vals):
                bad.append(i)
            rows.append(vals)
    if bad:
        raise NonFiniteInput(f"{path}: non-finite cells in rows {bad}")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    t = header.index(target_col)
    feat_idx = [j for j in range(len(header)) if j != t]
    return Dataset(
        features=data[:, feat_idx],
        target=data[:, t],
        feature_names=tuple(header[j] for j in feat_idx),
        target_name=target_col,
    )


class Predictor:
    """Callable black box ``x -> y`` of fixed input dimension."""

    dim: int

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.dim:
            raise DimensionError(f"expected {self.dim} features, got {x.shape[0]}")
        return self._predict(x)

    __call__ = predict

    def _predict(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class AnalyticFunction:
    fn: Callable[[np.ndarray], float]
    ranges: tuple[tuple[float, float], ...]


def _additive(x):
    return 50.0 + 10.0 * x[0] + 30.0 * math.sqrt(x[1]) + 20.0 * math.sin(x[2])


ANALYTIC: dict[str, AnalyticFunction] = {
    "quad1d": AnalyticFunction(lambda x: -((x[0] - 0.7) ** 2), ((0.0, 1.0),)),
    "identity": AnalyticFunction(lambda x: float(x[0]), ((0.0, 1000.0),)),
    "additive": AnalyticFunction(_additive, ((0.0, 10.0), (1.0, 100.0), (0.0, 3.0))),
    "interaction": AnalyticFunction(lambda x: 10.0 + x[0] * x[1], ((1.0, 20.0), (1.0, 20.0))),
}

# Predictors making up the built-in synthetic experiment suite.
SYNTHETIC_SUITE = ("identity", "additive", "interaction")


class AnalyticPredictor(Predictor):
    def __init__(self, name: str):
        if name not in ANALYTIC:
            raise UnknownPredictor(f"unknown analytic predictor {name!r}; known: {', '.join(ANALYTIC)}")
        self.name = name
        self.spec = ANALYTIC[name]
        self.dim = len(self.spec.ranges)

    @property
    def ranges(self) -> np.ndarray:
        return np.array(self.spec.ranges, dtype=float)

    def _predict(self, x):
        return float(self.spec.fn(x))

    def describe(self):
        return {"kind": "analytic", "name": self.name}


def synthetic_dataset(name: str, n: int = 200, seed: int = 0) -> Dataset:
    """Uniform sample over an analytic function's ranges, labelled by the function."""
    pred = AnalyticPredictor(name)
    rng = np.random.default_rng(seed)
    r = pred.ranges
    X = r[:, 0] + rng.random((n, pred.dim)) * (r[:, 1] - r[:, 0])
    y = np.array([pred.predict(row) for row in X])
    return Dataset(X, y, tuple(f"x{i}" for i in range(pred.dim)), "y")


class KnnPredictor(Predictor):
    """Mean target of the ``k`` nearest training rows.

    Distances are Euclidean on features scaled by their training range;
    ties go to the lower row index.
    """

    def __init__(self, dataset: Dataset, k: int):
        if not 1 <= k <= dataset.n:
            raise InvalidK(f"k must be in [1, {dataset.n}], got {k}")
        self.k = k
        self.dim = dataset.dim
        r = dataset.ranges
        self._lo = r[:, 0]
        width = r[:, 1] - r[:, 0]
        self._scale = np.where(width > 0, width, 1.0)
        self._X = (dataset.features - self._lo) / self._scale
        self._y = dataset.target.copy()

    def _predict(self, x):
        z = (x - self._lo) / self._scale
        dist = np.sqrt(np.sum((self._X - z) ** 2, axis=1))
        idx = np.argsort(dist, kind="stable")[: self.k]
        return float(np.mean(self._y[idx]))

    def describe(self):
        return {"kind": "knn", "k": self.k}


def fit_knn(dataset: Dataset, k: int) -> KnnPredictor:
    return KnnPredictor(dataset, k)


class ExternalPredictor(Predictor):
    """Predictor served by a child process over a line protocol.

    The engine sends ``RAAR/1 <d>`` and expects ``READY``; each query is one
    line of ``d`` comma-separated floats answered by one float line. Closing
    stdin ends the session and the child must exit with status 0. The process
    is started lazily; requests are serialized.
    """

    def __init__(self, command: str | Sequence[str], dim: int, timeout: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.dim = dim
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_proc"] = None
        state["_lock"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def _send(self, line: str):
        try:
            self._proc.stdin.write(line.encode("ascii"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise PredictorProtocolError(f"predictor closed its input ({exc})") from None

    def _recv(self) -> str:
        raw = self._proc.stdout.readline()
        if not raw:
            code = self._proc.poll()
            raise PredictorProtocolError(f"predictor closed its output (exit status {code})")
        try:
            line = raw.decode("ascii")
        except UnicodeDecodeError:
            raise PredictorProtocolError("reply is not ASCII", raw) from None
        if not line.endswith("\n"):
            raise PredictorProtocolError("unterminated reply", line)
        return line[:-1]

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise PredictorProtocolError(f"cannot start predictor {self.command}: {exc}") from None
        self._send(f"{PROTOCOL_VERSION} {self.dim}\n")
        reply = self._recv()
        if reply != "READY":
            self._kill()
            raise PredictorProtocolError("expected READY handshake", reply)

    def _predict(self, x):
        with self._lock:
            if self._proc is None:
                self._start()
            self._send(",".join(format(float(v), ".17g") for v in x) + "\n")
            reply = self._recv()
            if not _FLOAT_RE.fullmatch(reply):
                raise PredictorProtocolError("reply is not a single decimal float", reply)
            y = float(reply)
            if not math.isfinite(y):
                raise PredictorProtocolError("reply is not finite", reply)
            return y

    def _kill(self):
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def close(self):
        with self._lock:
            if self._proc is None:
                return
            proc, self._proc = self._proc, None
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                code = proc.wait(timeout=self.timeout)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
                raise PredictorProtocolError("predictor did not exit after end of input") from None
            finally:
                proc.stdout.close()
            if code != 0:
                raise PredictorProtocolError(f"predictor exited with status {code}")

    def __del__(self):
        if getattr(self, "_proc", None) is not None:
            self._kill()

    def describe(self):
        return {"kind": "external", "command": self.command}


def parse_model(spec: str, dataset: Dataset) -> Predictor:
    """Build a predictor from ``knn:<k>`` or ``external:<command>``."""
    kind, _, arg = spec.partition(":")
    if kind == "knn":
        try:
            k = int(arg)
        except ValueError:
            raise InvalidK(f"bad k in model spec {spec!r}") from None
        return fit_knn(dataset, k)
    if kind == "external":
        if not arg.strip():
            raise ValueError("external model spec needs a command")
        return ExternalPredictor(arg, dataset.dim)
    raise ValueError(f"unknown model spec {spec!r}; expected knn:<k> or external:<cmd>")
