"""Data model, configuration and validation shared by the rest of the package."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

COVARIANCE_PRIORS = ("IG", "IW", "HIW")
GAMMA_PRIORS = ("hierarchical", "hotspot", "MRF")
GAMMA_SAMPLERS = ("MC3", "bandit")
GAMMA_INITS = ("zeros", "ones", "mle", "random")

_COV_LABEL = {"IG": "HRR", "IW": "dSUR", "HIW": "SSUR"}
_GAMMA_LABEL = {"hierarchical": "B", "hotspot": "H", "MRF": "M"}


class SpecError(ValueError):
    """Invalid model specification or configuration.

    ``problems`` lists every individual complaint so callers can report them
    all at once instead of one per run.
    """

    def __init__(self, problems: str | Sequence[str]):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(RuntimeError):
    """Linear algebra failed even after jitter escalation."""


@dataclass(frozen=True)
class Dataset:
    """Responses ``Y`` (n x s), selectable predictors ``X`` (n x p) and
    mandatory predictors ``X0`` (n x p0, possibly zero columns)."""

    Y: np.ndarray
    X: np.ndarray
    X0: np.ndarray = None
    y_names: tuple = None
    x_names: tuple = None
    x0_names: tuple = None

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        X = np.array(self.X, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim == 1:
            X = X[:, None]
        X0 = (np.zeros((Y.shape[0], 0)) if self.X0 is None
              else np.array(self.X0, dtype=float))
        if X0.ndim == 1:
            X0 = X0[:, None]
        if Y.ndim != 2 or X.ndim != 2 or X0.ndim != 2:
            raise DataError("Y, X and X0 must be matrices")
        n = Y.shape[0]
        if X.shape[0] != n or X0.shape[0] != n:
            raise DataError(
                f"row count mismatch: Y has {n}, X has {X.shape[0]}, X0 has {X0.shape[0]}")
        for name, m in (("Y", Y), ("X", X), ("X0", X0)):
            if not np.all(np.isfinite(m)):
                raise DataError(f"{name} contains NaN or infinite entries")
            m.setflags(write=False)
        y_names = _names(self.y_names, Y.shape[1], "Y")
        x_names = _names(self.x_names, X.shape[1], "X")
        x0_names = _names(self.x0_names, X0.shape[1], "X0_")
        if len(set(x_names) | set(x0_names)) != len(x_names) + len(x0_names):
            raise DataError("column names must be unique across X and X0")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "y_names", y_names)
        object.__setattr__(self, "x_names", x_names)
        object.__setattr__(self, "x0_names", x0_names)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def s(self) -> int:
        return self.Y.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def p0(self) -> int:
        return self.X0.shape[1]


def _names(names, count, prefix):
    if names is None:
        return tuple(f"{prefix}{i + 1}" for i in range(count))
    names = tuple(str(v) for v in names)
    if len(names) != count:
        raise DataError(f"expected {count} {prefix} column names, got {len(names)}")
    return names


@dataclass(frozen=True)
class Hyperparameters:
    """Prior hyperparameters.

    ``None`` marks a value that depends on the data dimensions and is filled
    in by :meth:`resolved`.
    """

    a_w: float = 2.0
    b_w: float = 5.0
    a_sigma: float = 1.0
    b_sigma: float = 1.0
    a_omega: float = 2.0
    b_omega: float | None = None
    a_o: float = 2.0
    b_o: float | None = None
    a_pi: float = 2.0
    b_pi: float = 1.0
    mrf_d: float = -3.0
    mrf_e: float = 0.03
    nu: float | None = None
    a_tau: float = 0.1
    b_tau: float = 10.0
    a_eta: float = 0.1
    b_eta: float = 1.0

    def resolved(self, p: int, s: int) -> "Hyperparameters":
        """Fill the dimension-dependent defaults for a p x s problem."""
        changes = {}
        if self.b_omega is None:
            changes["b_omega"] = float(max(p * s - 2, 1))
        if self.b_o is None:
            changes["b_o"] = float(max(p - 2, 1))
        if self.nu is None:
            changes["nu"] = float(s + 3)
        return dataclasses.replace(self, **changes) if changes else self

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ModelSpec:
    covariance_prior: str = "HIW"
    gamma_prior: str = "hotspot"
    mrf_edges: np.ndarray | None = None
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    n_iter: int = 10000
    burnin: int = 5000
    n_chains: int = 2
    gamma_sampler: str = "bandit"
    gamma_init: str = "random"
    seed: int = 0
    max_threads: int = 1

    @property
    def model_name(self) -> str:
        """Short identity such as ``SSUR-H``."""
        return f"{_COV_LABEL[self.covariance_prior]}-{_GAMMA_LABEL[self.gamma_prior]}"

    def echo(self) -> dict:
        """Flat, JSON-friendly view of every resolved setting."""
        out = {
            "covariancePrior": self.covariance_prior,
            "gammaPrior": self.gamma_prior,
            "nIter": self.n_iter,
            "burnin": self.burnin,
            "nChains": self.n_chains,
            "gammaSampler": self.gamma_sampler,
            "gammaInit": self.gamma_init,
            "seed": self.seed,
            "maxThreads": self.max_threads,
            "mrfEdges": 0 if self.mrf_edges is None else int(len(self.mrf_edges)),
        }
        for key, value in self.hyperparameters.as_dict().items():
            out[f"hyperpar.{key}"] = value
        return out


def validate_spec(spec: ModelSpec, data: Dataset) -> ModelSpec:
    """Check ``spec`` against ``data`` and return it with defaults filled.

    Raises :class:`SpecError` listing every problem found.
    """
    problems = []
    if spec.covariance_prior not in COVARIANCE_PRIORS:
        problems.append(f"unknown covariance prior {spec.covariance_prior!r}")
    if spec.gamma_prior not in GAMMA_PRIORS:
        problems.append(f"unknown gamma prior {spec.gamma_prior!r}")
    if spec.gamma_sampler not in GAMMA_SAMPLERS:
        problems.append(f"unknown gamma sampler {spec.gamma_sampler!r}")
    if spec.gamma_init not in GAMMA_INITS:
        problems.append(f"unknown gamma init {spec.gamma_init!r}")
    for name in ("n_iter", "n_chains", "max_threads"):
        value = getattr(spec, name)
        if int(value) != value or value < 1:
            problems.append(f"{name} must be a positive integer, got {value}")
    if spec.burnin < 0 or int(spec.burnin) != spec.burnin:
        problems.append(f"burnin must be a non-negative integer, got {spec.burnin}")
    elif spec.burnin >= spec.n_iter:
        problems.append(f"burnin ({spec.burnin}) must be smaller than n_iter ({spec.n_iter})")
    if not 0 <= int(spec.seed) < 2**64:
        problems.append("seed must be a 64-bit unsigned integer")

    hyper = spec.hyperparameters.resolved(data.p, data.s)
    for key, value in hyper.as_dict().items():
        if key in ("mrf_d", "mrf_e", "nu"):
            continue
        if not (value > 0 and math.isfinite(value)):
            problems.append(f"hyperparameter {key} must be positive, got {value}")
    if not hyper.mrf_e >= 0:
        problems.append(f"hyperparameter mrf_e must be non-negative, got {hyper.mrf_e}")
    if not math.isfinite(hyper.mrf_d):
        problems.append("hyperparameter mrf_d must be finite")
    if not hyper.nu > data.s + 1:
        problems.append(f"hyperparameter nu must exceed s + 1 = {data.s + 1}, got {hyper.nu}")

    edges = spec.mrf_edges
    if spec.gamma_prior == "MRF":
        if edges is None:
            problems.append("missing MRF graph: gamma_prior=MRF requires mrf_edges")
        else:
            edges = np.asarray(edges, dtype=float).reshape(-1, 3)
            if len(edges):
                idx = edges[:, :2]
                if np.any(idx < 0) or np.any(idx >= data.p * data.s) or np.any(idx != np.round(idx)):
                    problems.append(f"MRF edge indices must be integers in [0, {data.p * data.s})")
                if np.any(edges[:, 0] == edges[:, 1]):
                    problems.append("MRF graph must not contain self-loops")
                if not np.all(np.isfinite(edges[:, 2])):
                    problems.append("MRF edge weights must be finite")
    elif edges is not None:
        edges = np.asarray(edges, dtype=float).reshape(-1, 3)

    if problems:
        raise SpecError(problems)
    if edges is not None:
        edges = canonical_edges(edges)
    return dataclasses.replace(spec, hyperparameters=hyper, mrf_edges=edges,
                               n_iter=int(spec.n_iter), burnin=int(spec.burnin),
                               n_chains=int(spec.n_chains), seed=int(spec.seed),
                               max_threads=int(spec.max_threads))


def canonical_edges(edges) -> np.ndarray:
    """Upper-triangle (i < j) edge list with duplicates merged.

    An edge listed in both directions is one edge; conflicting weights for the
    same pair raise :class:`SpecError`.
    """
    edges = np.asarray(edges, dtype=float).reshape(-1, 3)
    merged: dict[tuple[int, int], float] = {}
    for i, j, wt in edges:
        key = (int(min(i, j)), int(max(i, j)))
        if key in merged and merged[key] != wt:
            raise SpecError(f"conflicting weights for MRF edge {key}")
        merged[key] = float(wt)
    out = np.array([(i, j, wt) for (i, j), wt in sorted(merged.items())], dtype=float)
    out = out.reshape(-1, 3)
    out.setflags(write=False)
    return out


def rng_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Independent generator for stream ``stream_id`` of a run seeded by ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


# ----------------------------------------------------------------------------
# file IO
# ----------------------------------------------------------------------------

def read_matrix(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV/TSV with a header row."""
    path = Path(path)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    delimiter = "\t" if "\t" in lines[0] else ","
    rows = list(csv.reader(lines, delimiter=delimiter))
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    values = np.empty((len(body), len(header)))
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} fields, expected {len(header)}")
        try:
            values[r] = [float(v) for v in row]
        except ValueError as exc:
            raise DataError(f"{path}: row {r + 2}: {exc}") from None
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: missing or non-finite values are not supported")
    return header, values


def write_matrix(path, matrix, header: Sequence[str] | None = None) -> None:
    """Write a matrix as CSV with round-trippable (17 significant digit) values."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if header is None:
        header = [f"V{i + 1}" for i in range(matrix.shape[1])]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in matrix:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def format_float(value: float) -> str:
    return "%.17g" % value


def load_dataset(path, blocks: Sequence[Sequence[int]]) -> Dataset:
    """Load a combined ``[Y, X]`` or ``[Y, X, X0]`` matrix.

    ``blocks`` holds two or three sequences of 0-based column indices for Y, X
    and optionally X0.  Together they must partition the columns.
    """
    header, values = read_matrix(path)
    if len(blocks) not in (2, 3):
        raise DataError("blocks must give Y, X and optionally X0 column indices")
    seen: set[int] = set()
    parts = []
    for block in blocks:
        idx = [int(i) for i in block]
        if seen & set(idx) or len(set(idx)) != len(idx):
            raise DataError("index blocks overlap")
        seen |= set(idx)
        parts.append(idx)
    if seen != set(range(values.shape[1])):
        raise DataError(
            f"index blocks must partition the {values.shape[1]} columns; "
            f"{sorted(set(range(values.shape[1])) - seen)[:5]}... unassigned")
    take = lambda idx: (values[:, idx], [header[i] for i in idx])
    Y, yn = take(parts[0])
    X, xn = take(parts[1])
    X0, x0n = take(parts[2]) if len(parts) == 3 else (None, None)
    return Dataset(Y, X, X0, yn, xn, x0n)


def load_separate(y_path, x_path, x0_path=None) -> Dataset:
    """Load Y, X and optional X0 from separate files."""
    yn, Y = read_matrix(y_path)
    xn, X = read_matrix(x_path)
    X0 = x0n = None
    if x0_path is not None:
        x0n, X0 = read_matrix(x0_path)
    return Dataset(Y, X, X0, yn, xn, x0n)


def write_dataset(data: Dataset, path) -> list[list[int]]:
    """Write the combined ``[Y, X, X0]`` matrix; returns the index blocks."""
    values = np.hstack([data.Y, data.X, data.X0])
    write_matrix(path, values, list(data.y_names + data.x_names + data.x0_names))
    s, p = data.s, data.p
    blocks = [list(range(s)), list(range(s, s + p))]
    if data.p0:
        blocks.append(list(range(s + p, s + p + data.p0)))
    return blocks


def parse_index_block(text: str) -> list[int]:
    """Parse ``"0:10"`` / ``"0,3,5:8"`` style 0-based, half-open column blocks."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(range(int(lo), int(hi)))
        else:
            out.append(int(part))
    return out


def read_mrf_edges(path) -> np.ndarray:
    """Read an MRF edge list: one ``i j [weight]`` per line, 0-based indices
    into vec(Gamma) (column-major over the p x s indicator matrix)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.replace(",", " ").split()
        if len(fields) not in (2, 3):
            raise DataError(f"{path}:{lineno}: expected 'i j [weight]'")
        try:
            i, j = int(fields[0]), int(fields[1])
            wt = float(fields[2]) if len(fields) == 3 else 1.0
        except ValueError:
            raise DataError(f"{path}:{lineno}: could not parse {line!r}") from None
        rows.append((i, j, wt))
    return np.array(rows, dtype=float).reshape(-1, 3)


def write_mrf_edges(path, edges) -> None:
    with open(path, "w") as fh:
        for i, j, wt in np.asarray(edges).reshape(-1, 3):
            fh.write(f"{int(i)} {int(j)} {format_float(wt)}\n")


# ----------------------------------------------------------------------------
# run configuration
# ----------------------------------------------------------------------------

_HYPER_ALIASES = {"d": "mrf_d", "e": "mrf_e"}
_HYPER_KEYS = {f.name for f in dataclasses.fields(Hyperparameters)}
_CONFIG_KEYS = {"covariancePrior", "gammaPrior", "nIter", "burnin", "nChains",
                "gammaSampler", "gammaInit", "seed", "maxThreads", "mrfG",
                "data", "Y", "X", "X_0"}
_GAMMA_INIT_ALIASES = {"0": "zeros", "1": "ones", "MLE": "mle", "R": "random"}


@dataclass
class RunConfig:
    """Parsed configuration file: the model spec plus input locations."""

    spec: ModelSpec
    data: str | None = None
    Y: str | None = None
    X: str | None = None
    X_0: str | None = None
    base_dir: Path = field(default_factory=Path.cwd)
    keys: frozenset = frozenset()

    def resolve(self, value: str | None) -> Path | None:
        if value is None:
            return None
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def load_data(self) -> Dataset:
        if self.data is not None:
            if self.Y is None or self.X is None:
                raise SpecError("with 'data', both 'Y' and 'X' must give column blocks")
            blocks = [parse_index_block(self.Y), parse_index_block(self.X)]
            if self.X_0:
                blocks.append(parse_index_block(self.X_0))
            return load_dataset(self.resolve(self.data), blocks)
        if self.Y is None or self.X is None:
            raise SpecError("configuration must name 'Y' and 'X' files (or 'data' with blocks)")
        return load_separate(self.resolve(self.Y), self.resolve(self.X), self.resolve(self.X_0))


def parse_config(text: str, base_dir=None) -> RunConfig:
    """Parse ``key = value`` lines.  Unknown keys are errors."""
    raw: dict[str, str] = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key = value")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        value = value.strip("\"'")
        if key in raw:
            problems.append(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    hyper = {}
    for key in list(raw):
        if key.startswith("hyperpar."):
            name = key[len("hyperpar."):]
            name = _HYPER_ALIASES.get(name, name)
            if name not in _HYPER_KEYS:
                problems.append(f"unknown hyperparameter {key!r}")
                continue
            try:
                hyper[name] = float(raw.pop(key))
            except ValueError:
                problems.append(f"{key} must be a number")
        elif key not in _CONFIG_KEYS:
            problems.append(f"unknown configuration key {key!r}")
    base_dir = Path.cwd() if base_dir is None else Path(base_dir)
    kwargs = {}
    ints = {"nIter": "n_iter", "burnin": "burnin", "nChains": "n_chains",
            "seed": "seed", "maxThreads": "max_threads"}
    for key, name in ints.items():
        if key in raw:
            try:
                kwargs[name] = int(raw[key])
            except ValueError:
                problems.append(f"{key} must be an integer")
    if "covariancePrior" in raw:
        kwargs["covariance_prior"] = raw["covariancePrior"]
    if "gammaPrior" in raw:
        kwargs["gamma_prior"] = raw["gammaPrior"]
    if "gammaSampler" in raw:
        kwargs["gamma_sampler"] = raw["gammaSampler"]
    if "gammaInit" in raw:
        kwargs["gamma_init"] = _GAMMA_INIT_ALIASES.get(raw["gammaInit"], raw["gammaInit"])
    if "mrfG" in raw:
        path = Path(raw["mrfG"])
        path = path if path.is_absolute() else base_dir / path
        try:
            kwargs["mrf_edges"] = read_mrf_edges(path)
        except OSError as exc:
            problems.append(f"cannot read mrfG file: {exc}")
        except DataError as exc:
            problems.append(str(exc))
    if problems:
        raise SpecError(problems)
    spec = ModelSpec(hyperparameters=Hyperparameters(**hyper), **kwargs)
    return RunConfig(spec=spec, data=raw.get("data"), Y=raw.get("Y"), X=raw.get("X"),
                     X_0=raw.get("X_0"), base_dir=base_dir, keys=frozenset(raw) | {
                         f"hyperpar.{k}" for k in hyper})


def read_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def gamma_init_mle(data: Dataset, alpha: float = 0.05) -> np.ndarray:
    """Univariate-regression screening start: gamma_jk = 1 where the slope
    p-value of y_k on x_j is below ``alpha / (p * s)``."""
    from scipy import stats

    n, p, s = data.n, data.p, data.s
    out = np.zeros((p, s), dtype=bool)
    if n < 3 or p == 0:
        return out
    X = data.X - data.X.mean(axis=0)
    Y = data.Y - data.Y.mean(axis=0)
    sxx = np.einsum("ij,ij->j", X, X)
    syy = np.einsum("ij,ij->j", Y, Y)
    sxy = X.T @ Y
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = sxy**2 / np.outer(sxx, syy)
        r2 = np.clip(np.nan_to_num(r2), 0.0, 1.0 - 1e-15)
        t = np.sqrt(r2 * (n - 2) / (1.0 - r2))
    pvals = 2.0 * stats.t.sf(t, df=n - 2)
    out[:] = pvals < alpha / (p * s)
    return out


def fingerprint(data: Dataset) -> dict:
    import hashlib

    h = hashlib.sha256()
    for m in (data.Y, data.X, data.X0):
        h.update(np.ascontiguousarray(m).tobytes())
    return {"n": data.n, "s": data.s, "p": data.p, "p0": data.p0, "sha256": h.hexdigest()}
