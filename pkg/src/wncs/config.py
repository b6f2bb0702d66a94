"""JSON experiment configuration.

Schema (matrices are row-major nested lists)::

    {
      "plants":   [{"A": .., "B": .., "C": .., "Qw": .., "Qv": .., "Ktilde": (optional)}],
      "channels": {"xi_s": [[..]], "xi_c": [[..]]}            # M x N
                | {"uniform_range": [lo, hi], "seed": int, "M": int},
      "weights":  "identity" | [{"Sx": .., "Su": ..}],
      "theta":    0.95,
      "aoi_cap":  20,
      "dqn":      {TrainConfig fields},
      "evaluation": {"episodes": 1000, "T": 500, "policies": [..], "seed": 0}
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .dqn import TrainConfig
from .errors import DimensionMismatch, ProbabilityRange, SchemaError, WncsError
from .model import CostWeights, PlantModel
from .network import NetworkModel
from .simulator import WncsSystem


@dataclass
class ExperimentConfig:
    plants: list
    net: NetworkModel
    weights: list
    theta: float
    aoi_cap: int
    dqn: TrainConfig
    evaluation: dict
    raw: dict = field(repr=False)
    digest: str = ""

    def system(self, cap=None):
        return WncsSystem(self.plants, self.net, self.weights, self.theta, cap or self.aoi_cap)


def _matrix(obj, path):
    try:
        m = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError("expected a numeric matrix", path) from exc
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or not np.all(np.isfinite(m)):
        raise SchemaError("expected a finite 2-D matrix", path)
    return m


def _probabilities(obj, path, M, N):
    m = _matrix(obj, path)
    if m.shape != (M, N):
        raise DimensionMismatch(f"expected shape {(M, N)}, got {m.shape}", path)
    for (r, c), val in np.ndenumerate(m):
        if not 0.0 <= val <= 1.0:
            raise ProbabilityRange(f"probability {val} outside [0, 1]", f"{path}[{r}][{c}]")
    return m


def _plant(d, path):
    if not isinstance(d, dict):
        raise SchemaError("plant entry must be an object", path)
    for key in ("A", "B", "C", "Qw", "Qv"):
        if key not in d:
            raise SchemaError(f"missing field {key!r}", path)
    A = _matrix(d["A"], f"{path}.A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch("A must be square", f"{path}.A")
    B = _matrix(d["B"], f"{path}.B")
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {n}x{n}", f"{path}.B")
    C = _matrix(d["C"], f"{path}.C")
    if C.shape[1] != n:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, A is {n}x{n}", f"{path}.C")
    Qw = _matrix(d["Qw"], f"{path}.Qw")
    if Qw.shape != (n, n):
        raise DimensionMismatch("Qw must match A", f"{path}.Qw")
    Qv = _matrix(d["Qv"], f"{path}.Qv")
    if Qv.shape != (C.shape[0], C.shape[0]):
        raise DimensionMismatch("Qv must match the output dimension", f"{path}.Qv")
    K = d.get("Ktilde")
    try:
        return PlantModel.build(A, B, C, Qw, Qv, Ktilde=None if K is None else _matrix(K, f"{path}.Ktilde"))
    except WncsError as exc:
        raise SchemaError(str(exc), path) from exc


def parse_config(text):
    try:
        raw = json.loads(text)
    except ValueError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError("top level must be an object")
    if not raw.get("plants"):
        raise SchemaError("at least one plant is required", "plants")
    plants = [_plant(p, f"plants[{i}]") for i, p in enumerate(raw["plants"])]
    N = len(plants)

    ch = raw.get("channels")
    if not isinstance(ch, dict):
        raise SchemaError("missing channel specification", "channels")
    if "uniform_range" in ch:
        lo, hi = ch["uniform_range"]
        if not 0.0 <= lo <= hi <= 1.0:
            raise ProbabilityRange("uniform_range must satisfy 0 <= lo <= hi <= 1", "channels.uniform_range")
        M = int(ch.get("M", raw.get("M", 0)))
        if M < 1:
            raise SchemaError("channel sampler needs M >= 1", "channels.M")
        net = NetworkModel.uniform_random(N, M, lo, hi, np.random.default_rng(int(ch.get("seed", 0))))
    else:
        if "xi_s" not in ch or "xi_c" not in ch:
            raise SchemaError("need xi_s and xi_c", "channels")
        M = len(ch["xi_s"])
        xs = _probabilities(ch["xi_s"], "channels.xi_s", M, N)
        xc = _probabilities(ch["xi_c"], "channels.xi_c", M, N)
        net = NetworkModel(N, M, xs, xc)

    w = raw.get("weights", "identity")
    if w == "identity":
        weights = [CostWeights.identity(p.n, p.m) for p in plants]
    elif isinstance(w, list) and len(w) == N:
        weights = []
        for i, (wd, p) in enumerate(zip(w, plants)):
            Sx = _matrix(wd.get("Sx"), f"weights[{i}].Sx")
            Su = _matrix(wd.get("Su"), f"weights[{i}].Su")
            if Sx.shape != (p.n, p.n) or Su.shape != (p.m, p.m):
                raise DimensionMismatch("weight shapes do not match plant", f"weights[{i}]")
            weights.append(CostWeights(Sx, Su))
    else:
        raise SchemaError("weights must be 'identity' or one entry per plant", "weights")

    theta = float(raw.get("theta", 0.95))
    if not 0.0 <= theta < 1.0:
        raise SchemaError("theta must lie in [0, 1)", "theta")
    cap = int(raw.get("aoi_cap", 20))
    if cap < 1:
        raise SchemaError("aoi_cap must be positive", "aoi_cap")
    dqn_raw = dict(raw.get("dqn", {}))
    dqn_raw.setdefault("theta", theta if theta > 0 else 0.95)
    dqn_raw.setdefault("cap", cap)
    try:
        dqn = TrainConfig(**dqn_raw)
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc), "dqn") from exc
    digest = hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()[:16]
    return ExperimentConfig(plants, net, weights, theta, cap, dqn, dict(raw.get("evaluation", {})), raw, digest)


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def bundled(name):
    """Text of a configuration shipped with the package (e.g. ``three_loops.json``)."""
    return resources.files("wncs").joinpath("data", name).read_text(encoding="utf-8")
