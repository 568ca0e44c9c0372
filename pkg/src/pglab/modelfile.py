"""Self-describing model files: parse, validate, build, round-trip.

A model file is a JSON document with the fixed top-level keys

    kind, n, m, k_controls, theta, rewards, trans, obs,
    initial_state, bound_R, bound_B

in that order, where inapplicable keys hold null. Numbers are serialized as
decimal with 17 significant digits, which round-trips IEEE doubles exactly,
so parse(serialize(spec)) reproduces spec bit-for-bit.

Kinds:
  chain_softmax_table  n states, theta is the flat n*n logit table.
  chain_explicit       trans holds one n x n matrix; theta (optional) adds
                       parameter coordinates the matrix does not depend on.
  pomdp                m observations, k_controls controls; theta is the
                       flat m x k_controls policy logit table; trans holds
                       k_controls matrices; rewards is length n (state
                       rewards) or n x k_controls (control-dependent).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import ParamChain, make_constant_chain, make_softmax_table_chain
from .errors import ParseError, ValidationError
from .pomdp import PomdpModel, SoftmaxPolicy

__all__ = [
    "ModelSpecFile",
    "parse_model",
    "parse_model_text",
    "serialize_model",
    "build_model",
    "bundled_model_path",
]

KINDS = ("chain_softmax_table", "chain_explicit", "pomdp")
TOP_KEYS = (
    "kind", "n", "m", "k_controls", "theta", "rewards", "trans", "obs",
    "initial_state", "bound_R", "bound_B",
)


@dataclass(frozen=True)
class ModelSpecFile:
    """Validated in-memory form of a model file."""

    kind: str
    n: int
    m: int | None
    k_controls: int | None
    theta: np.ndarray | None
    rewards: np.ndarray
    trans: np.ndarray | None
    obs: np.ndarray | None
    initial_state: int | None
    bound_R: float | None
    bound_B: float | None

    def __eq__(self, other):
        if not isinstance(other, ModelSpecFile):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                return np.array_equal(np.asarray(a), np.asarray(b))
            return a == b

        return all(same(getattr(self, k), getattr(other, k)) for k in TOP_KEYS)


def _as_array(value, key: str, dtype=float):
    try:
        arr = np.asarray(value, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"key {key!r}: not a numeric array ({exc})") from None
    if arr.dtype == object:
        raise ParseError(f"key {key!r}: ragged or non-numeric array")
    return arr


def _require_int(value, key: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ParseError(f"key {key!r}: expected an integer, got {value!r}")
    return value


def parse_model_text(text: str) -> ModelSpecFile:
    """Parse and validate a model document from a string."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    unknown = set(doc) - set(TOP_KEYS)
    if unknown:
        raise ParseError(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("kind", "n", "rewards"):
        if doc.get(key) is None:
            raise ParseError(f"key {key!r} is required")
    kind = doc["kind"]
    if kind not in KINDS:
        raise ParseError(f"key 'kind': {kind!r} is not one of {list(KINDS)}")
    n = _require_int(doc["n"], "n")
    if n < 1:
        raise ValidationError(f"n must be positive, got {n}")

    get = doc.get
    theta = None if get("theta") is None else _as_array(get("theta"), "theta")
    rewards = _as_array(doc["rewards"], "rewards")
    trans = None if get("trans") is None else _as_array(get("trans"), "trans")
    obs = None if get("obs") is None else _as_array(get("obs"), "obs")
    m = None if get("m") is None else _require_int(get("m"), "m")
    k_controls = (
        None if get("k_controls") is None else _require_int(get("k_controls"), "k_controls")
    )
    initial_state = (
        None if get("initial_state") is None
        else _require_int(get("initial_state"), "initial_state")
    )
    def _real(key: str):
        value = get(key)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"key {key!r}: expected a number, got {value!r}")
        return float(value)

    bound_R = _real("bound_R")
    bound_B = _real("bound_B")

    spec = ModelSpecFile(
        kind=kind, n=n, m=m, k_controls=k_controls, theta=theta,
        rewards=rewards, trans=trans, obs=obs, initial_state=initial_state,
        bound_R=bound_R, bound_B=bound_B,
    )
    _validate(spec)
    return spec


def parse_model(path) -> ModelSpecFile:
    """Parse and validate a model file from disk."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc}") from None
    return parse_model_text(text)


def _check_rows(mat, what: str):
    if np.any(mat < -1e-12):
        raise ValidationError(f"{what}: negative entries")
    err = np.abs(mat.sum(axis=-1) - 1.0).max()
    if err > 1e-9:
        raise ValidationError(f"{what}: row sums off by {err:.3e} (> 1e-9)")


def _validate(spec: ModelSpecFile):
    n = spec.n
    if spec.initial_state is not None and not 0 <= spec.initial_state < n:
        raise ValidationError(
            f"initial_state {spec.initial_state} outside 0..{n - 1}"
        )
    if spec.kind == "chain_softmax_table":
        if spec.theta is None or spec.theta.shape != (n * n,):
            raise ValidationError(f"chain_softmax_table needs theta of length {n * n}")
        if spec.trans is not None or spec.obs is not None:
            raise ValidationError("chain_softmax_table takes no trans/obs tables")
        if spec.m is not None or spec.k_controls is not None:
            raise ValidationError("chain_softmax_table takes no m/k_controls")
        if spec.rewards.shape != (n,):
            raise ValidationError(f"rewards must have shape ({n},)")
    elif spec.kind == "chain_explicit":
        if spec.trans is None or spec.trans.shape not in ((1, n, n), (n, n)):
            raise ValidationError(
                f"chain_explicit needs trans as one {n}x{n} matrix"
            )
        mat = spec.trans if spec.trans.ndim == 2 else spec.trans[0]
        _check_rows(mat, "trans")
        if spec.obs is not None or spec.m is not None or spec.k_controls is not None:
            raise ValidationError("chain_explicit takes no obs/m/k_controls")
        if spec.theta is not None and spec.theta.ndim != 1:
            raise ValidationError("theta must be a flat array")
        if spec.rewards.shape != (n,):
            raise ValidationError(f"rewards must have shape ({n},)")
    else:
        if spec.m is None or spec.k_controls is None:
            raise ValidationError("pomdp needs m and k_controls")
        m, N = spec.m, spec.k_controls
        if m < 1 or N < 1:
            raise ValidationError("m and k_controls must be positive")
        if spec.theta is None or spec.theta.shape != (m * N,):
            raise ValidationError(f"pomdp needs theta of length m*k_controls = {m * N}")
        if spec.trans is None or spec.trans.shape != (N, n, n):
            raise ValidationError(f"pomdp needs trans of shape ({N}, {n}, {n})")
        for u in range(N):
            _check_rows(spec.trans[u], f"trans[{u}]")
        if spec.obs is None or spec.obs.shape != (n, m):
            raise ValidationError(f"pomdp needs obs of shape ({n}, {m})")
        _check_rows(spec.obs, "obs")
        if spec.rewards.shape not in ((n,), (n, N)):
            raise ValidationError(f"rewards must have shape ({n},) or ({n}, {N})")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _emit(value, indent: int) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _fmt(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, list):
        inner = ", ".join(_emit(v, indent) for v in value)
        return f"[{inner}]"
    raise TypeError(f"cannot serialize {type(value)}")


def serialize_model(spec: ModelSpecFile) -> str:
    """Canonical text form: fixed key order, 17-significant-digit decimals."""
    lines = ["{"]
    for i, key in enumerate(TOP_KEYS):
        value = getattr(spec, key)
        comma = "," if i < len(TOP_KEYS) - 1 else ""
        lines.append(f'  "{key}": {_emit(value, 2)}{comma}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def build_model(spec: ModelSpecFile):
    """Instantiate the runnable object a model file describes.

    Returns a ParamChain for chain kinds and a (PomdpModel, SoftmaxPolicy)
    pair for pomdp files. Declared bounds are attached to chains and checked
    by ParamChain.validate.
    """
    if spec.kind == "chain_softmax_table":
        chain = make_softmax_table_chain(spec.theta, spec.rewards)
        if spec.bound_R is not None or spec.bound_B is not None:
            chain = ParamChain(
                theta=chain.theta, rewards=chain.rewards,
                transition_fn=chain.transition_fn, grad_fn=chain.grad_fn,
                hess_fn=chain.hess_fn,
                reward_bound=spec.bound_R if spec.bound_R is not None else chain.reward_bound,
                ratio_bound=spec.bound_B if spec.bound_B is not None else chain.ratio_bound,
            )
        chain.validate()
        return chain
    if spec.kind == "chain_explicit":
        mat = spec.trans if spec.trans.ndim == 2 else spec.trans[0]
        chain = make_constant_chain(mat, spec.rewards, theta=spec.theta)
        chain.validate()
        return chain
    model = PomdpModel(trans=spec.trans, obs=spec.obs, rewards=spec.rewards)
    policy = SoftmaxPolicy(theta=spec.theta.reshape(spec.m, spec.k_controls))
    return model, policy


def bundled_model_path(name: str) -> Path:
    """Path of a model file shipped inside the package."""
    path = Path(__file__).parent / "models" / name
    if not path.exists():
        raise ParseError(f"no bundled model named {name!r}")
    return path
