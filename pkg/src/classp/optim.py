"""CLASSP and baseline optimizers on flat per-element parameter vectors.

Every ``*_step`` function updates its ``params`` and state arrays in place
and returns ``params``.  Gradients are validated before anything is written,
so a rejected step leaves parameters and state untouched.

CLASSP keeps one accumulator per element, ``grad_sum = sum |g|**p`` over
the steps where the element passed the gate ``g**2 > threshold``.  A gated
element moves by ``alpha * g / (epsilon + grad_sum) ** (1/p)`` when decay is
on (accumulator updated first, so p=2, threshold=0 is AdaGrad exactly) and
by the plain ``alpha * g`` when decay is off, while still accumulating.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import DimensionError, NumericError

KINDS = ("classp", "sgd", "adagrad", "adam", "ewc")


def _flat(a, name):
    a = np.asarray(a)
    if a.ndim != 1:
        raise DimensionError(f"{name} must be a flat vector, got shape {a.shape}")
    return a


def _check(params, grads, *others):
    params = _flat(params, "params")
    grads = _flat(np.asarray(grads, dtype=np.float64), "grads")
    for name, arr in (("grads", grads),) + others:
        if np.shape(arr) != params.shape:
            raise DimensionError(f"{name} has shape {np.shape(arr)}, params have {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient; step rejected")
    return params, grads


@dataclass(frozen=True)
class ClasspConfig:
    alpha: float = 0.2
    threshold: float = 0.0
    p: float = 1.0
    apply_decay: bool = True
    epsilon: float = 1e-8
    # Denominator over past steps only (sum up to t-1), for study; off by default.
    exclusive_sum: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    def with_overrides(self, **kw) -> "ClasspConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class ClasspState:
    grad_sum: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "ClasspState":
        return cls(np.zeros(int(n)))


def classp_step(params, grads, state: ClasspState, cfg: ClasspConfig):
    params, grads = _check(params, grads, ("grad_sum", state.grad_sum))
    gate = grads * grads > cfg.threshold
    g = grads[gate]
    if cfg.apply_decay:
        before = state.grad_sum[gate]
        after = before + np.abs(g) ** cfg.p
        acc = before if cfg.exclusive_sum else after
        scale = cfg.alpha / (cfg.epsilon + acc) ** (1.0 / cfg.p)
        params[gate] -= scale * g
        state.grad_sum[gate] = after
    else:
        state.grad_sum[gate] += np.abs(g) ** cfg.p
        params[gate] -= cfg.alpha * g
    state.step_count += 1
    return params


def adagrad_step(params, grads, accum, alpha: float, epsilon: float = 1e-8):
    """Textbook AdaGrad with epsilon under the square root."""
    params, grads = _check(params, grads, ("accum", accum))
    accum += grads * grads
    params -= alpha * grads / np.sqrt(epsilon + accum)
    return params


def sgd_step(params, grads, alpha: float):
    params, grads = _check(params, grads)
    params -= alpha * grads
    return params


@dataclass(frozen=True)
class AdamConfig:
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass
class AdamMoments:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamMoments":
        return cls(np.zeros(int(n)), np.zeros(int(n)))


def adam_step(params, grads, moments: AdamMoments, cfg: AdamConfig, t: int):
    if t < 1:
        raise ValueError(f"Adam step index starts at 1, got {t}")
    params, grads = _check(params, grads, ("m", moments.m), ("v", moments.v))
    moments.m *= cfg.beta1
    moments.m += (1 - cfg.beta1) * grads
    moments.v *= cfg.beta2
    moments.v += (1 - cfg.beta2) * grads * grads
    m_hat = moments.m / (1 - cfg.beta1**t)
    v_hat = moments.v / (1 - cfg.beta2**t)
    params -= cfg.alpha * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return params


# --- EWC ---------------------------------------------------------------


@dataclass
class EwcState:
    anchor: np.ndarray
    fisher: np.ndarray
    lam: float = 100.0

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=np.float64)
        self.fisher = np.asarray(self.fisher, dtype=np.float64)
        if self.anchor.shape != self.fisher.shape:
            raise DimensionError("anchor and fisher must have the same shape")
        if np.any(self.fisher < 0):
            raise ValueError("fisher estimates must be non-negative")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


def ewc_fisher_diag(params, dataset, sample_count: int = 200, rng=None) -> np.ndarray:
    """Empirical Fisher diagonal: mean squared per-example log-likelihood gradient.

    Examples are drawn without replacement with ``rng`` (all examples when
    ``sample_count`` reaches the dataset size or no generator is given).
    """
    from .mlp import mlp_backward_sq_per_example, mlp_forward, softmax

    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot estimate Fisher information on an empty dataset")
    if rng is None or sample_count >= n:
        idx = np.arange(n)
    else:
        idx = np.sort(rng.choice(n, sample_count))
    x, y = dataset.x[idx], dataset.y[idx]
    logits, cache = mlp_forward(params, x)
    # d(-log p_y)/dlogits per example, without the batch-mean 1/B factor
    delta = softmax(logits)
    delta[np.arange(len(y)), y] -= 1.0
    sq = mlp_backward_sq_per_example(params, cache, delta)
    return sq.flat / len(y)


def ewc_penalized_grads(grads, params, ewc: EwcState) -> np.ndarray:
    """grads + lambda * F * (w - w*), the gradient of the quadratic EWC penalty."""
    grads = np.asarray(grads, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    if not (grads.shape == params.shape == ewc.anchor.shape):
        raise DimensionError("grads, params and EWC anchor must share a shape")
    return grads + ewc.lam * ewc.fisher * (params - ewc.anchor)


def aux_memory_count(kind: str, n: int) -> int:
    """Persistent per-element reals an optimizer keeps besides the weights."""
    if n < 0:
        raise ValueError("parameter count must be >= 0")
    per_weight = {"classp": 1, "sgd": 0, "adagrad": 1, "adam": 2, "ewc": 2}
    try:
        return per_weight[kind] * int(n)
    except KeyError:
        raise ValueError(f"unknown optimizer kind {kind!r}") from None


# --- stateful wrappers used by the training harness --------------------


class Optimizer:
    """Owns the state of one optimizer over a flat parameter vector."""

    kind = ""

    def __init__(self, n: int):
        self.n = int(n)
        self._touched = np.zeros(self.n, dtype=bool)

    def step(self, params, grads):
        raise NotImplementedError

    def set_phase(self, threshold=None, apply_decay=None):
        """Apply per-phase overrides; only CLASSP has gate and decay settings."""

    def start_task(self, params, dataset, rng):
        """Hook run before each new phase."""

    def end_task(self, params, dataset, rng):
        """Hook run after each phase; EWC consolidates here."""

    def updated_fraction(self) -> float:
        return float(self._touched.mean()) if self.n else 0.0

    @property
    def aux_memory(self) -> int:
        return aux_memory_count(self.kind, self.n)

    def state_dict(self) -> dict:
        raise NotImplementedError

    def load_state_dict(self, d: dict) -> None:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.state_dict())

    def load_json(self, s: str) -> None:
        self.load_state_dict(json.loads(s))


def _floats(a):
    return [float(v) for v in np.asarray(a).ravel()]


def _array(vals, n):
    a = np.array(vals, dtype=np.float64)
    if a.shape != (n,):
        raise DimensionError(f"expected {n} values, got {a.shape}")
    return a


class Classp(Optimizer):
    kind = "classp"

    def __init__(self, n, cfg: ClasspConfig | None = None):
        super().__init__(n)
        self.base = cfg or ClasspConfig()
        self.cfg = self.base
        self.state = ClasspState.zeros(n)

    def set_phase(self, threshold=None, apply_decay=None):
        self.cfg = self.base.with_overrides(threshold=threshold, apply_decay=apply_decay)

    def step(self, params, grads):
        return classp_step(params, grads, self.state, self.cfg)

    def updated_fraction(self) -> float:
        return update_sparsity(self.state)

    def state_dict(self):
        return {
            "kind": self.kind,
            "config": asdict(self.cfg),
            "step_count": self.state.step_count,
            "grad_sum": _floats(self.state.grad_sum),
        }

    def load_state_dict(self, d):
        self.cfg = ClasspConfig(**d["config"])
        self.state = ClasspState(_array(d["grad_sum"], self.n), int(d["step_count"]))


def update_sparsity(state: ClasspState) -> float:
    """Fraction of elements that have passed the gate at least once."""
    gs = np.asarray(state.grad_sum)
    return float((gs > 0).mean()) if gs.size else 0.0


class Sgd(Optimizer):
    kind = "sgd"

    def __init__(self, n, alpha: float = 0.2):
        super().__init__(n)
        if not alpha > 0:
            raise ValueError(f"alpha must be > 0, got {alpha}")
        self.alpha = float(alpha)

    def step(self, params, grads):
        sgd_step(params, grads, self.alpha)
        self._touched |= np.asarray(grads) != 0
        return params

    def state_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}

    def load_state_dict(self, d):
        self.alpha = float(d["alpha"])


class Adagrad(Optimizer):
    kind = "adagrad"

    def __init__(self, n, alpha: float = 0.2, epsilon: float = 1e-8):
        super().__init__(n)
        self.alpha, self.epsilon = float(alpha), float(epsilon)
        self.accum = np.zeros(self.n)

    def step(self, params, grads):
        return adagrad_step(params, grads, self.accum, self.alpha, self.epsilon)

    def updated_fraction(self) -> float:
        return float((self.accum > 0).mean()) if self.n else 0.0

    def state_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "epsilon": self.epsilon,
                "accum": _floats(self.accum)}

    def load_state_dict(self, d):
        self.alpha, self.epsilon = float(d["alpha"]), float(d["epsilon"])
        self.accum = _array(d["accum"], self.n)


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, n, cfg: AdamConfig | None = None):
        super().__init__(n)
        self.cfg = cfg or AdamConfig()
        self.moments = AdamMoments.zeros(n)
        self.t = 0

    def step(self, params, grads):
        adam_step(params, grads, self.moments, self.cfg, self.t + 1)
        self.t += 1
        self._touched |= np.asarray(grads) != 0
        return params

    def state_dict(self):
        return {"kind": self.kind, "config": asdict(self.cfg), "t": self.t,
                "m": _floats(self.moments.m), "v": _floats(self.moments.v)}

    def load_state_dict(self, d):
        self.cfg = AdamConfig(**d["config"])
        self.t = int(d["t"])
        self.moments = AdamMoments(_array(d["m"], self.n), _array(d["v"], self.n))


class Ewc(Sgd):
    """Plain SGD on the loss plus the quadratic EWC penalty.

    After each phase the current weights become the single anchor and the
    Fisher diagonal is re-estimated on that phase's data.
    """

    kind = "ewc"

    def __init__(self, n, alpha: float = 0.2, lam: float = 100.0, fisher_samples: int = 200):
        super().__init__(n, alpha)
        if not lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {lam}")
        if fisher_samples < 1:
            raise ValueError("fisher_samples must be >= 1")
        self.lam = float(lam)
        self.fisher_samples = int(fisher_samples)
        self.ewc: EwcState | None = None

    def step(self, params, grads):
        if self.ewc is not None:
            grads = ewc_penalized_grads(grads, params, self.ewc)
        return super().step(params, grads)

    def end_task(self, params, dataset, rng):
        fisher = ewc_fisher_diag(params, dataset, self.fisher_samples, rng)
        self.ewc = EwcState(params.flat.copy(), fisher, self.lam)

    @property
    def aux_memory(self) -> int:
        # SGD underneath keeps nothing, so the total is the EWC buffers alone.
        return aux_memory_count("ewc", self.n) + aux_memory_count("sgd", self.n)

    def state_dict(self):
        d = {"kind": self.kind, "alpha": self.alpha, "lambda": self.lam,
             "fisher_samples": self.fisher_samples, "anchor": None, "fisher": None}
        if self.ewc is not None:
            d["anchor"] = _floats(self.ewc.anchor)
            d["fisher"] = _floats(self.ewc.fisher)
        return d

    def load_state_dict(self, d):
        self.alpha, self.lam = float(d["alpha"]), float(d["lambda"])
        self.fisher_samples = int(d["fisher_samples"])
        self.ewc = None
        if d.get("anchor") is not None:
            self.ewc = EwcState(_array(d["anchor"], self.n), _array(d["fisher"], self.n), self.lam)


def make_optimizer(kind: str, n: int, **kw) -> Optimizer:
    """Build an optimizer by name; keyword names follow the config file keys."""
    if kind == "classp":
        return Classp(n, ClasspConfig(**kw))
    if kind == "sgd":
        return Sgd(n, **kw)
    if kind == "adagrad":
        return Adagrad(n, **kw)
    if kind == "adam":
        return Adam(n, AdamConfig(**kw))
    if kind == "ewc":
        return Ewc(n, **kw)
    raise ValueError(f"unknown optimizer kind {kind!r}; expected one of {KINDS}")
