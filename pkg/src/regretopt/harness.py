"""Experiment orchestration behind the command line.

An experiment is a system (a linear JSON description or one of the builtin
nonlinear models), a disturbance recipe and a list of policies. Running it
produces a CSV of cumulative cost (or squared error) per policy and a
summary JSON.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal

from .exceptions import ConfigurationError, ValidationError
from .extensions import augment
from .hinf import h2_controller, kalman_estimator, optimal_hinf_controller, optimal_hinf_estimator
from .noncausal import noncausal_control, noncausal_estimate
from .nonlinear import CONTROL_POLICIES, FILTER_KINDS, ekf_style_loop, fm_model, mpc_loop, pendulum_model
from .regret_controller import optimal_regret_controller
from .regret_filter import optimal_regret_filter
from .systems import ControlSystem, EstimationSystem, as_signal, energy, simulate_estimation, system_from_dict

logger = logging.getLogger(__name__)

DISTURBANCE_KINDS = ("gaussian", "sawtooth", "sinusoid", "sinusoid_sum", "file")
ESTIMATION_POLICIES = ("Kalman", "Hinf", "RegretOpt", "Noncausal")
BUILTIN_MODELS = ("pendulum", "fm")
BOUND_RTOL = 1e-6

_SPEC_PARAMS = {
    "gaussian": {"scale", "dim"},
    "sawtooth": {"period", "amplitude", "width", "dim"},
    "sinusoid": {"freq", "amplitude", "phase", "func", "dim"},
    "sinusoid_sum": {"terms", "expr", "dim"},
    "file": {"path", "dim"},
}

_CONFIG_KEYS = {
    "id", "system", "params", "disturbance", "noise", "policies", "steps", "horizon",
    "delta", "gamma_tol", "lookahead", "delay", "seed", "out",
}

BUILTIN_EXPERIMENTS = {
    "pendulum-sin30": {"system": "pendulum", "disturbance": {"kind": "sinusoid", "freq": 30}},
    "pendulum-sin10": {"system": "pendulum", "disturbance": {"kind": "sinusoid", "freq": 10}},
    "pendulum-gaussian": {"system": "pendulum", "disturbance": {"kind": "gaussian"}, "seed": 0},
    "pendulum-sawtooth": {
        "system": "pendulum",
        "disturbance": {"kind": "sawtooth", "period": 10, "amplitude": 1.0},
    },
    "fm-sin": {
        "system": "fm",
        "disturbance": {"kind": "sinusoid", "freq": 10},
        "noise": {"kind": "sinusoid", "freq": 10, "func": "cos"},
    },
    "fm-sinsum": {
        "system": "fm",
        "disturbance": {"kind": "sinusoid_sum", "expr": "sin(10kΔ)+2cos(30kΔ)"},
        "noise": {"kind": "sinusoid", "freq": 10, "func": "cos"},
    },
    "fm-gaussian": {
        "system": "fm",
        "disturbance": {"kind": "gaussian"},
        "noise": {"kind": "gaussian"},
        "seed": 0,
    },
}


@dataclass(frozen=True)
class DisturbanceSpec:
    """Recipe for one input signal. ``params`` depend on ``kind``:

    * gaussian: ``scale`` (1)
    * sawtooth: ``period`` in steps (10), ``amplitude`` (1), ``width`` (1)
    * sinusoid: ``freq``, ``amplitude`` (1), ``phase`` (0), ``func`` (sin or cos),
      sampled at ``freq * k * delta``
    * sinusoid_sum: ``terms`` (list of sinusoid parameter dicts) or an
      ``expr`` such as ``"sin(10kΔ)+2cos(30kΔ)"``
    * file: ``path`` to ``.npy``, ``.json`` or comma separated text

    Every kind accepts ``dim``; deterministic recipes repeat the same signal
    in every channel.
    """

    kind: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    @classmethod
    def from_dict(cls, doc):
        if isinstance(doc, DisturbanceSpec):
            return doc
        if not isinstance(doc, dict) or "kind" not in doc:
            raise ConfigurationError("a disturbance spec must be an object with a 'kind'")
        kind = doc["kind"]
        if kind not in DISTURBANCE_KINDS:
            raise ConfigurationError(f"unknown disturbance kind {kind!r}; expected one of {DISTURBANCE_KINDS}")
        params = {k: v for k, v in doc.items() if k not in ("kind", "seed")}
        unknown = set(params) - _SPEC_PARAMS[kind]
        if unknown:
            raise ConfigurationError(f"unknown parameters {sorted(unknown)} for disturbance kind {kind!r}")
        seed = doc.get("seed")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
            raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")
        return cls(kind, params, seed)

    def to_dict(self):
        doc = {"kind": self.kind, **self.params}
        if self.seed is not None:
            doc["seed"] = self.seed
        return doc


_TERM = re.compile(
    r"\s*([+-]?)\s*(\d*\.?\d*(?:[eE][+-]?\d+)?)\s*\*?\s*(sin|cos)\s*\(\s*(\d*\.?\d*(?:[eE][+-]?\d+)?)"
    r"\s*\*?\s*k\s*\*?\s*(?:Δ|delta|d)?\s*\)\s*"
)


def parse_sinusoid_expr(expr):
    """Terms of an expression like ``"sin(10kΔ) + 2cos(30kΔ)"``."""
    terms, pos = [], 0
    expr = expr.strip()
    while pos < len(expr):
        m = _TERM.match(expr, pos)
        if not m or m.end() == pos:
            raise ConfigurationError(f"cannot parse sinusoid expression {expr!r} at position {pos}")
        sign, amp, func, freq = m.groups()
        amplitude = float(amp) if amp else 1.0
        terms.append({"func": func, "freq": float(freq) if freq else 1.0,
                      "amplitude": -amplitude if sign == "-" else amplitude})
        pos = m.end()
    if not terms:
        raise ConfigurationError("empty sinusoid expression")
    return terms


def _sinusoid(k, delta, freq, amplitude=1.0, phase=0.0, func="sin"):
    if func not in ("sin", "cos"):
        raise ConfigurationError(f"func must be 'sin' or 'cos', got {func!r}")
    fn = np.sin if func == "sin" else np.cos
    return float(amplitude) * fn(float(freq) * k * delta + float(phase))


def _load_signal(path):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"disturbance file {str(path)!r} not found")
    if path.suffix == ".npy":
        return np.load(path)
    if path.suffix == ".json":
        return np.asarray(json.loads(path.read_text()), dtype=float)
    return np.loadtxt(path, delimiter=",", ndmin=1)


def gen_disturbance(spec, T, delta=0.1, rng=None):
    """Length-``T`` signal of shape ``(T, dim)`` for a :class:`DisturbanceSpec`.

    Gaussian samples come from ``spec.seed`` when it is set, otherwise from
    ``rng`` (a ``numpy.random.Generator``), otherwise from seed 0.
    """
    spec = DisturbanceSpec.from_dict(spec)
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ValidationError(f"T must be a positive integer, got {T!r}")
    p = dict(spec.params)
    dim = int(p.pop("dim", 1))
    if dim < 1:
        raise ConfigurationError("dim must be positive")
    k = np.arange(T)
    if spec.kind == "gaussian":
        if spec.seed is not None:
            rng = np.random.default_rng(spec.seed)
        elif rng is None:
            rng = np.random.default_rng(0)
        return float(p.get("scale", 1.0)) * rng.normal(size=(T, dim))
    if spec.kind == "file":
        if "path" not in p:
            raise ConfigurationError("file disturbance needs a 'path'")
        sig = _load_signal(p["path"])
        sig = sig.reshape(sig.shape[0], -1)
        if sig.shape[0] < T:
            raise ConfigurationError(f"disturbance file has {sig.shape[0]} samples, need {T}")
        return as_signal(sig[:T], T, sig.shape[1], "disturbance")
    if spec.kind == "sawtooth":
        period = float(p.get("period", 10))
        if period <= 0:
            raise ConfigurationError("sawtooth period must be positive")
        base = float(p.get("amplitude", 1.0)) * scipy.signal.sawtooth(
            2 * np.pi * k / period, float(p.get("width", 1.0))
        )
    elif spec.kind == "sinusoid":
        if "freq" not in p:
            raise ConfigurationError("sinusoid needs a 'freq'")
        base = _sinusoid(k, delta, **p)
    else:
        if ("terms" in p) == ("expr" in p):
            raise ConfigurationError("sinusoid_sum needs exactly one of 'terms' or 'expr'")
        terms = parse_sinusoid_expr(p["expr"]) if "expr" in p else p["terms"]
        base = np.zeros(T)
        for term in terms:
            extra = set(term) - {"freq", "amplitude", "phase", "func"}
            if extra or "freq" not in term:
                raise ConfigurationError(f"bad sinusoid term {term!r}")
            base = base + _sinusoid(k, delta, **term)
    return np.repeat(np.asarray(base, dtype=float)[:, None], dim, axis=1)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see :func:`load_config` for the JSON form."""

    id: str
    system: object
    disturbance: DisturbanceSpec
    noise: DisturbanceSpec | None = None
    policies: tuple = ()
    steps: int | None = None
    horizon: int | None = None
    delta: float = 0.1
    gamma_tol: float = 1e-4
    lookahead: int = 0
    delay: int = 0
    seed: int | None = None
    params: dict = field(default_factory=dict)
    out: str | None = None

    def to_dict(self):
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        doc["params"] = dict(self.params)
        doc["disturbance"] = self.disturbance.to_dict()
        doc["noise"] = None if self.noise is None else self.noise.to_dict()
        doc["policies"] = list(self.policies)
        return doc

    @property
    def builtin(self):
        return isinstance(self.system, str) and self.system in BUILTIN_MODELS


def _int_field(doc, key, lo, default=None):
    val = doc.get(key, default)
    if val is None:
        return None
    if not isinstance(val, (int, np.integer)) or isinstance(val, bool) or val < lo:
        raise ConfigurationError(f"{key} must be an integer >= {lo}, got {val!r}")
    return int(val)


def _resolve_system(system, base_dir):
    if isinstance(system, dict):
        return system_from_dict(system)
    if isinstance(system, str):
        if system in BUILTIN_MODELS:
            return system
        path = Path(system)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigurationError(
                f"system {system!r} is neither a builtin model {BUILTIN_MODELS} nor an existing file"
            )
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"system file {str(path)!r} is not valid JSON: {exc}") from None
        return system_from_dict(doc)
    raise ConfigurationError("system must be a builtin name, a file path or an inline object")


def make_config(doc, base_dir=None, **overrides):
    """Validate a config mapping and return an :class:`ExperimentConfig`.

    ``overrides`` (seed, gamma_tol, lookahead, delay, out) replace the
    document's values when not ``None``.
    """
    if isinstance(doc, str):
        if doc not in BUILTIN_EXPERIMENTS:
            raise ConfigurationError(f"unknown builtin experiment {doc!r}; known: {sorted(BUILTIN_EXPERIMENTS)}")
        doc = {"id": doc, **BUILTIN_EXPERIMENTS[doc]}
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    doc = dict(doc)
    for key, val in overrides.items():
        if val is not None:
            doc[key] = val
    for key in ("system", "disturbance"):
        if key not in doc:
            raise ConfigurationError(f"config is missing {key!r}")
    system = _resolve_system(doc["system"], base_dir)
    sys_label = doc["system"] if isinstance(doc["system"], str) else "inline"
    exp_id = str(doc.get("id") or Path(str(sys_label)).stem)
    if not re.fullmatch(r"[A-Za-z0-9_.\-]+", exp_id):
        raise ConfigurationError(f"experiment id {exp_id!r} may only use letters, digits, '.', '_' and '-'")

    if system == "pendulum" or isinstance(system, ControlSystem):
        allowed = CONTROL_POLICIES
    elif system == "fm":
        allowed = FILTER_KINDS
    else:
        allowed = ESTIMATION_POLICIES
    policies = tuple(doc.get("policies") or allowed)
    bad = [p for p in policies if p not in allowed]
    if bad:
        raise ConfigurationError(f"unknown policies {bad} for this system; expected a subset of {allowed}")
    if len(set(policies)) != len(policies):
        raise ConfigurationError("policies must not repeat")

    is_builtin = isinstance(system, str)
    steps = _int_field(doc, "steps", 1, 100 if is_builtin else None)
    if not is_builtin and steps is not None and steps != system.T:
        raise ConfigurationError(f"steps={steps} does not match the system horizon T={system.T}")
    horizon = _int_field(doc, "horizon", 1)
    lookahead = _int_field(doc, "lookahead", 0, 0)
    delay = _int_field(doc, "delay", 0, 0)
    seed = _int_field(doc, "seed", 0)
    if (lookahead or delay) and not isinstance(system, ControlSystem):
        raise ConfigurationError("lookahead and delay apply to linear control systems only")
    if isinstance(system, ControlSystem):
        if lookahead > system.T:
            raise ConfigurationError(f"lookahead must be at most T={system.T}")
        if delay and delay >= system.T:
            raise ConfigurationError(f"delay must be below T={system.T}")
    try:
        delta = float(doc.get("delta", 0.1))
        gamma_tol = float(doc.get("gamma_tol", 1e-4))
    except (TypeError, ValueError):
        raise ConfigurationError("delta and gamma_tol must be numbers") from None
    if not delta > 0 or not gamma_tol > 0:
        raise ConfigurationError("delta and gamma_tol must be positive")
    params = doc.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigurationError("params must be an object")
    if params and system != "pendulum" and system != "fm":
        raise ConfigurationError("params apply to builtin models only")

    needs_noise = system == "fm" or isinstance(system, EstimationSystem)
    noise = doc.get("noise")
    if noise is not None and not needs_noise:
        raise ConfigurationError("noise applies to estimation experiments only")
    if needs_noise and noise is None:
        noise = {"kind": "gaussian"}
    cfg = ExperimentConfig(
        id=exp_id,
        system=doc["system"] if isinstance(doc["system"], str) else system,
        disturbance=DisturbanceSpec.from_dict(doc["disturbance"]),
        noise=None if noise is None else DisturbanceSpec.from_dict(noise),
        policies=policies,
        steps=steps,
        horizon=horizon,
        delta=delta,
        gamma_tol=gamma_tol,
        lookahead=lookahead,
        delay=delay,
        seed=seed,
        params=dict(params),
        out=None if doc.get("out") is None else str(doc["out"]),
    )
    # build the model now so bad parameters fail validation rather than the run
    if system == "pendulum":
        pendulum_model(params, delta)
    elif system == "fm":
        fm_model(delta=delta, **_fm_params(params))
    return cfg


def _fm_params(params):
    unknown = set(params) - {"beta", "omega_c"}
    if unknown:
        raise ValidationError(f"unknown fm parameters {sorted(unknown)}")
    return {k: float(v) for k, v in params.items()}


def load_config(path, **overrides):
    """Read a JSON config file (or a builtin experiment name) and validate it."""
    if path in BUILTIN_EXPERIMENTS:
        return make_config(path, **overrides)
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config {str(path)!r} not found and not a builtin experiment")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {str(path)!r} is not valid JSON: {exc}") from None
    return make_config(doc, base_dir=path.parent, **overrides)


def system_of(cfg: ExperimentConfig):
    if cfg.builtin:
        return cfg.system
    if isinstance(cfg.system, (ControlSystem, EstimationSystem)):
        return cfg.system
    return _resolve_system(cfg.system, None)


# policy comparison on linear systems -------------------------------------


@dataclass(frozen=True)
class PolicyRow:
    """One line of a comparison table. ``stage`` holds the per-step cost."""

    policy: str
    cost: float
    regret: float
    gamma_opt: float | None
    stage: np.ndarray = field(repr=False)
    certificate: dict | None = field(default=None, repr=False)

    def as_dict(self):
        return {"policy": self.policy, "cost": self.cost, "regret": self.regret, "gamma_opt": self.gamma_opt}


def _stage_costs(sys, u, x):
    return np.einsum("ti,tij,tj->t", x, sys.Q, x) + np.einsum("ti,tij,tj->t", u, sys.R, u)


def _cert_dict(cert):
    return {"gamma_opt": cert.gamma_opt, "bracket": list(cert.bracket), "iterations": cert.iterations}


def _control_policy(sys, w, policy, gamma_tol):
    cert = None
    if policy == "H2":
        u, x, _ = h2_controller(sys).run(sys, w)
    elif policy == "Hinf":
        cert, c = optimal_hinf_controller(sys, gamma_tol)
        u, x, _ = c.run(sys, w)
    elif policy == "RegretOpt":
        cert, c = optimal_regret_controller(sys, gamma_tol)
        u, x, _ = c.run(sys, w)
    elif policy == "Noncausal":
        u, _ = noncausal_control(sys, w)
        x = _simulate_states(sys, u, w)
    else:
        raise ConfigurationError(f"unknown control policy {policy!r}; expected one of {CONTROL_POLICIES}")
    return _stage_costs(sys, u, x), cert


def _simulate_states(sys, u, w):
    x = np.zeros((sys.T, sys.n))
    xt = np.zeros(sys.n)
    for t in range(sys.T):
        x[t] = xt
        xt = sys.A[t] @ xt + sys.Bu[t] @ u[t] + sys.Bw[t] @ w[t]
    return x


def compare_policies(sys: ControlSystem, w, policies=CONTROL_POLICIES, gamma_tol=1e-4):
    """Total cost, regret against the noncausal controller and ``gamma_opt`` per policy."""
    if not isinstance(sys, ControlSystem):
        raise ValidationError("compare_policies needs a ControlSystem; use compare_filters for estimation")
    w = as_signal(w, sys.T, sys.p, "w")
    _, clairvoyant = noncausal_control(sys, w)
    rows = []
    for policy in policies:
        stage, cert = _control_policy(sys, w, policy, gamma_tol)
        cost = float(stage.sum())
        regret = 0.0 if policy == "Noncausal" else cost - clairvoyant
        rows.append(PolicyRow(policy, cost, regret, None if cert is None else cert.gamma_opt, stage,
                              None if cert is None else _cert_dict(cert)))
    return rows


def compare_filters(sys: EstimationSystem, u, v, policies=ESTIMATION_POLICIES, gamma_tol=1e-4):
    """Squared estimation error, regret against the smoother and ``gamma_opt`` per filter."""
    if not isinstance(sys, EstimationSystem):
        raise ValidationError("compare_filters needs an EstimationSystem")
    u = as_signal(u, sys.T, sys.m, "u")
    v = as_signal(v, sys.T, sys.p, "v")
    y, s = simulate_estimation(sys, u, v)
    clair = noncausal_estimate(sys, y)
    base = float(((clair - s) ** 2).sum())
    rows = []
    for policy in policies:
        cert = None
        if policy == "Kalman":
            s_hat = kalman_estimator(sys).run(y)
        elif policy == "Hinf":
            cert, f = optimal_hinf_estimator(sys, gamma_tol)
            s_hat = f.run(y)
        elif policy == "RegretOpt":
            cert, f = optimal_regret_filter(sys, gamma_tol)
            s_hat = f.run(y)
        elif policy == "Noncausal":
            s_hat = clair
        else:
            raise ConfigurationError(f"unknown filter {policy!r}; expected one of {ESTIMATION_POLICIES}")
        stage = ((s_hat - s) ** 2).sum(axis=1)
        cost = float(stage.sum())
        regret = 0.0 if policy == "Noncausal" else cost - base
        rows.append(PolicyRow(policy, cost, regret, None if cert is None else cert.gamma_opt, stage,
                              None if cert is None else _cert_dict(cert)))
    return rows


# experiment runner -------------------------------------------------------


@dataclass
class ExperimentResult:
    """Outcome of :func:`run_experiment`; ``status`` is the process exit code."""

    status: int
    csv_path: Path | None
    summary_path: Path | None
    summary: dict


def _fmt(x):
    return f"{x:.12g}"


def write_csv(path, t, columns):
    """``t`` then one cumulative column per policy, 12 significant digits."""
    names = list(columns)
    lines = [",".join(["t", *names])]
    cum = {k: np.cumsum(np.asarray(v, dtype=float)) for k, v in columns.items()}
    for i, ti in enumerate(t):
        lines.append(",".join([_fmt(ti), *(_fmt(cum[k][i]) for k in names)]))
    Path(path).write_text("\n".join(lines) + "\n")


def _signals(cfg, T, dims):
    rng = np.random.default_rng(0 if cfg.seed is None else cfg.seed)
    w = gen_disturbance(_with_dim(cfg.disturbance, dims[0]), T, cfg.delta, rng)
    v = None
    if cfg.noise is not None:
        v = gen_disturbance(_with_dim(cfg.noise, dims[1]), T, cfg.delta, rng)
    return w, v


def _with_dim(spec, dim):
    if spec.kind == "file" or "dim" in spec.params:
        return spec
    return DisturbanceSpec(spec.kind, {**spec.params, "dim": dim}, spec.seed)


def _bench_worker(args):
    model_name, params, delta, kind, w, v, steps, horizon, gamma_tol = args
    if model_name == "pendulum":
        run = mpc_loop(pendulum_model(params, delta), kind, w, steps, horizon=horizon, gamma_tol=gamma_tol)
    else:
        run = ekf_style_loop(fm_model(delta=delta, **_fm_params(params)), kind, w, v, steps, gamma_tol=gamma_tol)
    return run


def _run_builtin(cfg, jobs):
    steps = cfg.steps
    w, v = _signals(cfg, steps, (1, 1))
    tasks = [(cfg.system, cfg.params, cfg.delta, k, w, v, steps, cfg.horizon, cfg.gamma_tol) for k in cfg.policies]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            runs = list(pool.map(_bench_worker, tasks))
    else:
        runs = [_bench_worker(t) for t in tasks]
    t = cfg.delta * np.arange(1, steps + 1)
    columns = {r.label: r.instantaneous for r in runs}
    totals = {r.label: r.total for r in runs}
    gammas = {}
    for r in runs:
        if r.gammas:
            g = np.asarray(r.gammas)
            gammas[r.label] = {"min": float(g.min()), "max": float(g.max()), "mean": float(g.mean()),
                               "last": float(g[-1]), "count": int(g.size)}
    regret = {}
    if "Noncausal" in totals:
        regret = {k: val - totals["Noncausal"] for k, val in totals.items()}
    summary = {
        "totals": totals,
        "regret": regret,
        "gamma": gammas,
        "bound_check": {},
        "diagnostics": {r.label: list(r.diagnostics) for r in runs if r.diagnostics},
        "disturbance_energy": energy(w) + (0.0 if v is None else energy(v)),
    }
    return t, columns, summary


def _run_linear(cfg):
    sys = system_of(cfg)
    if isinstance(sys, ControlSystem):
        w, _ = _signals(cfg, sys.T, (sys.p, None))
        offset = 0
        if cfg.lookahead or cfg.delay:
            aug, maps = augment(sys, cfg.lookahead, cfg.delay)
            w_aug = w
            for amap in maps:
                w_aug = amap.lift_disturbance(w_aug)
                offset += amap.offset
            rows = compare_policies(aug, w_aug, cfg.policies, cfg.gamma_tol)
        else:
            rows = compare_policies(sys, w, cfg.policies, cfg.gamma_tol)
        e = energy(w)
    else:
        u, v = _signals(cfg, sys.T, (sys.m, sys.p))
        rows = compare_filters(sys, u, v, cfg.policies, cfg.gamma_tol)
        e = energy(u) + energy(v)
        offset = 0
    t = np.arange(sys.T)
    columns = {r.policy: r.stage[offset:] for r in rows}
    bound = {}
    for r in rows:
        if r.policy == "RegretOpt":
            limit = r.gamma_opt ** 2 * e
            bound[r.policy] = {"regret": r.regret, "bound": limit,
                               "ok": bool(r.regret <= limit * (1 + BOUND_RTOL) + 1e-12)}
    summary = {
        "totals": {r.policy: float(r.stage[offset:].sum()) for r in rows},
        "regret": {r.policy: r.regret for r in rows},
        "gamma": {r.policy: r.certificate for r in rows if r.certificate is not None},
        "bound_check": bound,
        "diagnostics": {},
        "disturbance_energy": e,
    }
    return t, columns, summary


def _json_default(obj):
    if isinstance(obj, (ControlSystem, EstimationSystem)):
        from .systems import system_to_dict

        return system_to_dict(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs=1):
    """Run one experiment and write ``<id>.csv`` and ``<id>.summary.json``.

    Returns an :class:`ExperimentResult` whose ``status`` is 0 on success and
    4 when a regret bound cross-check fails. Synthesis and validation errors
    propagate to the caller.
    """
    out = Path(out_dir if out_dir is not None else (cfg.out or "."))
    out.mkdir(parents=True, exist_ok=True)
    if cfg.builtin:
        t, columns, summary = _run_builtin(cfg, jobs)
    else:
        t, columns, summary = _run_linear(cfg)
    csv_path = out / f"{cfg.id}.csv"
    write_csv(csv_path, t, columns)
    status = 0 if all(b["ok"] for b in summary["bound_check"].values()) else 4
    summary = {
        "id": cfg.id,
        "status": status,
        "seed": cfg.seed,
        "gamma_tol": cfg.gamma_tol,
        "steps": len(t),
        "csv": csv_path.name,
        **summary,
        "config": cfg.to_dict(),
    }
    summary_path = out / f"{cfg.id}.summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    if status:
        logger.error("regret bound cross-check failed: %s", summary["bound_check"])
    return ExperimentResult(status, csv_path, summary_path, summary)


# gain schedule export ----------------------------------------------------


def _keyed(arrays):
    T = len(next(iter(arrays.values())))
    return {str(t): {k: np.asarray(v[t]).tolist() for k, v in arrays.items()} for t in range(T)}


def controller_schedule(c, cert, meta=None):
    """JSON-ready gain schedule of a :class:`RegretController`.

    The controller runs ``u = Kz zeta + Kn nu + Kw w`` with
    ``zeta+ = A zeta + Bu u + Bw w`` (the plant copy) and
    ``nu+ = Atilde nu + Bw w``.
    """
    Kz, Kn, Kw = c.feedback()
    return {
        "kind": "regret-controller",
        "T": c.T,
        "gamma_opt": cert.gamma_opt,
        "certificate": _cert_dict(cert),
        **(meta or {}),
        "schedule": _keyed({"Kz": Kz, "Kn": Kn, "Kw": Kw, "A": c.A, "Bu": c.Bu, "Bw": c.Bw, "Atilde": c.Atilde}),
    }


def filter_schedule(f, cert, meta=None):
    """JSON-ready gain schedule of a :class:`RegretFilter`.

    The augmented filter runs ``xi[t|t] = xi_pred + Khat (y - Chat xi_pred)``,
    ``xi_pred+ = Ahat xi[t|t]`` and ``g = Lhat xi[t|t]``; the output model
    ``z+ = A z + B g``, ``s_hat = C z + D g`` maps ``g`` to the estimate.
    """
    tm = f.Tmodel
    return {
        "kind": "regret-filter",
        "T": f.T,
        "gamma_opt": cert.gamma_opt,
        "certificate": _cert_dict(cert),
        **(meta or {}),
        "schedule": _keyed({"Ahat": f.Ahat, "Khat": f.Khat, "Lhat": f.Lhat, "Chat": f.Chat}),
        "output_model": {"direction": tm.direction,
                         **_keyed({"A": tm.A, "B": tm.B, "C": tm.C, "D": tm.D})},
    }


def synthesize_schedule(sys, gamma_tol=1e-4, lookahead=0, delay=0):
    """Regret-optimal gains for a linear system, with optional lookahead/delay."""
    if isinstance(sys, ControlSystem):
        aug, maps = augment(sys, lookahead, delay)
        cert, c = optimal_regret_controller(aug, gamma_tol)
        meta = {"lookahead": lookahead, "delay": delay, "state_dim": aug.n, "original_state_dim": sys.n,
                "offset": sum(m.offset for m in maps)}
        return controller_schedule(c, cert, meta)
    if lookahead or delay:
        raise ConfigurationError("lookahead and delay apply to control systems only")
    cert, f = optimal_regret_filter(sys, gamma_tol)
    return filter_schedule(f, cert)


# random-instance sweeps --------------------------------------------------


def random_control_system(rng, T, n, m, p, scale=0.8):
    return ControlSystem(
        scale * rng.normal(size=(T, n, n)), rng.normal(size=(T, n, m)), rng.normal(size=(T, n, p)),
        np.eye(n), np.eye(m),
    )


def random_estimation_system(rng, T, n, m, p, r, scale=0.8):
    return EstimationSystem(
        scale * rng.normal(size=(T, n, n)), rng.normal(size=(T, n, m)), rng.normal(size=(T, p, n)),
        rng.normal(size=(T, r, n)),
    )


def sweep_instance(args):
    """One random instance of a sweep; returns ``(config dict, summary)``.

    Runs in a worker process. Each instance writes its own CSV and summary.
    """
    index, seed, family, out_dir, gamma_tol, lookahead, delay, max_T, max_dim = args
    rng = np.random.default_rng([seed, index])
    T = int(rng.integers(max(3, lookahead + 1, delay + 1), max_T + 1))
    dims = [int(x) for x in rng.integers(1, max_dim + 1, size=4)]
    if family == "control":
        sys = random_control_system(rng, T, *dims[:3])
    else:
        sys = random_estimation_system(rng, T, *dims)
    exp_seed = int(rng.integers(2 ** 31))
    cfg = ExperimentConfig(
        id=f"instance-{index:04d}", system=sys, disturbance=DisturbanceSpec("gaussian", {}),
        noise=None if family == "control" else DisturbanceSpec("gaussian", {}),
        policies=CONTROL_POLICIES if family == "control" else ESTIMATION_POLICIES,
        gamma_tol=gamma_tol, seed=exp_seed,
        lookahead=lookahead if family == "control" else 0,
        delay=delay if family == "control" else 0,
    )
    res = run_experiment(cfg, out_dir)
    return res.summary


def run_sweep(count, out_dir, seed=0, family="control", gamma_tol=1e-4, lookahead=0, delay=0,
              jobs=1, max_T=10, max_dim=3):
    """Random-instance suite; writes one CSV per instance and ``sweep.csv``.

    Returns the list of instance summaries and the overall status (4 when a
    regret bound cross-check failed on some instance).
    """
    if family not in ("control", "estimation"):
        raise ConfigurationError("sweep family must be 'control' or 'estimation'")
    if count < 1:
        raise ConfigurationError("sweep count must be positive")
    if max_T < max(3, lookahead + 1, delay + 1):
        raise ConfigurationError("max_T too small for the requested lookahead/delay")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(i, seed, family, str(out), gamma_tol, lookahead, delay, max_T, max_dim) for i in range(count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(sweep_instance, tasks))
    else:
        summaries = [sweep_instance(t) for t in tasks]
    lines = ["id,T,gamma_opt,regret,bound,ok"]
    status = 0
    for s in summaries:
        b = s["bound_check"].get("RegretOpt", {})
        ok = bool(b.get("ok", True))
        status = status if ok else 4
        lines.append(",".join([s["id"], str(s["steps"]), _fmt(s["gamma"]["RegretOpt"]["gamma_opt"]),
                               _fmt(b.get("regret", float("nan"))), _fmt(b.get("bound", float("nan"))),
                               str(ok).lower()]))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    return summaries, status
