"""Experiment configuration: a single JSON document, validated fail-fast.

Unknown keys are rejected everywhere (a typo in a sweep config should
abort the run, not silently fall back to a default).  The config hash
written into every CSV row is a digest of the fully parsed, normalised
document, so a row can always be traced back to the exact settings that
produced it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .estimation import Method
from .filtering import FilterKind, ProposalKind
from .model import ModelParams

FUNCTIONALS = ("pair_product", "suffstats", "score", "component_mean")
ALGORITHMS = ("gradient_ascent", "em")


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _check_keys(obj: dict, allowed, where: str):
    unknown = set(obj) - set(allowed)
    _require(not unknown, f"unknown keys in {where}: {sorted(unknown)}")


def _parse_theta(obj, where: str) -> ModelParams:
    _require(isinstance(obj, dict), f"{where} must be an object")
    _check_keys(obj, ("a", "log_sigma_x", "log_sigma_y"), where)
    for k in ("a", "log_sigma_x", "log_sigma_y"):
        _require(k in obj, f"{where} is missing '{k}'")
    a = obj["a"]
    _require(isinstance(a, list) and len(a) >= 1, f"{where}.a must be a nonempty list")
    try:
        return ModelParams(tuple(float(v) for v in a), float(obj["log_sigma_x"]), float(obj["log_sigma_y"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def _parse_method(obj, where: str) -> Method:
    _require(isinstance(obj, dict), f"{where} must be an object")
    _check_keys(obj, ("smoother", "filter"), where)
    for k in ("smoother", "filter"):
        _require(k in obj, f"{where} is missing '{k}'")
    try:
        return Method(obj["smoother"], FilterKind(obj["filter"]))
    except ValueError as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


_ALLOWED_KEYS = (
    "seed",
    "V",
    "V_values",
    "T",
    "N",
    "M",
    "block_size",
    "enlargement_radius",
    "proposal",
    "methods",
    "functional",
    "functional_ring",
    "theta_true",
    "theta_init",
    "replicates",
    "iterations",
    "algorithms",
)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    T: int
    N: int
    theta_true: ModelParams
    V_values: tuple = ()
    M: int = 100
    block_size: int | None = None
    enlargement_radius: int = 0
    proposal: ProposalKind = ProposalKind.LOCALLY_OPTIMAL
    methods: tuple = ()
    functional: str = "pair_product"
    functional_ring: int = 1
    theta_init: ModelParams | None = None
    replicates: int = 1
    iterations: int = 100
    algorithms: tuple = field(default_factory=lambda: ("gradient_ascent", "em"))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _require(isinstance(raw, dict), "config must be a JSON object")
        _check_keys(raw, _ALLOWED_KEYS, "config")
        for k in ("seed", "T", "N", "theta_true"):
            _require(k in raw, f"config is missing '{k}'")

        seed = raw["seed"]
        _require(isinstance(seed, int) and 0 <= seed < 2**64, "seed must be a 64-bit unsigned int")

        def count(name, minimum=1, default=None):
            v = raw.get(name, default)
            if v is None:
                return None
            _require(isinstance(v, int) and v >= minimum, f"{name} must be an int >= {minimum}")
            return v

        T = count("T")
        N = count("N")
        M = count("M", default=100)
        replicates = count("replicates", default=1)
        iterations = count("iterations", minimum=0, default=100)
        enlargement_radius = count("enlargement_radius", minimum=0, default=0)
        block_size = count("block_size", default=None)

        if "V_values" in raw:
            _require("V" not in raw, "give either V or V_values, not both")
            vals = raw["V_values"]
            _require(
                isinstance(vals, list) and vals and all(isinstance(v, int) and v >= 1 for v in vals),
                "V_values must be a nonempty list of positive ints",
            )
            v_values = tuple(vals)
        else:
            _require("V" in raw, "config needs V or V_values")
            v = raw["V"]
            _require(isinstance(v, int) and v >= 1, "V must be a positive int")
            v_values = (v,)

        try:
            proposal = ProposalKind(raw.get("proposal", "locally_optimal"))
        except ValueError as exc:
            raise ConfigError(f"invalid proposal: {exc}") from exc

        functional = raw.get("functional", "pair_product")
        _require(functional in FUNCTIONALS, f"functional must be one of {FUNCTIONALS}")
        functional_ring = count("functional_ring", minimum=0, default=1)

        methods_raw = raw.get("methods", [])
        _require(isinstance(methods_raw, list), "methods must be a list")
        methods = tuple(_parse_method(m, f"methods[{i}]") for i, m in enumerate(methods_raw))

        theta_true = _parse_theta(raw["theta_true"], "theta_true")
        theta_init = None
        if raw.get("theta_init") is not None:
            theta_init = _parse_theta(raw["theta_init"], "theta_init")
            _require(
                theta_init.radius == theta_true.radius,
                "theta_init and theta_true must have the same radius",
            )

        algorithms = raw.get("algorithms", ["gradient_ascent", "em"])
        _require(
            isinstance(algorithms, list)
            and algorithms
            and all(a in ALGORITHMS for a in algorithms),
            f"algorithms must be a nonempty sublist of {ALGORITHMS}",
        )

        needs_blocks = any(
            m.smoother.is_blocked or m.filter_kind.value.startswith("bpf") or "tilde" in m.filter_kind.value
            for m in methods
        )
        if needs_blocks:
            _require(block_size is not None, "block_size is required by the configured methods")
        if block_size is not None:
            _require(block_size <= min(v_values), "block_size must not exceed V")
        if functional == "pair_product":
            _require(
                functional_ring <= theta_true.radius,
                "functional_ring must not exceed the model radius",
            )

        return cls(
            seed=seed,
            T=T,
            N=N,
            theta_true=theta_true,
            V_values=v_values,
            M=M,
            block_size=block_size,
            enlargement_radius=enlargement_radius,
            proposal=proposal,
            methods=methods,
            functional=functional,
            functional_ring=functional_ring,
            theta_init=theta_init,
            replicates=replicates,
            iterations=iterations,
            algorithms=tuple(algorithms),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def with_seed(self, seed: int) -> "ExperimentConfig":
        _require(isinstance(seed, int) and 0 <= seed < 2**64, "seed must be a 64-bit unsigned int")
        return ExperimentConfig(**{**self.__dict__, "seed": seed})

    def to_canonical_dict(self) -> dict:
        def theta_dict(th):
            if th is None:
                return None
            return {"a": list(th.a), "log_sigma_x": th.log_sigma_x, "log_sigma_y": th.log_sigma_y}

        return {
            "seed": self.seed,
            "V_values": list(self.V_values),
            "T": self.T,
            "N": self.N,
            "M": self.M,
            "block_size": self.block_size,
            "enlargement_radius": self.enlargement_radius,
            "proposal": self.proposal.value,
            "methods": [{"smoother": m.smoother.value, "filter": m.filter_kind.value} for m in self.methods],
            "functional": self.functional,
            "functional_ring": self.functional_ring,
            "theta_true": theta_dict(self.theta_true),
            "theta_init": theta_dict(self.theta_init),
            "replicates": self.replicates,
            "iterations": self.iterations,
            "algorithms": list(self.algorithms),
        }

    def config_hash(self) -> str:
        text = json.dumps(self.to_canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
