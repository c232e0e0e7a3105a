"""Model parameters, volatility functions and drift diagnostics for Z = X/Y.

The asset follows dX = r X dt + sigma(Z) X dB where Y is the exponentially
weighted average of past prices (dY = lambda (X - Y) dt) and Z = X / Y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ConfigurationError, DomainError

CONSTANT = "constant"
HOBSON_ROGERS = "hobson_rogers"

_KIND_ALIASES = {
    "constant": CONSTANT,
    "const": CONSTANT,
    "hobson_rogers": HOBSON_ROGERS,
    "hobsonrogerssmile": HOBSON_ROGERS,
    "hr_smile": HOBSON_ROGERS,
}


def _positive_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Rates and horizon shared by every pricer.

    Attributes
    ----------
    r : float
        Risk-free rate per year.
    lam : float
        Memory decay rate of the exponential average Y.
    K : float
        Strike of the put.
    T : float
        Horizon in years.
    """

    r: float = 0.05
    lam: float = 1.0
    K: float = 100.0
    T: float = 1.0

    def __post_init__(self):
        for name in ("r", "lam", "K", "T"):
            object.__setattr__(self, name, _positive_finite(name, getattr(self, name)))


@dataclass(frozen=True)
class VolatilityFn:
    """Volatility as a function of the ratio z = x / y.

    Use :meth:`constant` or :meth:`hobson_rogers` rather than the raw
    constructor; they certify ``sigma_lo`` and ``sigma_hi``.
    """

    kind: str
    sigma_lo: float
    sigma_hi: float
    s: float = 0.0
    eta: float = 0.0
    eps: float = 0.0
    cap: float = 0.0
    test_mode: bool = False

    @classmethod
    def constant(cls, sigma: float, *, test_mode: bool = False) -> "VolatilityFn":
        """Constant volatility. ``sigma == 0`` is accepted only with ``test_mode``."""
        sigma = float(sigma)
        if not math.isfinite(sigma) or sigma < 0.0 or (sigma == 0.0 and not test_mode):
            raise ConfigurationError(
                f"constant volatility must be positive and finite, got {sigma!r}"
            )
        return cls(CONSTANT, sigma, sigma, s=sigma, test_mode=test_mode)

    @classmethod
    def hobson_rogers(cls, eta: float = 0.2, eps: float = 1.0, cap: float = 0.4) -> "VolatilityFn":
        """sigma(z) = min(eta * sqrt(1 + eps z^2), cap)."""
        eta = _positive_finite("eta", eta)
        eps = float(eps)
        cap = _positive_finite("cap", cap)
        if not math.isfinite(eps) or eps < 0.0:
            raise ConfigurationError(f"eps must be non-negative and finite, got {eps!r}")
        if cap < eta:
            raise ConfigurationError(f"cap ({cap}) must be >= eta ({eta})")
        hi = cap if eps > 0.0 else eta
        return cls(HOBSON_ROGERS, eta, hi, eta=eta, eps=eps, cap=cap)

    @property
    def is_constant(self) -> bool:
        return self.sigma_lo == self.sigma_hi

    def __call__(self, z):
        """Vectorised sigma(z); no domain checks (see :func:`eval_sigma`)."""
        if self.kind == CONSTANT:
            return np.full_like(np.asarray(z, dtype=float), self.s)
        z = np.asarray(z, dtype=float)
        return np.minimum(self.eta * np.sqrt(1.0 + self.eps * z * z), self.cap)

    def to_dict(self) -> dict:
        if self.kind == CONSTANT:
            return {"kind": CONSTANT, "sigma": self.s}
        return {"kind": HOBSON_ROGERS, "eta": self.eta, "eps": self.eps, "cap": self.cap}


@dataclass(frozen=True)
class MarketState:
    x: float
    z: float

    def __post_init__(self):
        object.__setattr__(self, "x", _positive_finite("x", self.x))
        object.__setattr__(self, "z", _positive_finite("z", self.z))

    @property
    def y(self) -> float:
        return self.x / self.z


def _check_z(z: float) -> float:
    z = float(z)
    if not math.isfinite(z) or z <= 0.0:
        raise DomainError(f"z must be positive and finite, got {z!r}")
    return z


def eval_sigma(vol: VolatilityFn, z: float) -> float:
    z = _check_z(z)
    return float(vol(z))


def drift_ln_z(params: ModelParams, vol: VolatilityFn, z: float) -> float:
    """Drift of ln Z at Z = z: -lam * (z - (1 + r/lam - sigma(z)^2 / (2 lam)))."""
    z = _check_z(z)
    lam = params.lam
    s = float(vol(z))
    return -lam * (z - (1.0 + params.r / lam - s * s / (2.0 * lam)))


def reversion_zone(params: ModelParams, vol: VolatilityFn) -> tuple[float, float]:
    """Interval outside of which the drift of ln Z points back towards it."""
    base = 1.0 + params.r / params.lam
    lo = base - vol.sigma_hi**2 / (2.0 * params.lam)
    hi = base - vol.sigma_lo**2 / (2.0 * params.lam)
    return lo, hi


# --- JSON schema -------------------------------------------------------------

MODEL_KEYS = {"r", "lambda", "K", "T", "vol", "x0", "z0"}


def parse_vol(doc: Mapping[str, Any]) -> VolatilityFn:
    if not isinstance(doc, Mapping):
        raise ConfigurationError("'vol' must be an object")
    if "kind" not in doc:
        raise ConfigurationError("'vol' requires a 'kind'")
    kind = _KIND_ALIASES.get(str(doc["kind"]).lower())
    if kind is None:
        raise ConfigurationError(f"unknown volatility kind {doc['kind']!r}")
    allowed = {"kind", "sigma"} if kind == CONSTANT else {"kind", "eta", "eps", "cap"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in 'vol': {sorted(unknown)}")
    try:
        if kind == CONSTANT:
            return VolatilityFn.constant(doc["sigma"])
        return VolatilityFn.hobson_rogers(doc["eta"], doc["eps"], doc["cap"])
    except KeyError as exc:
        raise ConfigurationError(f"'vol' is missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad value in 'vol': {exc}") from None


def parse_model(doc: Mapping[str, Any], extra_keys=()) -> tuple[ModelParams, VolatilityFn, MarketState]:
    """Parse the model document; keys outside the schema (and ``extra_keys``) are rejected.

    ``x0`` defaults to the strike and ``z0`` to 1.
    """
    if not isinstance(doc, Mapping):
        raise ConfigurationError("model document must be a JSON object")
    unknown = set(doc) - MODEL_KEYS - set(extra_keys)
    if unknown:
        raise ConfigurationError(f"unknown keys: {sorted(unknown)}")
    missing = [k for k in ("r", "lambda", "K", "T", "vol") if k not in doc]
    if missing:
        raise ConfigurationError(f"missing keys: {missing}")
    try:
        params = ModelParams(r=doc["r"], lam=doc["lambda"], K=doc["K"], T=doc["T"])
        state = MarketState(doc.get("x0", params.K), doc.get("z0", 1.0))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None
    return params, parse_vol(doc["vol"]), state


def model_to_dict(params: ModelParams, vol: VolatilityFn, state: MarketState) -> dict:
    return {
        "r": params.r,
        "lambda": params.lam,
        "K": params.K,
        "T": params.T,
        "vol": vol.to_dict(),
        "x0": state.x,
        "z0": state.z,
    }
