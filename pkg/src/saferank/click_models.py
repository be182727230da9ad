"""Bandit instances and click simulation for the position-based and cascade models.

Conventions used throughout the package:

* Items are integers ``0 .. L-1``. Instance files on disk use 1-based ids
  (see :func:`load_instance`); everything in memory is 0-based.
* A ranking is a 1-d integer array of distinct item ids. Displayed rankings
  have length ``K``; the re-ranking algorithms internally carry a working
  ranking of length ``K + 1`` whose last slot is never shown to the user.
* A click vector is a 0/1 integer array aligned with the displayed ranking.
  Positions beyond the display are unobserved and read as 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import InputContractError

MODEL_KINDS = ("pbm", "cm")
SCENARIOS = ("optimal_original", "missing_top", "random")

# attraction probabilities for synthetic instances stay inside this band
_ALPHA_LOW, _ALPHA_HIGH = 0.05, 0.9
_CHI_LOW, _CHI_HIGH = 0.2, 1.0


@dataclass(frozen=True)
class BanditInstance:
    """Ground-truth environment for a stochastic click bandit.

    ``alpha[i]`` is the attraction probability of item ``i``; for the
    position-based model ``chi[k]`` is the examination probability of display
    position ``k`` and must be nonincreasing. ``original_ranking`` holds the
    K items of the production ranking the algorithms start from.
    """

    num_items: int
    display_size: int
    attraction: np.ndarray
    model_kind: str
    examination: np.ndarray | None
    original_ranking: np.ndarray

    def __post_init__(self) -> None:
        L, K = self.num_items, self.display_size
        if L < 1 or K < 1:
            raise InputContractError("num_items and display_size must be positive")
        if K >= L:
            raise InputContractError(
                f"display_size must be smaller than num_items (K={K}, L={L})"
            )
        if self.model_kind not in MODEL_KINDS:
            raise InputContractError(f"unknown model kind {self.model_kind!r}")

        alpha = np.asarray(self.attraction, dtype=np.float64)
        if alpha.shape != (L,):
            raise InputContractError(f"attraction must have shape ({L},)")
        _check_probabilities(alpha, "attraction")

        if self.model_kind == "pbm":
            if self.examination is None:
                raise InputContractError("pbm instances require examination probabilities")
            chi = np.asarray(self.examination, dtype=np.float64)
            if chi.shape != (K,):
                raise InputContractError(f"examination must have shape ({K},)")
            _check_probabilities(chi, "examination")
            if np.any(np.diff(chi) > 0):
                raise InputContractError("examination must be nonincreasing in position")
            chi.setflags(write=False)
            object.__setattr__(self, "examination", chi)
        elif self.examination is not None:
            raise InputContractError("cm instances must not carry examination probabilities")

        ranking = np.asarray(self.original_ranking, dtype=np.int64)
        validate_ranking(ranking, L, K)
        alpha.setflags(write=False)
        ranking.setflags(write=False)
        object.__setattr__(self, "attraction", alpha)
        object.__setattr__(self, "original_ranking", ranking)


def _check_probabilities(values: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise InputContractError(f"{name} entries must lie in [0, 1]")


def validate_ranking(ranking: np.ndarray, num_items: int, length: int) -> None:
    """Raise unless ``ranking`` is ``length`` distinct item ids below ``num_items``."""
    if ranking.ndim != 1 or ranking.shape[0] != length:
        raise InputContractError(f"ranking must hold exactly {length} items")
    if np.any(ranking < 0) or np.any(ranking >= num_items):
        raise InputContractError(f"ranking contains ids outside 0..{num_items - 1}")
    if len(set(ranking.tolist())) != length:
        raise InputContractError("ranking contains duplicate items")


def inverse_positions(ranking: np.ndarray, num_items: int) -> np.ndarray:
    """Position of every item in ``ranking``; absent items get ``num_items + 1``.

    The sentinel compares greater than any real position, which is all the
    inversion counting needs from the "position of an absent item" notion.
    """
    pos = np.full(num_items, num_items + 1, dtype=np.int64)
    pos[ranking] = np.arange(ranking.shape[0])
    return pos


def sample_clicks(
    instance: BanditInstance,
    displayed: np.ndarray,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw one click vector (or ``size`` of them) for a displayed ranking.

    Under the position-based model each position is examined independently
    with probability ``chi[k]`` and clicked iff also attracted. Under the
    cascade model the user scans top-down and stops right after the first
    click, so at most one position is clicked per draw.

    With ``size=None`` the draw order is one examination block followed by
    one attraction block of K uniforms each (attraction only, for the
    cascade model), which keeps single-round draws reproducible round by
    round. Batched draws consume the stream in a different order and are
    meant for Monte Carlo use.
    """
    displayed = np.asarray(displayed, dtype=np.int64)
    validate_ranking(displayed, instance.num_items, instance.display_size)
    K = instance.display_size
    batch = 1 if size is None else int(size)
    if batch < 1:
        raise InputContractError("size must be a positive count")
    shape = (K,) if size is None else (batch, K)

    alpha = instance.attraction[displayed]
    if instance.model_kind == "pbm":
        examined = rng.random(shape) < instance.examination
        attracted = rng.random(shape) < alpha
        clicks = (examined & attracted).astype(np.int64)
    else:
        attracted = rng.random(shape) < alpha
        att2d = np.atleast_2d(attracted)
        clicks2d = np.zeros_like(att2d, dtype=np.int64)
        rows = att2d.any(axis=1)
        first = att2d.argmax(axis=1)
        clicks2d[np.nonzero(rows)[0], first[rows]] = 1
        clicks = clicks2d.reshape(shape)
    return clicks


@njit(cache=True, nogil=True)
def _expected_reward_arrays(alpha, chi, is_pbm, displayed):
    # sequential accumulation in position order; both execution engines rely
    # on this exact summation
    K = displayed.shape[0]
    if is_pbm:
        total = 0.0
        for k in range(K):
            total += chi[k] * alpha[displayed[k]]
        return total
    miss = 1.0
    for k in range(K):
        miss *= 1.0 - alpha[displayed[k]]
    return 1.0 - miss


def expected_reward(instance: BanditInstance, displayed: np.ndarray) -> float:
    """Expected number of clicks a ranking collects in one round.

    PBM: sum over positions of chi[k] * alpha[item at k]. CM: probability of
    at least one click, 1 - prod(1 - alpha), which is order-free.
    """
    displayed = np.asarray(displayed, dtype=np.int64)
    validate_ranking(displayed, instance.num_items, instance.display_size)
    is_pbm = instance.model_kind == "pbm"
    chi = instance.examination if is_pbm else np.zeros(0)
    return float(_expected_reward_arrays(instance.attraction, chi, is_pbm, displayed))


def optimal_ranking(instance: BanditInstance) -> np.ndarray:
    """Top-K items by attraction, descending; ties go to the smaller id."""
    L = instance.num_items
    order = np.lexsort((np.arange(L), -instance.attraction))
    return order[: instance.display_size].astype(np.int64)


def optimal_reward(instance: BanditInstance) -> float:
    """Highest expected reward over all K-item rankings of the instance."""
    return expected_reward(instance, optimal_ranking(instance))


def generate_instance(
    scenario: str,
    num_items: int,
    display_size: int,
    seed: int,
    model_kind: str = "pbm",
) -> BanditInstance:
    """Build a synthetic instance for one of the named scenarios.

    ``optimal_original`` starts from the best possible ranking,
    ``missing_top`` excludes the most attractive items from the original
    ranking (all top-K when the catalog is large enough), and ``random``
    starts from a uniformly random K-subset. Attractions are uniform on
    [0.05, 0.9]; PBM examination probabilities are sorted uniforms on
    [0.2, 1.0]. Identical arguments yield identical instances.
    """
    if scenario not in SCENARIOS:
        raise InputContractError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    if model_kind not in MODEL_KINDS:
        raise InputContractError(f"unknown model kind {model_kind!r}")
    L, K = int(num_items), int(display_size)
    if K >= L:
        raise InputContractError(f"need K < L, got K={K}, L={L}")

    rng = np.random.default_rng(seed)
    alpha = rng.uniform(_ALPHA_LOW, _ALPHA_HIGH, L)
    chi = np.sort(rng.uniform(_CHI_LOW, _CHI_HIGH, K))[::-1].copy() if model_kind == "pbm" else None

    by_attraction = np.lexsort((np.arange(L), -alpha))
    if scenario == "optimal_original":
        original = by_attraction[:K]
    elif scenario == "missing_top":
        if 2 * K <= L:
            original = by_attraction[K : 2 * K]
        else:
            original = by_attraction[1 : K + 1]
    else:
        original = rng.permutation(L)[:K]

    return BanditInstance(
        num_items=L,
        display_size=K,
        attraction=alpha,
        model_kind=model_kind,
        examination=chi,
        original_ranking=np.asarray(original, dtype=np.int64),
    )


_INSTANCE_FIELDS = {"model", "L", "K", "alpha", "chi", "original_ranking"}


def load_instance(path: str | Path) -> BanditInstance:
    """Read an instance from its JSON file format.

    The document carries ``model`` ("pbm" or "cm"), ``L``, ``K``, ``alpha``
    (L reals), ``chi`` (K reals, PBM only) and ``original_ranking`` (K
    one-based item ids). Unknown fields are rejected rather than ignored so
    that typos surface as errors.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputContractError(f"instance file {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise InputContractError(f"instance file {path}: expected a JSON object")
    unknown = set(doc) - _INSTANCE_FIELDS
    if unknown:
        raise InputContractError(f"instance file {path}: unknown fields {sorted(unknown)}")
    for name in ("model", "L", "K", "alpha", "original_ranking"):
        if name not in doc:
            raise InputContractError(f"instance file {path}: missing field {name!r}")
    model = doc["model"]
    if model not in MODEL_KINDS:
        raise InputContractError(f"instance file {path}: model must be one of {MODEL_KINDS}")
    if model == "pbm" and "chi" not in doc:
        raise InputContractError(f"instance file {path}: pbm instances require 'chi'")
    if model == "cm" and "chi" in doc:
        raise InputContractError(f"instance file {path}: 'chi' is only valid for pbm")

    ranking = np.asarray(doc["original_ranking"], dtype=np.int64) - 1
    return BanditInstance(
        num_items=int(doc["L"]),
        display_size=int(doc["K"]),
        attraction=np.asarray(doc["alpha"], dtype=np.float64),
        model_kind=model,
        examination=np.asarray(doc["chi"], dtype=np.float64) if model == "pbm" else None,
        original_ranking=ranking,
    )


def save_instance(instance: BanditInstance, path: str | Path) -> None:
    """Write an instance in the JSON file format used by :func:`load_instance`."""
    doc: dict = {
        "model": instance.model_kind,
        "L": instance.num_items,
        "K": instance.display_size,
        "alpha": instance.attraction.tolist(),
    }
    if instance.model_kind == "pbm":
        doc["chi"] = instance.examination.tolist()
    doc["original_ranking"] = (instance.original_ranking + 1).tolist()
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
