"""Seeded synthetic benchmark generator with controllable aliasing.

Each generated technique produces, per query, a base noise floor plus a
signal peak at the ground-truth index (unless the technique is scheduled to
fail there) plus a distractor peak somewhere else. Distractor sites can be
shared between techniques (correlated aliasing) or kept mutually distinct,
which is what makes ensembles complementary or adversarial on demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import GroundTruth, SimilarityTensor, TechniqueId
from .errors import InvalidSpecError


def _per_technique(value, n: int, name: str, lo: float, hi: float) -> np.ndarray:
    """Broadcast a scalar or validate a length-n sequence of reals."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise InvalidSpecError(f"{name} must be a scalar or length-{n} sequence")
    if np.any(arr < lo) or np.any(arr > hi):
        raise InvalidSpecError(f"{name} entries must lie in [{lo}, {hi}]")
    return arr


@dataclass
class SynthSpec:
    """Recipe for one synthetic ensemble.

    Scalar fields broadcast across techniques; sequences set one value per
    technique. ``failure_schedule[n]`` lists half-open (start, stop) query
    ranges where technique n's ground-truth peak is suppressed.
    ``drift_period``, when set, additionally rotates which pair of
    techniques is healthy every that-many queries. ``r_window`` is the
    downstream exclusion half-width the fixture targets: distractor sites
    are kept at least 2*r_window + 2 indices away from the ground-truth
    index so window exclusion is exercised unambiguously.
    """

    n_techniques: int
    queries: int
    database_size: int
    peak_strength: object = 1.0
    alias_strength: object = 0.5
    alias_secondary: object = 0.0
    alias_correlation: object = 0.0
    noise_sigma: object = 0.0
    failure_schedule: list = field(default_factory=list)
    drift_period: int | None = None
    r_window: int = 0
    gt_tolerance: int = 0
    seed: int = 0
    names: list | None = None

    def validate(self) -> None:
        n, q, d = self.n_techniques, self.queries, self.database_size
        if n < 1:
            raise InvalidSpecError("n_techniques must be >= 1")
        if q < 1:
            raise InvalidSpecError("queries must be >= 1")
        if d <= 2 * self.r_window + 1:
            raise InvalidSpecError(
                "database_size must exceed 2 * r_window + 1 for downstream validity"
            )
        # each drawn distractor reserves its site plus a companion echo site;
        # sites stay outside the protected region around the ground-truth
        # index and beyond window range of each other
        excluded = 2 * (2 * self.r_window + 1) + 1
        if d - excluded < 2 * (n + 1) * (self.r_window + 1):
            raise InvalidSpecError(
                f"database_size {d} too small for {n} well-separated "
                f"distractor sites at r_window {self.r_window}"
            )
        _per_technique(self.peak_strength, n, "peak_strength", 0.0, 1.0)
        _per_technique(self.alias_strength, n, "alias_strength", 0.0, np.inf)
        _per_technique(self.alias_secondary, n, "alias_secondary", 0.0, 1.0)
        _per_technique(self.alias_correlation, n, "alias_correlation", 0.0, 1.0)
        _per_technique(self.noise_sigma, n, "noise_sigma", 0.0, np.inf)
        if self.failure_schedule and len(self.failure_schedule) != n:
            raise InvalidSpecError("failure_schedule must have one entry per technique")
        for tech, ranges in enumerate(self.failure_schedule):
            for r in ranges:
                start, stop = int(r[0]), int(r[1])
                if not (0 <= start < stop <= q):
                    raise InvalidSpecError(
                        f"failure range ({start}, {stop}) for technique {tech} "
                        f"outside [0, {q})"
                    )
        if self.drift_period is not None and self.drift_period < 1:
            raise InvalidSpecError("drift_period must be a positive integer")
        if self.gt_tolerance < 0:
            raise InvalidSpecError("gt_tolerance must be non-negative")
        if self.names is not None and len(self.names) != n:
            raise InvalidSpecError("names must have one entry per technique")

    def technique_names(self) -> list[str]:
        if self.names is not None:
            return [str(x) for x in self.names]
        return [f"tech-{i:02d}" for i in range(self.n_techniques)]

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            return v

        return {
            "n_techniques": self.n_techniques,
            "queries": self.queries,
            "database_size": self.database_size,
            "peak_strength": plain(self.peak_strength),
            "alias_strength": plain(self.alias_strength),
            "alias_secondary": plain(self.alias_secondary),
            "alias_correlation": plain(self.alias_correlation),
            "noise_sigma": plain(self.noise_sigma),
            "failure_schedule": [
                [[int(a), int(b)] for a, b in ranges]
                for ranges in self.failure_schedule
            ],
            "drift_period": self.drift_period,
            "r_window": self.r_window,
            "gt_tolerance": self.gt_tolerance,
            "seed": self.seed,
            "names": self.names,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidSpecError(f"unknown spec keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _suppressed_mask(spec: SynthSpec) -> np.ndarray:
    """Boolean (N, Q): True where the ground-truth peak is withheld."""
    n, q = spec.n_techniques, spec.queries
    mask = np.zeros((n, q), dtype=bool)
    for tech, ranges in enumerate(spec.failure_schedule or []):
        for start, stop in ranges:
            mask[tech, int(start):int(stop)] = True
    if spec.drift_period is not None:
        blocks = np.arange(q) // spec.drift_period
        for tech in range(n):
            healthy = (blocks % n == tech) | ((blocks + 1) % n == tech)
            mask[tech, ~healthy] = True
    return mask


def _echo_site(site: int, allowed: np.ndarray) -> int:
    """Deterministic companion site: the allowed site half a ring away.

    The map is a bijection on the allowed sites, so distinct distractors
    always get distinct echoes and the echo never enters the protected
    region around the ground-truth index.
    """
    pos = int(np.searchsorted(allowed, site))
    return int(allowed[(pos + allowed.size // 2) % allowed.size])


def _draw_site(rng, allowed: np.ndarray, used: list, min_sep: int) -> int:
    """Draw a site whose echo also fits, reserving both.

    Both the site and its echo must sit more than the exclusion-window
    radius away from every previously reserved site, so separately drawn
    peaks can never shadow each other inside one window.
    """
    def fits(c: int) -> bool:
        return all(abs(c - u) >= min_sep for u in used)

    for _ in range(100_000):
        site = int(allowed[rng.integers(allowed.size)])
        echo = _echo_site(site, allowed)
        if site != echo and fits(site) and fits(echo):
            used.append(site)
            used.append(echo)
            return site
    raise InvalidSpecError("could not place well-separated distractor sites")


def generate(spec: SynthSpec):
    """Build a (SimilarityTensor, GroundTruth) pair from ``spec``.

    The ground-truth index advances linearly through the database
    (query q maps to index q * D // Q). Per query, every technique gets a
    uniform [0, noise_sigma] floor, a peak of ``peak_strength`` at the
    ground-truth index unless suppressed, and a distractor peak of
    ``alias_strength`` at either the query's shared site (with probability
    ``alias_correlation``) or at a site of its own; all sites drawn within
    one query are mutually distinct. A nonzero ``alias_secondary`` echoes
    the distractor at a deterministic companion site, which lets correlated
    techniques present identical two-peak aliasing. Output is bitwise
    reproducible for a fixed seed.
    """
    spec.validate()
    n, q_total, d = spec.n_techniques, spec.queries, spec.database_size
    peak = _per_technique(spec.peak_strength, n, "peak_strength", 0.0, 1.0)
    alias = _per_technique(spec.alias_strength, n, "alias_strength", 0.0, np.inf)
    secondary = _per_technique(spec.alias_secondary, n, "alias_secondary", 0.0, 1.0)
    correlation = _per_technique(
        spec.alias_correlation, n, "alias_correlation", 0.0, 1.0
    )
    sigma = _per_technique(spec.noise_sigma, n, "noise_sigma", 0.0, np.inf)
    suppressed = _suppressed_mask(spec)
    gap = 2 * spec.r_window + 1

    rng = np.random.default_rng(spec.seed)
    data = np.zeros((n, q_total, d), dtype=np.float64)
    gt_indices = [(q * d) // q_total for q in range(q_total)]
    all_sites = np.arange(d)

    for q in range(q_total):
        gt = gt_indices[q]
        noise = rng.random((n, d))
        data[:, q, :] = noise * sigma[:, None]

        allowed = all_sites[np.abs(all_sites - gt) > gap]
        used: list[int] = []
        min_sep = spec.r_window + 1
        shared = _draw_site(rng, allowed, used, min_sep)
        use_shared = rng.random(n) < correlation

        for tech in range(n):
            if not suppressed[tech, q]:
                data[tech, q, gt] += peak[tech]
            site = shared if use_shared[tech] else _draw_site(rng, allowed, used, min_sep)
            data[tech, q, site] += alias[tech]
            if secondary[tech] > 0.0:
                echo = _echo_site(site, allowed)
                data[tech, q, echo] += alias[tech] * secondary[tech]

    techniques = [
        TechniqueId(index=i, name=name)
        for i, name in enumerate(spec.technique_names())
    ]
    tensor = SimilarityTensor(techniques=techniques, data=data)
    gt = GroundTruth.from_indices(gt_indices, spec.gt_tolerance, d)
    return tensor, gt


def complementary_fixture_spec(noise_sigma: float = 0.01, seed: int = 42) -> SynthSpec:
    """Disjoint-failure benchmark: two strong techniques that fail on
    opposite halves of the traverse, plus two techniques whose correlated
    two-peak distractors always outgun their own ground-truth signal.

    Fusing the healthy strong technique with one weak supporter is the only
    combination with both an unambiguous peak and the right answer, so
    per-frame selection stays perfect while summing everything is dragged to
    the shared distractor whenever the ground-truth support dips.
    """
    return SynthSpec(
        n_techniques=4,
        queries=200,
        database_size=100,
        peak_strength=[1.0, 1.0, 0.6, 0.55],
        alias_strength=[0.3, 0.3, 1.0, 1.0],
        alias_secondary=0.95,
        alias_correlation=[0.0, 0.0, 1.0, 1.0],
        noise_sigma=noise_sigma,
        failure_schedule=[[(0, 100)], [(100, 200)], [(95, 105)], []],
        r_window=2,
        seed=seed,
        names=["comp-a", "comp-b", "aliased-a", "aliased-b"],
    )


def drifting_fixture_spec(seed: int = 42) -> SynthSpec:
    """Sequential traverse whose healthy technique pair rotates every
    ``drift_period`` queries, so stale subset selections go bad."""
    return SynthSpec(
        n_techniques=4,
        queries=500,
        database_size=120,
        peak_strength=1.0,
        alias_strength=0.55,
        noise_sigma=0.02,
        drift_period=20,
        r_window=2,
        seed=seed,
        names=["drift-a", "drift-b", "drift-c", "drift-d"],
    )
