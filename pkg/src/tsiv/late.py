"""Binary-instrument, binary-exposure treatment-effect accounting on exact discrete worlds.

A world is a finite probability table over the instrument, the latent response
class (always-taker / complier / never-taker / defier) and the two potential
outcomes, with the instrument independent of everything else by construction.
Every estimand here is computed by exact enumeration of that table, which is
what makes the worlds usable as oracles for the finite-sample estimators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import MonotonicityViolated, NoCompliers
from .moments import TwoSampleData

__all__ = [
    "CLASSES",
    "ComplierSpec",
    "DiscreteIvWorld",
    "LateTwoSample",
    "IdentificationAudit",
    "late_one_sample",
    "late_two_sample",
    "cross_sample_wald",
    "identification_audit",
    "LoadedWorld",
    "load_world_csv",
    "write_world_csv",
    "simulate_from_worlds",
]

CLASSES = ("at", "co", "nt", "de")

_PROB_TOL = 1e-9
_CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class ComplierSpec:
    """Latent class shares within one sample."""

    p_at: float
    p_co: float
    p_nt: float
    p_de: float = 0.0

    def __post_init__(self) -> None:
        shares = self.as_array()
        if np.any(shares < -_PROB_TOL) or np.any(shares > 1 + _PROB_TOL):
            raise ValueError("class shares must lie in [0, 1]")
        if abs(shares.sum() - 1.0) > 1e-6:
            raise ValueError(f"class shares must sum to 1, got {shares.sum():.9f}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_at, self.p_co, self.p_nt, self.p_de], dtype=float)

    @property
    def monotone(self) -> bool:
        return self.p_de == 0.0


@dataclass(frozen=True)
class DiscreteIvWorld:
    """Exact ground truth: instrument law, class shares, class-conditional outcome means.

    ``mean_g0`` / ``mean_g1`` give the average potential outcomes without and
    with exposure per class, in CLASSES order.  All entries exist as ground
    truth even where the class/exposure cell is never observed.
    """

    p_z1: float
    shares: ComplierSpec
    mean_g0: tuple[float, float, float, float]
    mean_g1: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if not 0.0 < self.p_z1 < 1.0:
            raise ValueError("p_z1 must lie strictly between 0 and 1")
        for name in ("mean_g0", "mean_g1"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != 4:
                raise ValueError(f"{name} must have one entry per class in {CLASSES}")
            if not all(np.isfinite(values)):
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, values)

    @classmethod
    def from_means(
        cls, p_z1: float, shares: ComplierSpec, mean_g0: dict, mean_g1: dict
    ) -> "DiscreteIvWorld":
        return cls(
            p_z1=p_z1,
            shares=shares,
            mean_g0=tuple(float(mean_g0.get(c, 0.0)) for c in CLASSES),
            mean_g1=tuple(float(mean_g1.get(c, 0.0)) for c in CLASSES),
        )

    def m0(self, cls_name: str) -> float:
        return self.mean_g0[CLASSES.index(cls_name)]

    def m1(self, cls_name: str) -> float:
        return self.mean_g1[CLASSES.index(cls_name)]

    @staticmethod
    def exposure(cls_name: str, z: int) -> int:
        if cls_name == "at":
            return 1
        if cls_name == "nt":
            return 0
        if cls_name == "co":
            return int(z)
        return 1 - int(z)

    def mean_x_given_z(self, z: int) -> float:
        shares = self.shares.as_array()
        return float(sum(shares[i] * self.exposure(c, z) for i, c in enumerate(CLASSES)))

    def mean_y_given_z(self, z: int) -> float:
        shares = self.shares.as_array()
        total = 0.0
        for i, c in enumerate(CLASSES):
            outcome = self.mean_g1[i] if self.exposure(c, z) == 1 else self.mean_g0[i]
            total += shares[i] * outcome
        return float(total)

    def first_stage(self) -> float:
        """E[x|z=1] - E[x|z=0], which equals p_co - p_de."""
        return self.mean_x_given_z(1) - self.mean_x_given_z(0)


def _raw_wald(world: DiscreteIvWorld) -> float:
    denom = world.first_stage()
    if denom == 0.0:
        raise NoCompliers("the instrument does not move the exposure (zero first stage)")
    return (world.mean_y_given_z(1) - world.mean_y_given_z(0)) / denom


def late_one_sample(world: DiscreteIvWorld) -> float:
    """Complier average treatment effect, two ways, which must agree exactly.

    Computes the ratio of observable conditional-mean differences from the
    table and the complier-mean difference; under no defiance these coincide,
    and a discrepancy beyond round-off indicates a corrupted table.
    """
    if world.shares.p_co <= 0.0:
        raise NoCompliers("no compliers in this world")
    if world.shares.p_de > 0.0:
        raise MonotonicityViolated(
            "defiers present; the complier-mean reduction does not apply"
        )
    wald = _raw_wald(world)
    complier_mean = world.m1("co") - world.m0("co")
    if abs(wald - complier_mean) > _CONSISTENCY_TOL * max(1.0, abs(wald)):
        raise AssertionError(
            f"table inconsistency: ratio {wald!r} vs complier mean {complier_mean!r}"
        )
    return wald


def cross_sample_wald(world_a: DiscreteIvWorld, world_b: DiscreteIvWorld) -> float:
    """Outcome contrast from sample b over exposure contrast from sample a."""
    denom = world_a.first_stage()
    if denom == 0.0:
        raise NoCompliers("sample a has zero first stage")
    return (world_b.mean_y_given_z(1) - world_b.mean_y_given_z(0)) / denom


@dataclass(frozen=True)
class LateTwoSample:
    """Cross-sample estimand, its complier-share scaling, and the sample-b effect."""

    estimand: float
    scaling: float
    late_b: float


def late_two_sample(world_a: DiscreteIvWorld, world_b: DiscreteIvWorld) -> LateTwoSample:
    """Cross-sample estimand and its decomposition as late_b times a share ratio.

    The estimand is the sample-b complier effect scaled by
    p_co(b) / p_co(a); since both shares are positive the estimand always has
    the sign of the sample-b effect.  Both worlds must be defier-free.
    """
    for label, world in (("world_a", world_a), ("world_b", world_b)):
        if world.shares.p_co <= 0.0:
            raise NoCompliers(f"{label} has no compliers")
        if world.shares.p_de > 0.0:
            raise MonotonicityViolated(f"{label} contains defiers")
    late_b = late_one_sample(world_b)
    scaling = world_b.shares.p_co / world_a.shares.p_co
    estimand = cross_sample_wald(world_a, world_b)
    if abs(estimand - late_b * scaling) > _CONSISTENCY_TOL * max(1.0, abs(estimand)):
        raise AssertionError(
            f"table inconsistency: cross ratio {estimand!r} vs decomposition "
            f"{late_b * scaling!r}"
        )
    return LateTwoSample(estimand=estimand, scaling=scaling, late_b=late_b)


@dataclass(frozen=True)
class IdentificationAudit:
    """Verdict of the four-equation observable system against the ground truth."""

    identified: bool
    note: str
    cell_means: dict
    equation_residuals: tuple[float, float, float, float]
    complier_mean_g0: float | None = None
    complier_mean_g1: float | None = None
    late: float | None = None

    def to_dict(self) -> dict:
        return {
            "identified": self.identified,
            "note": self.note,
            "cell_means": {f"x={x},z={z}": v for (x, z), v in self.cell_means.items()},
            "equation_residuals": list(self.equation_residuals),
            "complier_mean_g0": self.complier_mean_g0,
            "complier_mean_g1": self.complier_mean_g1,
            "late": self.late,
        }


def identification_audit(world: DiscreteIvWorld) -> IdentificationAudit:
    """Evaluate the observable conditional means and check what they pin down.

    Enumerates the joint (z, class) table to form the four observable cell
    means E[y | x, z], verifies each against its class decomposition, and
    reconstructs the complier means from observables alone.  With defiers the
    system has six unknowns and four equations, so it reports unidentified.
    """
    shares = world.shares.as_array()
    mass: dict[tuple[int, int], float] = {}
    num: dict[tuple[int, int], float] = {}
    for z in (0, 1):
        p_z = world.p_z1 if z == 1 else 1.0 - world.p_z1
        for i, cls_name in enumerate(CLASSES):
            x = world.exposure(cls_name, z)
            y = world.mean_g1[i] if x == 1 else world.mean_g0[i]
            joint = p_z * shares[i]
            mass[(x, z)] = mass.get((x, z), 0.0) + joint
            num[(x, z)] = num.get((x, z), 0.0) + joint * y
    cell_means = {
        key: (num[key] / mass[key] if mass.get(key, 0.0) > 0 else float("nan"))
        for key in ((0, 0), (0, 1), (1, 0), (1, 1))
    }

    # The four-equation system, cell by cell: each observable cell mean times
    # its class mass must equal the share-weighted class means it mixes.
    p_at, p_co, p_nt, p_de = shares
    decompositions = {
        (0, 0): (p_nt * world.m0("nt") + p_co * world.m0("co"), p_nt + p_co),
        (0, 1): (p_nt * world.m0("nt") + p_de * world.m0("de"), p_nt + p_de),
        (1, 0): (p_at * world.m1("at") + p_de * world.m1("de"), p_at + p_de),
        (1, 1): (p_at * world.m1("at") + p_co * world.m1("co"), p_at + p_co),
    }
    residuals = []
    for key in ((0, 0), (0, 1), (1, 0), (1, 1)):
        weighted_sum, cell_share = decompositions[key]
        observed = cell_means[key] * cell_share if cell_share > 0 else 0.0
        expected = weighted_sum if cell_share > 0 else 0.0
        residuals.append(abs(observed - expected))

    if p_de > 0.0:
        return IdentificationAudit(
            identified=False,
            note="six class-conditional outcomes, four equations: not identified",
            cell_means=cell_means,
            equation_residuals=tuple(residuals),
        )
    if p_co <= 0.0:
        return IdentificationAudit(
            identified=False,
            note="no compliers: the complier means do not enter the observables",
            cell_means=cell_means,
            equation_residuals=tuple(residuals),
        )

    # Monotone case: shares are observable from E[x|z] and the corner cells
    # isolate never-takers and always-takers, leaving the complier means.
    p_at_obs = world.mean_x_given_z(0)
    p_nt_obs = 1.0 - world.mean_x_given_z(1)
    p_co_obs = 1.0 - p_at_obs - p_nt_obs
    m0_nt = cell_means[(0, 1)] if p_nt_obs > 0 else 0.0
    m1_at = cell_means[(1, 0)] if p_at_obs > 0 else 0.0
    m0_co = (cell_means[(0, 0)] * (p_nt_obs + p_co_obs) - p_nt_obs * m0_nt) / p_co_obs
    m1_co = (cell_means[(1, 1)] * (p_at_obs + p_co_obs) - p_at_obs * m1_at) / p_co_obs
    return IdentificationAudit(
        identified=True,
        note="monotone world: four equations pin down four class means",
        cell_means=cell_means,
        equation_residuals=tuple(residuals),
        complier_mean_g0=m0_co,
        complier_mean_g1=m1_co,
        late=m1_co - m0_co,
    )


@dataclass(frozen=True)
class LoadedWorld:
    """World parsed from CSV, with its sample label and flip normalization flag."""

    world: DiscreteIvWorld
    sample: str
    flipped: bool


def _flip_instrument(world: DiscreteIvWorld) -> DiscreteIvWorld:
    # Relabeling z -> 1 - z swaps the complier and defier roles and leaves
    # always/never-takers untouched; class means travel with their classes.
    def swap(values):
        at, co, nt, de = values
        return (at, de, nt, co)

    return DiscreteIvWorld(
        p_z1=1.0 - world.p_z1,
        shares=ComplierSpec(
            p_at=world.shares.p_at,
            p_co=world.shares.p_de,
            p_nt=world.shares.p_nt,
            p_de=world.shares.p_co,
        ),
        mean_g0=swap(world.mean_g0),
        mean_g1=swap(world.mean_g1),
    )


def load_world_csv(path) -> LoadedWorld:
    """Read a world table (columns: sample, z, class, p, mean_g0, mean_g1).

    ``p`` is the joint probability of the (z, class) cell.  The loader checks
    that the table factorizes (instrument independent of class), that class
    means do not vary with z, and normalizes decreasing worlds by flipping
    the instrument so the first stage is nonnegative, recording the flip.
    """
    probs: dict[tuple[int, str], float] = {}
    means: dict[str, tuple[float, float]] = {}
    samples = set()
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        required = {"sample", "z", "class", "p", "mean_g0", "mean_g1"}
        if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
            raise ValueError(f"{path}: world CSV needs columns {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            samples.add(row["sample"].strip())
            cls_name = row["class"].strip()
            if cls_name not in CLASSES:
                raise ValueError(f"{path}:{lineno}: unknown class {cls_name!r}")
            try:
                z = int(row["z"])
                p = float(row["p"])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric z or p") from exc
            if z not in (0, 1):
                raise ValueError(f"{path}:{lineno}: z must be 0 or 1")
            if p < -_PROB_TOL:
                raise ValueError(f"{path}:{lineno}: negative probability")
            key = (z, cls_name)
            if key in probs:
                raise ValueError(f"{path}:{lineno}: duplicate row for z={z}, class={cls_name}")
            probs[key] = max(0.0, p)
            raw0, raw1 = row["mean_g0"].strip(), row["mean_g1"].strip()
            m0 = float(raw0) if raw0 else 0.0
            m1 = float(raw1) if raw1 else 0.0
            if cls_name in means and p > _PROB_TOL:
                prev0, prev1 = means[cls_name]
                if abs(prev0 - m0) > _PROB_TOL or abs(prev1 - m1) > _PROB_TOL:
                    raise ValueError(
                        f"{path}:{lineno}: class means vary with z for {cls_name!r}; "
                        "the instrument must not enter the outcome directly"
                    )
            if cls_name not in means or p > _PROB_TOL:
                means[cls_name] = (m0, m1)
    if len(samples) != 1:
        raise ValueError(f"{path}: expected a single sample label, found {sorted(samples)}")
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"{path}: probabilities sum to {total:.9f}, expected 1")
    shares = {c: probs.get((0, c), 0.0) + probs.get((1, c), 0.0) for c in CLASSES}
    p_z1 = sum(probs.get((1, c), 0.0) for c in CLASSES) / total
    for c in CLASSES:
        if shares[c] > _PROB_TOL:
            implied = probs.get((1, c), 0.0) / shares[c]
            if abs(implied - p_z1) > 1e-6:
                raise ValueError(
                    f"{path}: joint probabilities do not factorize for class {c!r}; "
                    "the instrument must be independent of the class"
                )
    norm = total
    world = DiscreteIvWorld.from_means(
        p_z1=p_z1,
        shares=ComplierSpec(
            p_at=shares["at"] / norm,
            p_co=shares["co"] / norm,
            p_nt=shares["nt"] / norm,
            p_de=shares["de"] / norm,
        ),
        mean_g0={c: means.get(c, (0.0, 0.0))[0] for c in CLASSES},
        mean_g1={c: means.get(c, (0.0, 0.0))[1] for c in CLASSES},
    )
    flipped = False
    if world.shares.p_de > world.shares.p_co:
        world = _flip_instrument(world)
        flipped = True
    return LoadedWorld(world=world, sample=samples.pop(), flipped=flipped)


def write_world_csv(world: DiscreteIvWorld, sample: str, path) -> None:
    """Write a world as the documented CSV table."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sample", "z", "class", "p", "mean_g0", "mean_g1"])
        shares = world.shares.as_array()
        for z in (0, 1):
            p_z = world.p_z1 if z == 1 else 1.0 - world.p_z1
            for i, cls_name in enumerate(CLASSES):
                writer.writerow(
                    [sample, z, cls_name, repr(float(p_z * shares[i])),
                     repr(float(world.mean_g0[i])), repr(float(world.mean_g1[i]))]
                )


def simulate_from_worlds(
    world_a: DiscreteIvWorld,
    world_b: DiscreteIvWorld,
    n_a: int,
    n_b: int,
    seed: int = 0,
) -> TwoSampleData:
    """Draw finite two-sample data whose population is the given world pair.

    Outcomes are the class-conditional means, so all sampling noise comes from
    the instrument and class draws; that is enough for the finite-sample
    estimators to converge on the enumerated estimand.
    """
    rng = np.random.default_rng(seed)

    def draw(world: DiscreteIvWorld, n: int):
        shares = world.shares.as_array()
        shares = shares / shares.sum()
        z = (rng.random(n) < world.p_z1).astype(float)
        cls_idx = rng.choice(4, size=n, p=shares)
        x = np.empty(n)
        y = np.empty(n)
        m0 = np.array(world.mean_g0)
        m1 = np.array(world.mean_g1)
        for i, cls_name in enumerate(CLASSES):
            members = cls_idx == i
            if cls_name == "at":
                x[members] = 1.0
            elif cls_name == "nt":
                x[members] = 0.0
            elif cls_name == "co":
                x[members] = z[members]
            else:
                x[members] = 1.0 - z[members]
        exposed = x == 1.0
        y[exposed] = m1[cls_idx[exposed]]
        y[~exposed] = m0[cls_idx[~exposed]]
        return z[:, None], x, y

    z_a, x_a, _ = draw(world_a, n_a)
    z_b, _, y_b = draw(world_b, n_b)
    return TwoSampleData(z_a=z_a, x_a=x_a, z_b=z_b, y_b=y_b)
