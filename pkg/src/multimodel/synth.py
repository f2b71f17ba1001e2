"""Deterministic synthetic cohorts for verifiable end-to-end experiments.

Two shapes: a two-feature "regional expert" dataset whose label is a noisy
half-plane indicator, and a Framingham-shaped facsimile whose risk rule
switches with age so no single learner family dominates.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np

from .dataset import DatasetSchema, default_schema
from .errors import InvalidParamsError

REGIONAL_BOUNDARY = 0.5


def feature_coin(values: Sequence[float], salt: str, rate: float) -> bool:
    """Seeded Bernoulli draw that is a pure function of the feature values.

    Hashing the full-precision reprs keeps the coin reproducible after a CSV
    round trip, so label noise and simulated model behaviour can both be
    recomputed from a parsed file.
    """
    payload = (salt + ":" + ",".join(repr(float(v)) for v in values)).encode("ascii")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    u = int.from_bytes(digest, "big") / 2**64
    return u < rate


def regional_schema() -> DatasetSchema:
    """Schema for the two-feature regional-expert CSVs."""
    return DatasetSchema(
        columns=("Id", "X1", "X2", "Class"),
        id_column="Id",
        label_column="Class",
        categorical={},
        label_map={"0": 0, "1": 1},
    )


def generate_regional(n: int, noise: float, seed: int) -> str:
    """CSV with label = (x1 >= 0.5) XOR a feature-hashed noise flip."""
    if n < 1:
        raise InvalidParamsError(f"n must be >= 1, got {n}")
    if not 0.0 <= noise < 1.0:
        raise InvalidParamsError(f"noise must lie in [0, 1), got {noise}")
    rng = np.random.default_rng(seed)
    x1 = rng.random(n)
    x2 = rng.random(n)
    width = max(5, len(str(n)))
    lines = ["Id,X1,X2,Class"]
    for i in range(n):
        base = x1[i] >= REGIONAL_BOUNDARY
        flip = feature_coin((x1[i], x2[i]), "label-noise", noise)
        label = int(base) ^ int(flip)
        lines.append(f"R{i:0{width}d},{x1[i]!r},{x2[i]!r},{label}")
    return "\n".join(lines) + "\n"


def framingham_schema() -> DatasetSchema:
    return default_schema()


def generate_framingham(n: int, seed: int) -> str:
    """Framingham-shaped facsimile with an age-switched mortality rule.

    Younger cohort risk rides on cholesterol and smoking, older cohort risk
    on blood pressure and prior coronary events, so different model families
    are strong in different regions of feature space.
    """
    if n < 1:
        raise InvalidParamsError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    sex = rng.integers(0, 2, size=n)  # 0 female, 1 male
    age = rng.integers(30, 70, size=n)
    frw = np.clip(np.rint(rng.normal(100, 15, size=n)), 55, 170).astype(int)
    sbp = np.clip(np.rint(rng.normal(120 + 0.8 * (age - 30), 16, size=n)), 90, 230).astype(int)
    dbp = np.clip(np.rint(0.55 * sbp + rng.normal(12, 7, size=n)), 55, 140).astype(int)
    chol = np.clip(np.rint(rng.normal(195 + 0.9 * (age - 30), 38, size=n)), 110, 400).astype(int)
    smoker = rng.random(n) < np.where(sex == 1, 0.55, 0.35)
    cig = np.where(smoker, rng.integers(5, 45, size=n), 0)
    chd_p = 0.08 + 0.004 * (age - 30) + 0.0008 * np.maximum(sbp - 140, 0)
    chd = (rng.random(n) < chd_p).astype(int)

    older = age >= 50
    score = np.where(
        older,
        0.045 * (sbp - 150) + 1.6 * chd + 0.012 * (age - 50),
        0.016 * (chol - 230) + 0.045 * cig + 0.9 * chd,
    )
    score = score + 0.5 * sex + 0.012 * (frw - 100) + rng.normal(0.0, 1.1, size=n)
    label = score > 0.55

    width = max(4, len(str(n)))
    lines = ["Id,Sex,Age,FRW,SBP,DBP,CHOL,CIG,CHD,Class"]
    for i in range(n):
        lines.append(
            ",".join(
                [
                    f"F{i:0{width}d}",
                    "male" if sex[i] == 1 else "female",
                    str(int(age[i])),
                    str(int(frw[i])),
                    str(int(sbp[i])),
                    str(int(dbp[i])),
                    str(int(chol[i])),
                    str(int(cig[i])),
                    str(int(chd[i])),
                    "Death" if label[i] else "Alive",
                ]
            )
        )
    return "\n".join(lines) + "\n"
