"""Seeded synthetic benchmark datasets.

This environment has no access to the canonical fairness benchmark
downloads, so these generators produce offline stand-ins that mimic the
published shapes of two of them: row counts, sensitive-attribute
structure, label base rates, and the group-bias level a default forest
exhibits. The label depends on a latent merit signal (observable through
noisy feature columns) plus a direct contribution of each sensitive
attribute; sensitive attributes are independent of merit, so a model that
ignores them can be nearly parity-fair while keeping most of its
accuracy. Regenerating with the same seed is byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .dataset import DatasetSchema
from .rng import rng_from


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic benchmark."""

    name: str
    n_rows: int
    label: str
    sensitive: dict[str, float] = field(default_factory=dict)  # name -> privileged rate
    direct_effect: dict[str, float] = field(default_factory=dict)  # name -> label effect
    proxy_strength: dict[str, float] = field(default_factory=dict)
    merit_correlation: dict[str, float] = field(default_factory=dict)
    positive_rate: float = 0.5
    n_informative: int = 10
    n_gaussian_noise: int = 10
    n_binary_noise: int = 10
    n_latent: int = 5
    feature_noise: float = 0.8
    label_noise: float = 1.0

    @property
    def n_regular(self) -> int:
        return self.n_informative + 2 * len(self.sensitive) + self.n_gaussian_noise + self.n_binary_noise

    def schema(self) -> DatasetSchema:
        return DatasetSchema(
            label=self.label, positive=1.0, sensitive={n: 1.0 for n in self.sensitive}
        )


GERMAN_SYNTH = SynthSpec(
    name="german_synthetic",
    n_rows=1000,
    label="credit_risk",
    sensitive={"sex": 0.69, "age": 0.81},
    direct_effect={"sex": 0.5, "age": 1.0},
    proxy_strength={"sex": 0.25, "age": 0.3},
    merit_correlation={"sex": 0.1, "age": 0.35},
    positive_rate=0.70,
    n_informative=14,
    n_gaussian_noise=23,
    n_binary_noise=16,
    label_noise=1.0,
)

COMPAS_SYNTH = SynthSpec(
    name="compas_synthetic",
    n_rows=6172,
    label="outcome",
    sensitive={"race": 0.34, "sex": 0.19},
    direct_effect={"race": 0.22, "sex": 0.22},
    proxy_strength={"race": 0.25, "sex": 0.25},
    merit_correlation={"race": 0.1, "sex": 0.18},
    positive_rate=0.455,
    n_informative=12,
    n_gaussian_noise=16,
    n_binary_noise=8,
    label_noise=0.6,
)

SPECS = {"german": GERMAN_SYNTH, "compas": COMPAS_SYNTH}


def generate(spec: SynthSpec, seed: int = 20240) -> tuple[list[str], np.ndarray]:
    """Header and raw cell matrix (label, regular features, sensitive)."""
    rng = rng_from(seed, spec.name)
    n = spec.n_rows
    latent = rng.standard_normal((n, spec.n_latent))
    loadings = rng.standard_normal(spec.n_latent)
    merit = latent @ loadings / np.sqrt(spec.n_latent)
    merit_std = merit / merit.std()

    # group membership may lean on merit, so a merit-only model keeps a
    # residual group gap like the real benchmarks do
    sens = {}
    for name, rate in spec.sensitive.items():
        rho = spec.merit_correlation.get(name, 0.0)
        z = rho * merit_std + np.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
        sens[name] = (z > np.quantile(z, 1.0 - rate)).astype(np.float64)

    score = merit.copy()
    for name, effect in spec.direct_effect.items():
        score += effect * (sens[name] - spec.sensitive[name])
    score += spec.label_noise * rng.logistic(size=n)
    threshold = np.quantile(score, 1.0 - spec.positive_rate)
    labels = (score > threshold).astype(np.float64)

    columns: list[np.ndarray] = []
    names: list[str] = []
    for j in range(spec.n_informative):
        w = latent[:, j % spec.n_latent]
        columns.append(w + spec.feature_noise * rng.standard_normal(n))
        names.append(f"x{j}")
    for name in spec.sensitive:
        strength = spec.proxy_strength[name]
        for j in range(2):
            columns.append(strength * sens[name] + rng.standard_normal(n))
            names.append(f"proxy_{name}{j}")
    for j in range(spec.n_gaussian_noise):
        columns.append(rng.standard_normal(n))
        names.append(f"noise{j}")
    for j in range(spec.n_binary_noise):
        columns.append((rng.random(n) < rng.random()).astype(np.float64))
        names.append(f"flag{j}")

    header = [spec.label] + names + list(spec.sensitive)
    matrix = np.column_stack([labels] + columns + [sens[name] for name in spec.sensitive])
    return header, matrix


def write_csv(spec: SynthSpec, path: str, seed: int = 20240) -> str:
    header, matrix = generate(spec, seed)
    lines = [",".join(header)]
    for row in matrix:
        lines.append(",".join(format(v, ".6g") for v in row))
    tmp = path + ".part"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
    return path


def ensure_dataset(name: str, directory: str = "data", seed: int = 20240) -> str:
    """Materialize data/<name>_synthetic.csv if absent; returns the path."""
    spec = SPECS[name]
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{spec.name}.csv")
    if not os.path.exists(path):
        write_csv(spec, path, seed)
    return path
