"""Reference-set ingestion and normalization fitting.

Reads newline-delimited SMILES (with `#` comments), skipping unsupported
lines with a per-line report, and fits both the property z-score statistics
and the discriminator feature statistics. A synthetic mode generates the
reference from random genotypes when no file is available.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .codec import decode, random_genotype
from .discriminator import FeatureStats, featurize
from .errors import MolgaError
from .graph import Fingerprint, MolecularGraph, fingerprint, parse_smiles
from .props import EmptyReference, NormStats, PropertyRecord, fit_norm, penalized_logp

MIN_USABLE = 100


@dataclass
class LoadReport:
    n_lines: int = 0
    n_usable: int = 0
    n_failed: int = 0
    failures: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class ReferenceSet:
    graphs: list[MolecularGraph]
    canonicals: list[str]
    records: list[PropertyRecord]
    prop_stats: NormStats
    feature_stats: FeatureStats
    features: np.ndarray
    _fps: list[Fingerprint] | None = None

    def __len__(self) -> int:
        return len(self.graphs)

    def fingerprints(self) -> list[Fingerprint]:
        if self._fps is None:
            self._fps = [fingerprint(g) for g in self.graphs]
        return self._fps


def build_reference(graphs: list[MolecularGraph]) -> ReferenceSet:
    """Fit normalization over the given graphs and package them."""
    if not graphs:
        raise EmptyReference("reference set is empty")
    prop_stats = fit_norm(graphs)
    features = np.stack([featurize(g) for g in graphs])
    feature_stats = FeatureStats.fit(features)
    records = [penalized_logp(g, prop_stats) for g in graphs]
    canonicals = [g.canonical() for g in graphs]
    return ReferenceSet(graphs, canonicals, records, prop_stats, feature_stats, features)


def load_reference(path: str, min_usable: int = MIN_USABLE) -> tuple[ReferenceSet, LoadReport]:
    """Load a SMILES file, skipping bad lines; needs >= min_usable molecules."""
    report = LoadReport()
    graphs: list[MolecularGraph] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            report.n_lines += 1
            smiles = line.split()[0]
            try:
                graphs.append(parse_smiles(smiles))
                report.n_usable += 1
            except MolgaError as exc:
                report.n_failed += 1
                report.failures.append((lineno, str(exc)))
    if report.n_usable < min_usable:
        raise EmptyReference(
            f"only {report.n_usable} usable molecules in {path} (need >= {min_usable})")
    return build_reference(graphs), report


def synthetic_reference(n: int, seed: int, min_canonical: int = 10,
                        max_canonical: int = 81,
                        max_genotype_len: int = 60) -> ReferenceSet:
    """Random-genotype stand-in for a real reference file."""
    rng = random.Random(seed)
    graphs: list[MolecularGraph] = []
    while len(graphs) < n:
        g = decode(random_genotype(rng, max_genotype_len))
        if min_canonical <= len(g.canonical()) <= max_canonical:
            graphs.append(g)
    return build_reference(graphs)
