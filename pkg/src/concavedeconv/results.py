"""Result containers shared by the two estimators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mixture import MixtureCDF, Sample


@dataclass
class CharTable:
    """Characterization values over candidate support points.

    ``kink`` flags the points carrying positive weight in the estimate.
    For the MLE ``value`` is the slack ``int g_theta / g_F dG_n`` (bounded
    by 1); for the LSE it is ``H_n - Y_n`` (bounded below by 0).
    """

    theta: np.ndarray
    value: np.ndarray
    kink: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.kink = np.asarray(self.kink, dtype=bool)

    def at_kinks(self):
        return self.value[self.kink]


@dataclass
class MleFit:
    estimate: MixtureCDF
    loglik: float
    slack: CharTable
    iterations: int
    converged: bool
    sample: Sample
    kernel_name: str
    history: list = field(default_factory=list)
    log: list = field(default_factory=list)

    @property
    def support(self):
        return self.estimate.theta

    @property
    def weights(self):
        return self.estimate.tau


@dataclass
class LseFit:
    estimate: MixtureCDF
    objective: float
    char_table: CharTable
    iterations: int
    converged: bool
    sample: Sample
    kernel_name: str
    history: list = field(default_factory=list)
    log: list = field(default_factory=list)

    @property
    def support(self):
        return self.estimate.theta

    @property
    def weights(self):
        return self.estimate.tau

    def survival(self, x):
        return self.estimate.s(x)
