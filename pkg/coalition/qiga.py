"""
Quantum-inspired genetic optimizer over membership bitmaps.

A qubit is a real amplitude pair (alpha, beta) with alpha^2 + beta^2 = 1.
Measuring it yields 1 with probability alpha^2. The population is rotated
toward the best bitmap found so far; there is no crossover or mutation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import ChromosomeStateError, ConfigurationError
from .models import ObjectiveBreakdown

logger = logging.getLogger(__name__)

Oracle = Callable[[np.ndarray], np.ndarray]

DEFAULT_ROTATION_ANGLE = 0.01 * math.pi
INV_SQRT2 = 1.0 / math.sqrt(2.0)


class RotationPolicy(BaseModel):
    """Rotation magnitudes keyed by (measured bit, best bit, own fitness >= best).

    Entry index is ``4 * x + 2 * b + better``. The applied angle takes the sign
    that grows the amplitude of the best bit's state.
    """

    model_config = ConfigDict(frozen=True)

    table: Tuple[float, ...] = Field(..., description="Eight rotation magnitudes in radians")

    @field_validator("table")
    @classmethod
    def check_table(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(value) != 8:
            raise ValueError("the rotation table has exactly eight entries")
        if any(abs(theta) > math.pi / 2 for theta in value):
            raise ValueError("rotation angles must satisfy |theta| <= pi/2")
        return value

    @classmethod
    def default(cls, magnitude: float = DEFAULT_ROTATION_ANGLE) -> "RotationPolicy":
        """Rotate only where the measured bit disagrees with the best bit"""
        table = [0.0] * 8
        for x, b in ((0, 1), (1, 0)):
            for better in (0, 1):
                table[4 * x + 2 * b + better] = magnitude
        return cls(table=tuple(table))

    @classmethod
    def identity(cls) -> "RotationPolicy":
        return cls(table=(0.0,) * 8)

    def angle(self, x: int, b: int, better: bool) -> float:
        return self.table[4 * int(x) + 2 * int(b) + int(bool(better))]


class QigaConfig(BaseModel):
    """Population size, iteration budget and rotation table"""

    model_config = ConfigDict(frozen=True)

    population_size: int = Field(default=200, ge=1)
    max_iterations: int = Field(default=500, ge=1)
    rotation_policy: RotationPolicy = Field(default_factory=RotationPolicy.default)
    rng_seed: int = Field(default=0, ge=0, lt=2**64)
    renormalize: bool = Field(default=True, description="Re-normalize amplitudes after every generation")


@dataclass(eq=False)
class QubitChromosome:
    """A string of m qubits and its last measured bitmap"""

    alpha: np.ndarray
    beta: np.ndarray
    measured: Optional[np.ndarray] = None

    @property
    def amplitudes(self) -> List[Tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.alpha, self.beta)]

    def __len__(self) -> int:
        return len(self.alpha)


@dataclass
class OptimizerResult:
    """Best solution of a run plus its convergence history"""

    best_bits: np.ndarray
    best_fitness: float
    history: List[float]
    evaluations: int
    final_population: np.ndarray
    best_breakdown: Optional[ObjectiveBreakdown] = None
    iterations: int = 0


def measure(alpha: float, rng: np.random.Generator) -> int:
    """Collapse one qubit: 0 if r > |alpha|^2 else 1"""
    r = rng.random()
    if r > abs(alpha) ** 2:
        return 0
    return 1


def _measure_amplitudes(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    r = rng.random(alpha.shape)
    return (r <= alpha * alpha).astype(np.int8)


def measure_chromosome(chrom: QubitChromosome, rng: np.random.Generator) -> np.ndarray:
    """Measure every qubit independently and remember the bitmap"""
    chrom.measured = _measure_amplitudes(chrom.alpha, rng)
    return chrom.measured


def rotation_angles(
    alpha: np.ndarray,
    beta: np.ndarray,
    measured: np.ndarray,
    best_bits: np.ndarray,
    better: np.ndarray,
    table: np.ndarray,
) -> np.ndarray:
    """Signed angles moving each qubit toward the best bitmap.

    d(alpha^2)/d(theta) = -2 alpha beta, so growing alpha^2 (best bit 1) needs
    theta of opposite sign to alpha*beta. alpha*beta == 0 takes sign +1.
    """
    index = 4 * measured.astype(np.intp) + 2 * best_bits.astype(np.intp) + better.astype(np.intp)
    magnitude = table[index]
    product_sign = np.sign(alpha * beta)
    direction = np.where(best_bits == 1, -product_sign, product_sign)
    direction = np.where(product_sign == 0, 1.0, direction)
    return magnitude * direction


def apply_rotation(alpha: np.ndarray, beta: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Multiply each (alpha, beta) by [[cos, -sin], [sin, cos]]"""
    c = np.cos(theta)
    s = np.sin(theta)
    return c * alpha - s * beta, s * alpha + c * beta


def rotate(
    chrom: QubitChromosome,
    best_bits: np.ndarray,
    own_fitness: float,
    best_fitness: float,
    policy: RotationPolicy,
) -> QubitChromosome:
    """Rotate a measured chromosome toward `best_bits`"""
    if chrom.measured is None:
        raise ChromosomeStateError("rotate() needs a measured chromosome")
    best_bits = np.asarray(best_bits)
    if best_bits.shape != chrom.measured.shape:
        raise ValueError(f"best bitmap has length {best_bits.size}, chromosome has {len(chrom)}")
    better = np.full(best_bits.shape, own_fitness >= best_fitness)
    theta = rotation_angles(chrom.alpha, chrom.beta, chrom.measured, best_bits, better, np.asarray(policy.table))
    alpha, beta = apply_rotation(chrom.alpha, chrom.beta, theta)
    return QubitChromosome(alpha=alpha, beta=beta, measured=chrom.measured.copy())


def init_population(m: int, config: QigaConfig) -> List[QubitChromosome]:
    """Uniform superposition: every pair is (1/sqrt2, 1/sqrt2)"""
    if m < 1:
        raise ConfigurationError(f"Chromosome length must be at least 1 (got {m})")
    return [
        QubitChromosome(alpha=np.full(m, INV_SQRT2), beta=np.full(m, INV_SQRT2))
        for _ in range(config.population_size)
    ]


class QuantumGeneticOptimizer:
    """Measure, evaluate, rotate toward the stored best, keep the best-ever bitmap"""

    def __init__(self, oracle: Oracle, m: int, config: Optional[QigaConfig] = None):
        if m < 1:
            raise ConfigurationError(f"Chromosome length must be at least 1 (got {m})")
        self.oracle = oracle
        self.m = m
        self.config = config or QigaConfig()
        self.rng = np.random.default_rng(self.config.rng_seed)
        self._table = np.asarray(self.config.rotation_policy.table, dtype=float)
        self.alpha: Optional[np.ndarray] = None
        self.beta: Optional[np.ndarray] = None
        self.measured: Optional[np.ndarray] = None
        self.best_bits: Optional[np.ndarray] = None
        self.best_fitness = -math.inf
        self.history: List[float] = []
        self.evaluations = 0
        self.iteration = 0

    def _evaluate(self, bits: np.ndarray) -> np.ndarray:
        values = np.asarray(self.oracle(bits), dtype=float).reshape(bits.shape[0])
        self.evaluations += bits.shape[0]
        return values

    def _store_best(self, fitness: np.ndarray):
        idx = int(np.argmax(fitness))
        if fitness[idx] > self.best_fitness:
            self.best_fitness = float(fitness[idx])
            self.best_bits = self.measured[idx].copy()
        self.history.append(self.best_fitness)

    def initialize(self):
        population = init_population(self.m, self.config)
        self.alpha = np.stack([chrom.alpha for chrom in population])
        self.beta = np.stack([chrom.beta for chrom in population])
        self.measured = _measure_amplitudes(self.alpha, self.rng)
        self._store_best(self._evaluate(self.measured))

    def step(self):
        """One generation: measure Q(t-1), evaluate, rotate toward b, store b"""
        if self.alpha is None:
            self.initialize()
        self.iteration += 1
        self.measured = _measure_amplitudes(self.alpha, self.rng)
        fitness = self._evaluate(self.measured)

        better = (fitness >= self.best_fitness)[:, None]
        theta = rotation_angles(self.alpha, self.beta, self.measured, self.best_bits[None, :], better, self._table)
        self.alpha, self.beta = apply_rotation(self.alpha, self.beta, theta)
        if self.config.renormalize:
            norm = np.hypot(self.alpha, self.beta)
            self.alpha /= norm
            self.beta /= norm

        self._store_best(fitness)
        if self.iteration % 100 == 0:
            logger.debug("QIGA iteration %d: best fitness %.6f", self.iteration, self.best_fitness)

    def probabilities(self) -> np.ndarray:
        """alpha^2 per individual and qubit: the probability of measuring 1"""
        return self.alpha * self.alpha

    def run(self) -> OptimizerResult:
        self.initialize()
        for _ in range(self.config.max_iterations):
            self.step()
        breakdown_fn = getattr(self.oracle, "breakdown", None)
        breakdown = breakdown_fn(self.best_bits) if callable(breakdown_fn) else None
        return OptimizerResult(
            best_bits=self.best_bits.copy(),
            best_fitness=self.best_fitness,
            history=list(self.history),
            evaluations=self.evaluations,
            final_population=self.measured.copy(),
            best_breakdown=breakdown,
            iterations=self.iteration,
        )


def run(oracle: Oracle, m: int, config: Optional[QigaConfig] = None) -> OptimizerResult:
    """Run the optimizer for the configured number of iterations"""
    return QuantumGeneticOptimizer(oracle, m, config).run()
