"""
Cooperative reputation ledger
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Literal, Mapping

from .errors import ConfigurationError, UnknownUavError

logger = logging.getLogger(__name__)

ReputationMode = Literal["additive", "decay"]


@dataclass(frozen=True)
class ReputationEntry:
    """One point of a reputation trajectory"""

    mission: int
    uav_id: int
    rho: float


class ReputationLedger(Mapping[int, float]):
    """Reputation per UAV plus its full history.

    In "additive" mode a coalition member gains its share: rho <- rho + d_rho.
    In "decay" mode the member's previous credit is discounted first:
    rho <- kappa * rho + d_rho. UAVs outside every coalition keep their value
    in both modes.
    """

    def __init__(
        self,
        uav_ids: Iterable[int],
        initial: float = 0.0,
        mode: ReputationMode = "additive",
        kappa: float = 0.95,
    ):
        if mode not in ("additive", "decay"):
            raise ConfigurationError(f"Unknown reputation mode {mode!r}")
        if not 0.0 <= kappa <= 1.0:
            raise ConfigurationError(f"Decay factor must be in [0, 1] (got {kappa})")
        self.mode = mode
        self.kappa = kappa
        self._rho: Dict[int, float] = {uav_id: float(initial) for uav_id in uav_ids}
        self.history: List[ReputationEntry] = [
            ReputationEntry(mission=0, uav_id=uav_id, rho=rho) for uav_id, rho in self._rho.items()
        ]

    def __getitem__(self, uav_id: int) -> float:
        try:
            return self._rho[uav_id]
        except KeyError:
            raise UnknownUavError(uav_id) from None

    def __iter__(self) -> Iterator[int]:
        return iter(self._rho)

    def __len__(self) -> int:
        return len(self._rho)

    def snapshot(self) -> Dict[int, float]:
        return dict(self._rho)

    def apply(self, mission: int, deltas: Mapping[int, float]):
        """Credit coalition members for `mission` and record every UAV's value"""
        for uav_id, delta in deltas.items():
            previous = self[uav_id]
            if self.mode == "decay":
                self._rho[uav_id] = self.kappa * previous + delta
            else:
                self._rho[uav_id] = previous + delta
        for uav_id, rho in self._rho.items():
            self.history.append(ReputationEntry(mission=mission, uav_id=uav_id, rho=rho))
        logger.debug("Mission %d: reputation updated for %d UAVs", mission, len(deltas))

    def trajectory(self, uav_id: int) -> List[float]:
        return [entry.rho for entry in self.history if entry.uav_id == uav_id]
