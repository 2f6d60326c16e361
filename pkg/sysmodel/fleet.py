"""
Simulated client hardware profiles.
"""
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List

logger = logging.getLogger(__name__)

# samples processed per GHz-core-second
DEFAULT_CALIBRATION = 200.0


@dataclass(frozen=True)
class ClientProfile:
    name: str
    cores: int
    cpu_mhz: float
    ram_gb: float
    bandwidth_mbps: float
    calibration: float = DEFAULT_CALIBRATION

    def __post_init__(self):
        for attr in ('cores', 'cpu_mhz', 'ram_gb', 'bandwidth_mbps', 'calibration'):
            if not getattr(self, attr) > 0:
                raise ValueError(f"{self.name}: {attr} must be positive, got {getattr(self, attr)}")

    @property
    def speed(self) -> float:
        """Training throughput in samples per second."""
        return self.cores * (self.cpu_mhz / 1000.0) * self.calibration

    def as_dict(self) -> dict:
        return asdict(self)


# (cores, RAM GB, bandwidth Mbps); every device runs at 2245.78 MHz
DEFAULT_DEVICES = (
    (8, 16, 1600), (8, 16, 1600), (8, 16, 100), (8, 16, 100),
    (2, 4, 6), (2, 4, 6), (2, 4, 2), (2, 4, 2),
)
DEFAULT_MHZ = 2245.78


def default_fleet(calibration: float = DEFAULT_CALIBRATION) -> List[ClientProfile]:
    return [
        ClientProfile(name=f'Client {n}', cores=cores, cpu_mhz=DEFAULT_MHZ, ram_gb=ram,
                      bandwidth_mbps=bandwidth, calibration=calibration)
        for n, (cores, ram, bandwidth) in enumerate(DEFAULT_DEVICES, start=1)
    ]


def load_fleet(path, calibration: float = DEFAULT_CALIBRATION) -> List[ClientProfile]:
    """
    Read a JSON array of profiles. Each entry needs ``cores``, ``cpu_mhz``,
    ``ram_gb`` and ``bandwidth_mbps``; ``name`` and ``calibration`` are optional.
    """
    entries = json.loads(Path(path).read_text())
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"Fleet file {path} must hold a non-empty JSON array")
    fleet = []
    for n, entry in enumerate(entries, start=1):
        try:
            fleet.append(ClientProfile(
                name=entry.get('name', f'Client {n}'),
                cores=int(entry['cores']),
                cpu_mhz=float(entry['cpu_mhz']),
                ram_gb=float(entry['ram_gb']),
                bandwidth_mbps=float(entry['bandwidth_mbps']),
                calibration=float(entry.get('calibration', calibration)),
            ))
        except (KeyError, TypeError, AttributeError) as e:
            raise ValueError(f"Fleet file {path}, entry {n}: {e!r}") from e
    logger.info(f"Loaded {len(fleet)} client profiles from {path}")
    return fleet
