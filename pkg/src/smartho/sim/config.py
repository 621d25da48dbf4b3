"""Scenario configuration (JSON) with validation and a stable hash."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Union

from ..control import AUTO, CachedContext, MobilityEntry
from ..pipeline import CostModel
from ..qmodel import TIME_UNITS_US, PathTopology, QueueModelError

TRADITIONAL = "traditional"
SMARTHO = "smartho"
MODES = (TRADITIONAL, SMARTHO)

# keys a config file may carry besides the scenario itself
SECTION_KEYS = {"sweep", "forwarding", "description", "t_MR"}


class ConfigError(ValueError):
    pass


def default_topology() -> dict:
    router = {"lambda": 0.0, "mu": 5.0, "buffer": 20}
    return {
        "time_unit": "ms",
        "routers_r_sd": [router],
        "routers_r_td": [router],
        "routers_sd_cu": [router, router],
        "routers_td_cu": [router, router],
        "t_pd_sDU_CU": 1.0,
        "t_pd_tDU_CU": 1.0,
        "rates_cu": {"lambda": 0.2, "mu": 1.0},
        "rates_sdu": {"lambda": 0.2, "mu": 1.0},
        "rates_tdu": {"lambda": 0.2, "mu": 1.0},
        "trigger_time": 0.05,
    }


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = TRADITIONAL
    tandem: int = 1
    ue_count: int = 4
    parallel_pings: int = 0
    ping_rate_pps: float = 50.0
    inter_ho_mean_us: int = 50_000
    min_dwell_us: int = 50_000
    start_spread_us: int = 10_000
    topology: PathTopology = field(default_factory=lambda: PathTopology.from_dict(default_topology()))
    rrh_du_delay_us: int = 100
    ue_access_delay_us: int = 1_000
    prep_fixed_us: int = 2_000
    controller_delay_us: int = 50
    guard_us: int = 500_000
    rto_us: int = 20_000
    mt_rows: Union[str, tuple] = "chain"
    chain_time_interval: Union[int, str] = 0
    cc_rows: tuple = ()
    t_mr_us: Optional[int] = None
    drop_threshold_us: Optional[float] = None
    seed: int = 1
    cost_model: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        try:
            self._validate()
        except (TypeError, ValueError, QueueModelError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def _validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.tandem < 1:
            raise ConfigError("tandem must be >= 1")
        if self.ue_count < 1:
            raise ConfigError("ue_count must be >= 1")
        if self.ue_count > 0xFFFF:
            raise ConfigError("ue_count must fit a 16-bit UE id")
        if self.tandem + 1 > 0xFF00:
            raise ConfigError("too many DUs")
        for name in ("parallel_pings", "inter_ho_mean_us", "min_dwell_us", "start_spread_us", "rrh_du_delay_us",
                     "ue_access_delay_us", "prep_fixed_us", "controller_delay_us", "rto_us"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.guard_us <= 0:
            raise ConfigError("guard_us must be positive")
        if self.rto_us == 0:
            raise ConfigError("rto_us must be positive")
        if self.ping_rate_pps < 0:
            raise ConfigError("ping_rate_pps must be >= 0")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.drop_threshold_us is not None and self.drop_threshold_us < 0:
            raise ConfigError("drop_threshold_us must be >= 0")
        topo = self.topology
        for label, rates in (("rates_cu", topo.rates_cu), ("rates_sdu", topo.rates_sdu), ("rates_tdu", topo.rates_tdu)):
            if rates.lam >= rates.mu:
                raise ConfigError(f"{label}: lambda={rates.lam} >= mu={rates.mu}, processing unit is unstable")
        if self.mt_rows != "chain" and not isinstance(self.mt_rows, tuple):
            raise ConfigError("mt_rows must be 'chain' or a list of rows")
        if isinstance(self.mt_rows, tuple):
            n_dus = self.tandem + 1
            for r in self.mt_rows:
                for du in (r.source_du_id, r.target_du_id):
                    if not 1 <= du <= n_dus:
                        raise ConfigError(f"mobility row for ue {r.ue_id} names DU {du}, topology has DUs 1..{n_dus}")
        if self.chain_time_interval != AUTO and (not isinstance(self.chain_time_interval, int) or self.chain_time_interval < 0):
            raise ConfigError("chain_time_interval must be a non-negative integer or 'auto'")

    @property
    def unit_us(self) -> float:
        return TIME_UNITS_US[self.topology.time_unit]

    @property
    def bg_rate_per_us(self) -> float:
        return self.parallel_pings * self.ping_rate_pps / 1e6

    def mobility_rows(self) -> list:
        if self.mt_rows == "chain":
            return [
                MobilityEntry(ue, k, k + 1, self.chain_time_interval)
                for ue in range(1, self.ue_count + 1)
                for k in range(1, self.tandem + 1)
            ]
        return list(self.mt_rows)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - SECTION_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {k: v for k, v in d.items() if k in known}
        try:
            if "topology" in kw:
                kw["topology"] = PathTopology.from_dict(kw["topology"])
            if "cost_model" in kw:
                kw["cost_model"] = CostModel.from_dict(kw["cost_model"])
            if isinstance(kw.get("mt_rows"), list):
                kw["mt_rows"] = tuple(MobilityEntry.from_dict(r) for r in kw["mt_rows"])
            if "cc_rows" in kw:
                kw["cc_rows"] = tuple(CachedContext.from_dict(r) for r in kw["cc_rows"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "topology":
                v = v.to_dict()
            elif f.name == "cost_model":
                v = asdict(v)
            elif f.name == "mt_rows" and isinstance(v, tuple):
                v = [r.to_dict() for r in v]
            elif f.name == "cc_rows":
                v = [asdict(r) for r in v]
            d[f.name] = v
        return d

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_json(path) -> dict:
    """Parse a JSON file; syntax errors become ConfigError with line/column."""
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc


def load_config(path) -> ScenarioConfig:
    return ScenarioConfig.from_dict(load_json(path))
