"""Green-PoW consensus primitives and a deterministic network simulator."""

from .config import Algorithm, ConfigError, DelaySpec, Engine, Partition, PowerSpec, Scenario, SimConfig
from .difficulty import DifficultyState, Target, advance, effective_rate, record_block_interval, retarget
from .energy import EnergyLedger, closed_form_first_round, closed_form_pow, closed_form_second_round, saving
from .protocol import Block, Phase, ProtocolParams, RoundTag, RunnerUpSet, Selection, SelectionKind
from .report import SimReport
from .simnet import run_replications, run_simulation
from .stochastic import HashPowerProfile, MiningRate, RandomSource, Timing, build_power_profile

__version__ = "0.1.0"
