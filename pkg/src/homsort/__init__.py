"""Stake-weighted secret leader election over an emulated threshold FHE domain."""

from .ceremony import SetupArtifacts, run_ceremony
from .chain import BlockProposal, ChainDriver, drive_round
from .circuits import CircuitConfig, cost_report
from .encdom import CipherHandle, DecryptionShare, ThresholdDomain, keygen
from .experiments import slp_permutations, ssle_fairness
from .simnet import AdversaryProfile, LivenessViolation, Scenario, Simulator, run
from .sortition import LocalCluster, SortitionProcess, claim, verify
from .stakes import StakeTable

__version__ = "0.1.0"

__all__ = [
    "AdversaryProfile", "BlockProposal", "ChainDriver", "CipherHandle", "CircuitConfig",
    "DecryptionShare", "LivenessViolation", "LocalCluster", "Scenario", "SetupArtifacts",
    "Simulator", "SortitionProcess", "StakeTable", "ThresholdDomain", "claim", "cost_report",
    "drive_round", "keygen", "run", "run_ceremony", "slp_permutations", "ssle_fairness", "verify",
]
